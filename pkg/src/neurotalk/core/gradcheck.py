"""Central finite-difference checks against tape gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParameterStore
from .tensor import Tape, Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| scaled by the larger of the two gradient magnitudes."""
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def numeric_grad(loss_fn: Callable[[ParameterStore], Tensor], store: ParameterStore,
                 name: str, step: float = 1e-5) -> np.ndarray:
    base = store[name].data.copy()
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for i in range(base.size):
        bumped = base.copy().reshape(-1)
        bumped[i] += step
        store.set(name, bumped.reshape(base.shape))
        up = loss_fn(store).item()
        bumped[i] -= 2 * step
        store.set(name, bumped.reshape(base.shape))
        down = loss_fn(store).item()
        flat[i] = (up - down) / (2 * step)
    store.set(name, base)
    return grad


def check_gradients(loss_fn: Callable[[ParameterStore], Tensor], store: ParameterStore,
                    names=None, step: float = 1e-5) -> dict[str, float]:
    """Relative error per parameter between tape and finite-difference gradients."""
    with Tape() as tape:
        loss = loss_fn(store)
    grads = tape.backward(loss, store)
    errors = {}
    for name in names or store.names():
        errors[name] = relative_error(grads[name], numeric_grad(loss_fn, store, name, step))
    return errors
