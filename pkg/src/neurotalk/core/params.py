"""Parameter store, initialisers, optimizers and the checkpoint container."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .tensor import DimensionError, Tensor

CHECKPOINT_MAGIC = b"NTCK"
CHECKPOINT_VERSION = 1
OPT_PREFIX = "opt/"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; same seed gives bit-identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


class ParameterStore:
    """Named trainable tensors plus optimizer state.

    Tensors are replaced (never mutated) on update, so a tensor captured by a
    live tape keeps the value it had during the forward pass.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.state: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        if name.startswith(OPT_PREFIX):
            raise KeyError(f"parameter names may not start with {OPT_PREFIX!r}")
        t = Tensor(np.array(value, dtype=np.float64), name=name)
        self._params[name] = t
        return t

    def set(self, name: str, value: np.ndarray) -> None:
        old = self._params[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != old.shape:
            raise DimensionError(f"{name}: new value {value.shape} != {old.shape}")
        self._params[name] = Tensor(value.copy(), name=name)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def scope(self, prefix: str) -> dict[str, Tensor]:
        """Parameters under ``prefix/`` keyed by the remaining suffix."""
        p = prefix.rstrip("/") + "/"
        return {k[len(p):]: v for k, v in self._params.items() if k.startswith(p)}

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._params.items()}

    def copy(self) -> "ParameterStore":
        new = ParameterStore()
        for k, v in self._params.items():
            new._params[k] = Tensor(v.data.copy(), name=k)
        new.state = {k: v.copy() for k, v in self.state.items()}
        new.step = self.step
        return new

    def num_values(self) -> int:
        return int(sum(v.data.size for v in self._params.values()))


# -- initialisation ------------------------------------------------------------


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape or (fan_in, fan_out))


def add_dense(store: ParameterStore, rng, prefix: str, n_in: int, n_out: int) -> None:
    store.add(f"{prefix}/W", glorot(rng, n_in, n_out))
    store.add(f"{prefix}/b", np.zeros(n_out))


def add_gru(store: ParameterStore, rng, prefix: str, n_in: int, hidden: int) -> None:
    w_x = np.concatenate([glorot(rng, n_in, hidden) for _ in range(3)], axis=1)
    w_h = np.concatenate([glorot(rng, hidden, hidden) for _ in range(3)], axis=1)
    store.add(f"{prefix}/W_x", w_x)
    store.add(f"{prefix}/W_h", w_h)
    store.add(f"{prefix}/b", np.zeros(3 * hidden))


def add_lstm(store: ParameterStore, rng, prefix: str, n_in: int, hidden: int) -> None:
    w_x = np.concatenate([glorot(rng, n_in, hidden) for _ in range(4)], axis=1)
    w_h = np.concatenate([glorot(rng, hidden, hidden) for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden)
    b[hidden: 2 * hidden] = 1.0  # forget gate
    store.add(f"{prefix}/W_x", w_x)
    store.add(f"{prefix}/W_h", w_h)
    store.add(f"{prefix}/b", b)


# -- optimizers ----------------------------------------------------------------


def _check_grad(store: ParameterStore, name: str, g: np.ndarray) -> None:
    if name not in store:
        raise KeyError(f"gradient for unknown parameter {name!r}")
    if np.shape(g) != store[name].shape:
        raise DimensionError(f"{name}: gradient {np.shape(g)} != parameter {store[name].shape}")


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float = 5.0):
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total <= max_norm or total == 0.0:
        return dict(grads), total
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}, total


def sgd_step(store: ParameterStore, grads: Mapping[str, np.ndarray], lr: float) -> None:
    for name, g in grads.items():
        _check_grad(store, name, g)
    for name, g in grads.items():
        store.set(name, store[name].data - lr * g)
    store.step += 1


def adam_step(store: ParameterStore, grads: Mapping[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              frozen: frozenset = frozenset()) -> None:
    """Bias-corrected Adam; moments live in ``store.state`` under ``opt/``."""
    for name, g in grads.items():
        _check_grad(store, name, g)
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        if name in frozen:
            continue
        mk, vk = f"{OPT_PREFIX}m/{name}", f"{OPT_PREFIX}v/{name}"
        m = store.state.get(mk)
        v = store.state.get(vk)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        store.state[mk], store.state[vk] = m, v
        store.set(name, store[name].data - lr * (m / c1) / (np.sqrt(v / c2) + eps))


# -- checkpoint container ------------------------------------------------------


def write_arrays(path, arrays: Mapping[str, np.ndarray]) -> None:
    """Write named float64 arrays in the NTCK container format."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_arrays(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an NTCK checkpoint")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos: pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    return out


def save_checkpoint(path, store: ParameterStore, extra: Mapping[str, np.ndarray] | None = None) -> None:
    arrays: dict[str, np.ndarray] = dict(store.arrays())
    arrays[f"{OPT_PREFIX}step"] = np.array(float(store.step))
    for k in sorted(store.state):
        arrays[k] = store.state[k]
    if extra:
        arrays.update(extra)
    write_arrays(path, arrays)


def load_checkpoint(path, prefixes_extra: tuple[str, ...] = ()) -> tuple[ParameterStore, dict]:
    """Return the store and any entries under ``prefixes_extra``."""
    arrays = read_arrays(path)
    store = ParameterStore()
    extra = {}
    for k, v in arrays.items():
        if k == f"{OPT_PREFIX}step":
            store.step = int(v)
        elif k.startswith(OPT_PREFIX):
            store.state[k] = v
        elif any(k.startswith(p) for p in prefixes_extra):
            extra[k] = v
        else:
            store.add(k, v)
    return store, extra
