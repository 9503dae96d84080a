"""PCA explained-variance analysis and polynomial kernel PCA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core.params import make_rng, read_arrays, write_arrays

EIG_TOL = 1e-12
MAX_FIT_ROWS = 2000

# target dimension per EEG feature set; None keeps the original dimension
DIMENSION_POLICY = {"1": 30, "2": 50, "3": None}


@dataclass
class PcaModel:
    mean: np.ndarray
    eigenvalues: np.ndarray  # descending
    axes: np.ndarray  # (d, d), one principal axis per column

    def scores(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.mean) @ self.axes


def fit_pca(x: np.ndarray) -> tuple[PcaModel, np.ndarray]:
    """Covariance PCA; returns the model and the cumulative explained-variance curve."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"PCA needs at least 2 samples in a 2-D array, got shape {x.shape}")
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False).reshape(x.shape[1], x.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.maximum(vals[order], 0.0)
    vecs = vecs[:, order]
    total = vals.sum()
    if total > 0:
        curve = np.cumsum(vals) / total
    else:
        curve = np.ones_like(vals)
    curve[-1] = 1.0
    return PcaModel(mean, vals, vecs), curve


@dataclass
class KpcaModel:
    """Kernel PCA with k(x, y) = (gamma * x.y + coef0) ** degree.

    ``alphas`` are the centred-kernel eigenvectors divided by sqrt(eigenvalue),
    so a centred kernel row dotted with them gives the projection. When
    ``standardize`` was requested at fit time, inputs are z-scored with the
    training mean and scale before the kernel is evaluated.
    """

    x_train: np.ndarray
    degree: int
    gamma: float
    coef0: float
    eigenvalues: np.ndarray
    alphas: np.ndarray
    row_means: np.ndarray
    grand_mean: float
    in_mean: np.ndarray
    in_scale: np.ndarray
    reduced: bool = False  # out_dim was cut to the number of usable eigenvalues
    requested_dim: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def in_dim(self) -> int:
        return self.x_train.shape[1]

    @property
    def out_dim(self) -> int:
        return self.alphas.shape[1]

    def _prepare(self, x: np.ndarray) -> np.ndarray:
        return (x - self.in_mean) / self.in_scale

    def kernel(self, x: np.ndarray) -> np.ndarray:
        return (self.gamma * (self._prepare(x) @ self.x_train.T) + self.coef0) ** self.degree


def _poly_kernel(a, b, gamma, coef0, degree):
    return (gamma * (a @ b.T) + coef0) ** degree


def fit_kpca(x: np.ndarray, out_dim: int, degree: int = 3, gamma: float | None = None,
             coef0: float = 1.0, standardize: bool = False, max_rows: int = MAX_FIT_ROWS,
             seed: int = 0) -> KpcaModel:
    x = np.asarray(x, dtype=np.float64)
    if out_dim < 1:
        raise ValueError("out_dim must be >= 1")
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a non-empty (n, d) matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("KPCA input contains non-finite values")
    n, d = x.shape
    gamma = 1.0 / d if gamma is None else float(gamma)
    if n > max_rows:
        keep = np.sort(make_rng(seed).choice(n, size=max_rows, replace=False))
        x = x[keep]
        n = max_rows
    if standardize:
        in_mean = x.mean(axis=0)
        in_scale = x.std(axis=0)
        in_scale[in_scale < 1e-12] = 1.0
    else:
        in_mean, in_scale = np.zeros(d), np.ones(d)
    xs = (x - in_mean) / in_scale

    k = _poly_kernel(xs, xs, gamma, coef0, degree)
    row_means = k.mean(axis=0)
    grand = float(k.mean())
    kc = k - row_means[None, :] - row_means[:, None] + grand
    vals, vecs = np.linalg.eigh((kc + kc.T) / 2)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    usable = int(np.sum(vals > EIG_TOL))
    dim = min(out_dim, usable)
    if dim < 1:
        raise ValueError("centred kernel matrix has no eigenvalue above tolerance")
    vals, vecs = vals[:dim], vecs[:, :dim]
    # fix the sign so the largest-magnitude entry of each eigenvector is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[pivot, np.arange(dim)])
    return KpcaModel(xs, degree, gamma, coef0, vals, vecs / np.sqrt(vals), row_means, grand,
                     in_mean, in_scale, reduced=dim < out_dim, requested_dim=out_dim)


def kpca_project(m: KpcaModel, x: np.ndarray) -> np.ndarray:
    """Project one vector (d,) or a batch (n, d) onto the retained components."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != m.in_dim:
        raise ValueError(f"input has dimension {x2.shape[1]}, model expects {m.in_dim}")
    k = m.kernel(x2)
    kc = k - m.row_means[None, :] - k.mean(axis=1, keepdims=True) + m.grand_mean
    out = kc @ m.alphas
    return out[0] if single else out


def training_projections(m: KpcaModel) -> np.ndarray:
    """Projections of the (possibly subsampled) training rows: v * sqrt(lambda)."""
    return m.alphas * m.eigenvalues


def dimension_policy(set_id, override: int | None = None) -> int | None:
    """Target dimension for a feature set; ``None`` means keep the original."""
    key = str(set_id)
    if key not in DIMENSION_POLICY:
        raise ValueError(f"unknown feature set {set_id!r}; expected one of 1, 2, 3")
    if override is not None:
        if override < 1:
            raise ValueError("dimension override must be >= 1")
        return override
    return DIMENSION_POLICY[key]


# -- persistence ---------------------------------------------------------------


def kpca_arrays(m: KpcaModel) -> dict[str, np.ndarray]:
    return {
        "kpca/x_train": m.x_train,
        "kpca/eigenvalues": m.eigenvalues,
        "kpca/alphas": m.alphas,
        "kpca/row_means": m.row_means,
        "kpca/in_mean": m.in_mean,
        "kpca/in_scale": m.in_scale,
        "kpca/params": np.array([m.degree, m.gamma, m.coef0, m.grand_mean,
                                 float(m.reduced), m.requested_dim], dtype=np.float64),
    }


def kpca_from_arrays(a: dict[str, np.ndarray]) -> KpcaModel:
    try:
        degree, gamma, coef0, grand, reduced, requested = a["kpca/params"]
        return KpcaModel(a["kpca/x_train"], int(degree), float(gamma), float(coef0),
                         a["kpca/eigenvalues"], a["kpca/alphas"], a["kpca/row_means"],
                         float(grand), a["kpca/in_mean"], a["kpca/in_scale"],
                         bool(reduced), int(requested))
    except KeyError as e:
        raise ValueError(f"checkpoint is missing KPCA entry {e}") from None


def save_kpca(path, m: KpcaModel) -> None:
    write_arrays(path, kpca_arrays(m))


def load_kpca(path) -> KpcaModel:
    return kpca_from_arrays(read_arrays(path))
