"""Linear algebra, RNG streams, Sobol sampling and scalar Gaussian helpers.

Everything here is a pure function of its inputs; ``SeededRng`` instances
are cheap value objects from which each task derives its own generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from .errors import ConfigurationError, DegenerateSpectrumError, DimensionError, ShapeError

_MASK64 = (1 << 64) - 1
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# Relative asymmetry tolerated by sym_eig.
SYM_TOL = 1e-10


@dataclass(frozen=True)
class SeededRng:
    """Counter-based random stream addressed by (seed, stream).

    Identical (seed, stream) pairs always reproduce the same draw sequence;
    distinct streams are statistically independent (Philox keys), which is
    what parallel QoI evaluation relies on.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, stream: int) -> "SeededRng":
        """Same seed, different stream."""
        return SeededRng(self.seed, stream)


def _fix_eigvec_signs(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Columns of the returned eigenvector matrix are orthonormal and
    sign-fixed so the largest-magnitude component is positive.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeError("matrix contains non-finite entries")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale > 0.0 and float(np.max(np.abs(a - a.T))) > SYM_TOL * scale:
        raise ShapeError("matrix is asymmetric beyond tolerance")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    w = w[::-1].copy()
    v = _fix_eigvec_signs(v[:, ::-1])
    return w, v


def gram_topk(grads: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs of (1/n) sum_j g_j g_j^T without forming the D x D matrix.

    ``grads`` holds n gradient columns of length D.  Works through the n x n
    Gram matrix: if (lam, u) is an eigenpair of (1/n) G^T G then
    v = G u / sqrt(n lam) is the matching eigenvector of the covariance.

    Returns (directions D x k with orthonormal columns, k descending eigenvalues).
    """
    g = np.asarray(grads, dtype=np.float64)
    if g.ndim != 2:
        raise DimensionError(f"expected a 2-d gradient matrix, got shape {g.shape}")
    d, n = g.shape
    if k < 1 or k > n:
        raise ConfigurationError(f"k={k} must satisfy 1 <= k <= n={n}")
    if not np.all(np.isfinite(g)):
        raise ShapeError("gradient matrix contains non-finite entries")

    gram = (g.T @ g) / n
    w, u = np.linalg.eigh(0.5 * (gram + gram.T))
    w = w[::-1]
    u = u[:, ::-1]
    top = w[:k]
    if top[0] <= 0.0:
        raise DegenerateSpectrumError("gradient covariance has no positive eigenvalue")
    floor = max(d, n) * np.finfo(np.float64).eps * top[0]
    if top[-1] <= floor:
        raise DegenerateSpectrumError(
            f"eigenvalue {k} ({top[-1]:.3e}) is degenerate relative to the leading one"
        )
    directions = g @ u[:, :k]
    directions /= np.sqrt(n * top)
    # Columns are analytically unit-norm; renormalize to clean up rounding.
    directions /= np.linalg.norm(directions, axis=0)
    return _fix_eigvec_signs(directions), top.copy()


def sobol(dim: int, n: int, skip: int = 1) -> np.ndarray:
    """First n points of the dim-dimensional Sobol sequence, starting at element ``skip``.

    Unscrambled, so output is bit-identical across runs and platforms.
    The default skip=1 drops the all-zeros point.
    """
    if not 1 <= dim <= 64:
        raise ConfigurationError(f"dim={dim} outside the supported range 1..64")
    if n < 1:
        raise ConfigurationError(f"n={n} must be >= 1")
    if skip < 0:
        raise ConfigurationError(f"skip={skip} must be >= 0")
    eng = qmc.Sobol(d=dim, scramble=False)
    if skip:
        eng.fast_forward(skip)
    with warnings.catch_warnings():
        # scipy warns when n is not a power of two; balance is irrelevant here.
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(n)


def std_normal_cdf(x):
    """Standard normal CDF, vectorized."""
    return ndtr(x)


def std_normal_pdf(x):
    """Standard normal PDF, vectorized."""
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return out if out.ndim else float(out)
