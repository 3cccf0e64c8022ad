"""Active subspace of the stochastic parameter block, and subspace similarity.

The subspace is the span of the top-k eigenvectors of the uncentered
covariance of per-example loss gradients, estimated from n (input,
perturbed-weights) samples and extracted through the n x n Gram matrix so
the D_S x D_S covariance is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import toygen
from .errors import ConfigurationError, DimensionError, NumericError
from .numkit import SeededRng, gram_topk


@dataclass(frozen=True)
class SubspaceBuildConfig:
    n: int = 100  # gradient samples
    k: int = 20  # subspace dimension
    sigma0: float = 0.05  # weight perturbation stddev
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ConfigurationError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.sigma0 <= 0:
            raise ConfigurationError("sigma0 must be positive")


@dataclass(frozen=True, eq=False)
class ActiveSubspace:
    projection: np.ndarray  # (D_S, k), orthonormal columns
    eigenvalues: np.ndarray  # (k,), descending
    anchor: np.ndarray  # theta_0^S
    config: SubspaceBuildConfig | None = None

    @property
    def k(self) -> int:
        return int(self.projection.shape[1])

    @property
    def dim(self) -> int:
        return int(self.projection.shape[0])


def build_active_subspace(
    model: toygen.ToyVae,
    dataset: list[toygen.ToySequence],
    cfg: SubspaceBuildConfig = SubspaceBuildConfig(),
    return_gradients: bool = False,
):
    """Gradient-sample the loss around theta_0^S and extract the top-k directions.

    Per sample j: one input drawn without replacement, weights
    theta^S_j ~ N(theta_0^S, sigma0^2 I) with the deterministic block frozen,
    one exact decoder-block gradient.  Deterministic for a fixed seed.
    """
    if len(dataset) < cfg.n:
        raise ConfigurationError(f"dataset size {len(dataset)} < n={cfg.n}")
    part = model.partition
    anchor = part.stochastic_values()
    gen = SeededRng(cfg.seed).generator()
    picks = gen.choice(len(dataset), size=cfg.n, replace=False)
    grads = np.empty((part.stochastic_dim, cfg.n))
    for j, pick in enumerate(picks):
        theta_s = anchor + cfg.sigma0 * gen.standard_normal(part.stochastic_dim)
        values = part.with_stochastic(theta_s)
        eps = gen.standard_normal((1, model.latent_dim))
        try:
            _, g = toygen.vae_loss_batch(
                model, values, [dataset[pick]], eps, grad_mode="stochastic"
            )
        except NumericError as exc:
            raise NumericError(f"non-finite gradient at sample {j}: {exc}") from exc
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at sample {j}")
        grads[:, j] = g
    directions, eigvals = gram_topk(grads, cfg.k)
    sub = ActiveSubspace(directions, eigvals, anchor, cfg)
    return (sub, grads) if return_gradients else sub


def expand(sub: ActiveSubspace, omega: np.ndarray) -> np.ndarray:
    """theta^S = theta_0^S + P omega."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (sub.k,):
        raise DimensionError(f"omega must have length {sub.k}, got shape {omega.shape}")
    if not np.all(np.isfinite(omega)):
        raise NumericError("omega contains non-finite entries")
    return sub.anchor + sub.projection @ omega


def random_subspace(d_s: int, k: int, rng: SeededRng) -> ActiveSubspace:
    """Column-orthonormalized standard-normal projection (similarity baseline)."""
    if k > d_s:
        raise ConfigurationError(f"k={k} exceeds D_S={d_s}")
    raw = rng.generator().standard_normal((d_s, k))
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))  # canonical orientation
    return ActiveSubspace(q, np.ones(k), np.zeros(d_s), None)


def _leading_normalized(p: np.ndarray, m: int) -> np.ndarray:
    cols = p[:, :m]
    return cols / np.linalg.norm(cols, axis=0)


def subspace_similarity(p1: np.ndarray, p2: np.ndarray, i: int, j: int) -> float:
    """Normalized Grassmann overlap of the first i / j columns, in [0, 1]."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p1.shape[0] != p2.shape[0]:
        raise DimensionError(f"ambient dims differ: {p1.shape[0]} vs {p2.shape[0]}")
    if not (1 <= i <= p1.shape[1] and 1 <= j <= p2.shape[1]):
        raise DimensionError(f"need 1 <= i <= {p1.shape[1]} and 1 <= j <= {p2.shape[1]}")
    u1 = _leading_normalized(p1, i)
    u2 = _leading_normalized(p2, j)
    return float(np.sum((u1.T @ u2) ** 2) / min(i, j))


def similarity_grid(p1: np.ndarray, p2: np.ndarray, k: int) -> np.ndarray:
    """k x k matrix with entry (i, j) = similarity of leading i vs j columns."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p1.shape[0] != p2.shape[0]:
        raise DimensionError(f"ambient dims differ: {p1.shape[0]} vs {p2.shape[0]}")
    if k > p1.shape[1] or k > p2.shape[1]:
        raise DimensionError(f"k={k} exceeds available columns")
    m = _leading_normalized(p1, k).T @ _leading_normalized(p2, k)
    cum = np.cumsum(np.cumsum(m * m, axis=0), axis=1)
    denom = np.minimum.outer(np.arange(1, k + 1), np.arange(1, k + 1))
    return cum / denom
