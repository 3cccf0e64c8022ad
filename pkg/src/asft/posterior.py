"""Variational posterior over subspace coordinates, and model sampling.

The posterior is a diagonal Gaussian over omega fitted by minimizing the
batch-mean VAE loss at expanded weights plus KL(q || prior)/dataset_size,
with pathwise (reparameterized) gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import nnet, toygen
from .errors import DimensionError, NumericError, TrainingError
from .numkit import SeededRng
from .subspace import ActiveSubspace, expand


@dataclass(frozen=True, eq=False)
class SubspaceGaussian:
    """Diagonal Gaussian over omega; the VI posterior or a fine-tune candidate.

    stddev must be strictly positive for anything probabilistic; zero is
    allowed only so the point-mass test hook can exist.
    """

    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "stddev", np.asarray(self.stddev, dtype=np.float64))
        if self.mean.shape != self.stddev.shape or self.mean.ndim != 1:
            raise DimensionError("mean and stddev must be equal-length vectors")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.stddev))):
            raise NumericError("non-finite distribution parameters")
        if np.any(self.stddev < 0):
            raise ValueError("stddev must be nonnegative")

    @property
    def k(self) -> int:
        return int(self.mean.size)

    @classmethod
    def point_mass(cls, mean: np.ndarray) -> "SubspaceGaussian":
        """sigma = 0 test hook: sampling returns the mean exactly."""
        mean = np.asarray(mean, dtype=np.float64)
        return cls(mean, np.zeros_like(mean))

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + self.stddev * gen.standard_normal((size, self.k))


def kl_diag_gauss(p_f: SubspaceGaussian, p_post: SubspaceGaussian) -> float:
    """Closed-form KL(p_f || p_post) for diagonal Gaussians."""
    if p_f.k != p_post.k:
        raise DimensionError(f"dimension mismatch: {p_f.k} vs {p_post.k}")
    if np.any(p_f.stddev <= 0) or np.any(p_post.stddev <= 0):
        raise ValueError("KL requires strictly positive stddevs")
    var_ratio = (p_f.stddev / p_post.stddev) ** 2
    shift = ((p_f.mean - p_post.mean) / p_post.stddev) ** 2
    return float(np.sum(np.log(p_post.stddev / p_f.stddev) + 0.5 * (var_ratio + shift) - 0.5))


@dataclass(frozen=True)
class ViConfig:
    prior_stddev: float = 5.0
    lr: float = 0.001
    iterations: int = 2000
    batch_size: int = 32
    mc_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.prior_stddev, self.lr, self.iterations, self.batch_size, self.mc_samples) <= 0:
            raise ValueError("all ViConfig fields must be positive")


def elbo_terms(
    model: toygen.ToyVae,
    sub: ActiveSubspace,
    q: SubspaceGaussian,
    batch: list[toygen.ToySequence],
    prior_stddev: float,
    eps_omega: np.ndarray,
    eps_z: np.ndarray,
    dataset_size: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and its exact pathwise gradient w.r.t. (mu, log sigma) for fixed noise.

    eps_omega: (mc, k); eps_z: (mc, batch, latent).  The fixed-noise form is
    what common-random-number finite differencing checks against.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    part = model.partition
    mu, sig = q.mean, q.stddev
    mc = eps_omega.shape[0]
    data_loss = 0.0
    g_mu = np.zeros(q.k)
    g_logsig = np.zeros(q.k)
    for m in range(mc):
        omega = mu + sig * eps_omega[m]
        values = part.with_stochastic(expand(sub, omega))
        try:
            losses, g_dec = toygen.vae_loss_batch(
                model, values, batch, eps_z[m], grad_mode="stochastic"
            )
        except NumericError as exc:
            raise NumericError(f"non-finite loss in ELBO batch (mc sample {m}): {exc}") from exc
        data_loss += float(losses.mean())
        g_omega = sub.projection.T @ (g_dec / len(batch))
        g_mu += g_omega
        g_logsig += g_omega * sig * eps_omega[m]
    data_loss /= mc
    g_mu /= mc
    g_logsig /= mc

    prior = SubspaceGaussian(np.zeros(q.k), np.full(q.k, float(prior_stddev)))
    kl = kl_diag_gauss(q, prior) / dataset_size
    rho2 = float(prior_stddev) ** 2
    g_mu += mu / rho2 / dataset_size
    g_logsig += (sig**2 / rho2 - 1.0) / dataset_size
    return data_loss + kl, g_mu, g_logsig


def elbo_loss(
    model: toygen.ToyVae,
    sub: ActiveSubspace,
    q: SubspaceGaussian,
    batch: list[toygen.ToySequence],
    prior_stddev: float,
    rng: SeededRng,
    dataset_size: int | None = None,
    mc_samples: int = 1,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Reparameterized ELBO loss; returns (loss, grad_mu, grad_log_sigma)."""
    gen = rng.generator()
    eps_omega = gen.standard_normal((mc_samples, q.k))
    eps_z = gen.standard_normal((mc_samples, len(batch), model.latent_dim))
    n = dataset_size if dataset_size is not None else len(batch)
    return elbo_terms(model, sub, q, batch, prior_stddev, eps_omega, eps_z, n)


def fit_posterior(
    model: toygen.ToyVae,
    sub: ActiveSubspace,
    dataset: list[toygen.ToySequence],
    cfg: ViConfig = ViConfig(),
) -> tuple[SubspaceGaussian, list[float]]:
    """Adam on (mu, log sigma); returns the fitted Gaussian and the loss trace."""
    if not dataset:
        raise ValueError("dataset must be nonempty")
    k = sub.k
    gen = SeededRng(cfg.seed).generator()
    mu = np.zeros(k)
    log_sig = np.zeros(k)
    state = nnet.AdamState(lr=cfg.lr)
    trace = []
    n = len(dataset)
    bs = min(cfg.batch_size, n)
    for it in range(cfg.iterations):
        idx = gen.choice(n, size=bs, replace=False)
        batch = [dataset[i] for i in idx]
        eps_omega = gen.standard_normal((cfg.mc_samples, k))
        eps_z = gen.standard_normal((cfg.mc_samples, bs, model.latent_dim))
        q = SubspaceGaussian(mu, np.exp(log_sig))
        try:
            loss, g_mu, g_logsig = elbo_terms(
                model, sub, q, batch, cfg.prior_stddev, eps_omega, eps_z, n
            )
        except NumericError as exc:
            raise TrainingError(f"VI diverged at iteration {it}: {exc}", it) from exc
        trace.append(loss)
        psi = nnet.adam_step(state, np.concatenate([mu, log_sig]), np.concatenate([g_mu, g_logsig]))
        mu, log_sig = psi[:k], psi[k:]
    return SubspaceGaussian(mu, np.exp(log_sig)), trace


def sample_models(
    model: toygen.ToyVae,
    sub: ActiveSubspace,
    dist: SubspaceGaussian,
    m: int,
    rng: SeededRng,
) -> list[np.ndarray]:
    """M full parameter vectors with theta^S = expand(omega_m), theta^D frozen."""
    if m < 1:
        raise ValueError("m must be >= 1")
    omegas = dist.draw(rng.generator(), m)
    return models_from_omegas(model, sub, omegas)


def models_from_omegas(
    model: toygen.ToyVae, sub: ActiveSubspace, omegas: np.ndarray
) -> list[np.ndarray]:
    omegas = np.atleast_2d(np.asarray(omegas, dtype=np.float64))
    return [model.partition.with_stochastic(expand(sub, w)) for w in omegas]


def save_posterior(path, dist: SubspaceGaussian, prior_stddev: float, seed: int) -> None:
    payload = {
        "k": dist.k,
        "mu": dist.mean.tolist(),
        "sigma": dist.stddev.tolist(),
        "prior_stddev": prior_stddev,
        "seed": seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_posterior(path) -> tuple[SubspaceGaussian, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    dist = SubspaceGaussian(np.array(payload["mu"]), np.array(payload["sigma"]))
    if dist.k != payload["k"]:
        raise ValueError(f"posterior file k={payload['k']} does not match arrays")
    return dist, payload
