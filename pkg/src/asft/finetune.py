"""Uncertainty-guided design space, KL constraint, and the two optimizers.

Candidates are diagonal Gaussians (mu_f, sigma_f) boxed around the VI
posterior (mean within +/-3 sigma_post, stddev within [0.75, 1.25]
sigma_post) and constrained by KL(candidate || posterior) <= delta_KL.
Both optimizers spend exactly ``budget`` QoI evaluations: Bayesian
optimization as init_candidates Sobol draws plus bo_iterations GP-guided
suggestions, REINFORCE as one evaluation per policy update.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import (
    ConditioningError,
    ConfigurationError,
    DegenerateEvaluationError,
    DimensionError,
    NumericError,
)
from .nnet import AdamState, adam_step
from .numkit import SeededRng, sobol, std_normal_cdf, std_normal_pdf
from .posterior import SubspaceGaussian, kl_diag_gauss

__all__ = [
    "DesignSpace",
    "FinetuneConfig",
    "GpModel",
    "RunTrace",
    "TraceRecord",
    "bo_optimize",
    "default_delta_kl",
    "expected_improvement",
    "gp_fit",
    "gp_predict",
    "kl_diag_gauss",
    "make_design_space",
    "noisy_expected_improvement",
    "reinforce_optimize",
]

_SQRT5 = np.sqrt(5.0)


# ---------------------------------------------------------------------------
# Design space and KL threshold


@dataclass(frozen=True, eq=False)
class DesignSpace:
    """Box bounds for (mu_f, sigma_f) around the reference posterior."""

    posterior: SubspaceGaussian
    mu_lower: np.ndarray
    mu_upper: np.ndarray
    sigma_lower: np.ndarray
    sigma_upper: np.ndarray

    @property
    def k(self) -> int:
        return self.posterior.k

    @property
    def dim(self) -> int:
        """Dimension of the rescaled optimization box (mu block + sigma block)."""
        return 2 * self.k

    def from_unit(self, x: np.ndarray) -> SubspaceGaussian:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionError(f"expected a {self.dim}-vector, got {x.shape}")
        k = self.k
        mu = self.mu_lower + x[:k] * (self.mu_upper - self.mu_lower)
        sigma = self.sigma_lower + x[k:] * (self.sigma_upper - self.sigma_lower)
        return SubspaceGaussian(mu, sigma)

    def to_unit(self, cand: SubspaceGaussian) -> np.ndarray:
        mu = (cand.mean - self.mu_lower) / (self.mu_upper - self.mu_lower)
        sigma = (cand.stddev - self.sigma_lower) / (self.sigma_upper - self.sigma_lower)
        return np.concatenate([mu, sigma])

    def clip(self, mu: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.clip(mu, self.mu_lower, self.mu_upper),
            np.clip(sigma, self.sigma_lower, self.sigma_upper),
        )

    def contains(self, cand: SubspaceGaussian, tol: float = 1e-12) -> bool:
        return bool(
            np.all(cand.mean >= self.mu_lower - tol)
            and np.all(cand.mean <= self.mu_upper + tol)
            and np.all(cand.stddev >= self.sigma_lower - tol)
            and np.all(cand.stddev <= self.sigma_upper + tol)
        )


def make_design_space(post: SubspaceGaussian) -> DesignSpace:
    if np.any(post.stddev <= 0):
        raise ValueError("design space needs a strictly positive posterior stddev")
    return DesignSpace(
        posterior=post,
        mu_lower=post.mean - 3.0 * post.stddev,
        mu_upper=post.mean + 3.0 * post.stddev,
        sigma_lower=0.75 * post.stddev,
        sigma_upper=1.25 * post.stddev,
    )


def default_delta_kl(space: DesignSpace, fraction: float = 0.7) -> float:
    """fraction x the largest KL over the four uniform box corners."""
    post = space.posterior
    corners = []
    for sign in (1.0, -1.0):
        for scale in (0.75, 1.25):
            cand = SubspaceGaussian(post.mean + sign * 3.0 * post.stddev, scale * post.stddev)
            corners.append(kl_diag_gauss(cand, post))
    return fraction * max(corners)


# ---------------------------------------------------------------------------
# Gaussian process with Matern 5/2 ARD kernel


def _matern52_cross(x1: np.ndarray, x2: np.ndarray, ell: np.ndarray, sf2: float) -> np.ndarray:
    diff = (x1[:, None, :] - x2[None, :, :]) / ell
    r2 = np.sum(diff * diff, axis=2)
    t = _SQRT5 * np.sqrt(r2)
    return sf2 * (1.0 + t + (5.0 / 3.0) * r2) * np.exp(-t)


@dataclass(eq=False)
class GpModel:
    x: np.ndarray  # (m, d) inputs in the unit box
    y: np.ndarray  # raw outcomes
    y_mean: float
    y_std: float
    ell: np.ndarray  # per-dimension lengthscales
    sf2: float  # signal variance (standardized units)
    sn2: float  # noise variance (standardized units), >= noise floor
    chol: np.ndarray  # lower Cholesky of K = Kf + sn2 I
    alpha: np.ndarray  # K^{-1} (y standardized)
    noise_floor: float

    @property
    def n_train(self) -> int:
        return int(self.x.shape[0])


def _chol_with_jitter(k_mat: np.ndarray) -> tuple[np.ndarray, float]:
    scale = float(np.mean(np.diag(k_mat)))
    for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            return cholesky(k_mat + jitter * scale * np.eye(len(k_mat)), lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise ConditioningError("kernel matrix not positive definite after jitter escalation")


def _nll_and_grad(theta: np.ndarray, d2: np.ndarray, ys: np.ndarray, d: int):
    m = ys.size
    ell = np.exp(theta[:d])
    sf2 = np.exp(theta[d])
    sn2 = np.exp(theta[d + 1])
    scaled2 = d2 / (ell * ell)
    r2 = scaled2.sum(axis=2)
    t = _SQRT5 * np.sqrt(r2)
    base = sf2 * np.exp(-t)
    kf = base * (1.0 + t + (5.0 / 3.0) * r2)
    k_mat = kf + sn2 * np.eye(m)
    try:
        low = cholesky(k_mat, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = cho_solve((low, True), ys)
    nll = (
        0.5 * float(ys @ alpha)
        + float(np.sum(np.log(np.diag(low))))
        + 0.5 * m * np.log(2.0 * np.pi)
    )
    k_inv = cho_solve((low, True), np.eye(m))
    w = k_inv - np.outer(alpha, alpha)
    c = (5.0 / 3.0) * base * (1.0 + t)
    grad = np.empty_like(theta)
    grad[:d] = 0.5 * np.einsum("ij,iju->u", w * c, scaled2)
    grad[d] = 0.5 * float(np.sum(w * kf))
    grad[d + 1] = 0.5 * sn2 * float(np.trace(w))
    return nll, grad


def gp_fit(
    x: np.ndarray,
    y: np.ndarray,
    noise_floor: float = 1e-6,
    seed: int = 0,
    restarts: int = 5,
    fixed_hparams: dict | None = None,
) -> GpModel:
    """Fit hyperparameters by restarted L-BFGS-B on the log marginal likelihood.

    Outcomes are standardized internally; ``fixed_hparams`` (ell, sf2, sn2 in
    standardized units) skips the optimization, which the direct-solve oracle
    tests rely on.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DimensionError(f"bad training shapes {x.shape} / {y.shape}")
    if y.size < 2:
        raise ConfigurationError("GP fit needs at least 2 observations")
    if np.min(x) < -1e-9 or np.max(x) > 1 + 1e-9:
        raise ConfigurationError("inputs must lie in the unit box")
    m, d = x.shape
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std < 1e-12:
        y_std = 1.0
    ys = (y - y_mean) / y_std

    if fixed_hparams is not None:
        ell = np.asarray(fixed_hparams["ell"], dtype=np.float64) * np.ones(d)
        sf2 = float(fixed_hparams["sf2"])
        sn2 = max(float(fixed_hparams["sn2"]), noise_floor)
    else:
        d2 = (x[:, None, :] - x[None, :, :]) ** 2
        bounds = (
            [(np.log(0.03), np.log(30.0))] * d
            + [(np.log(1e-4), np.log(1e4))]
            + [(np.log(noise_floor), np.log(4.0))]
        )
        gen = SeededRng(seed, stream=17).generator()
        starts = [
            np.concatenate([np.full(d, np.log(0.5)), [0.0, np.log(max(1e-2, noise_floor))]])
        ]
        for _ in range(restarts - 1):
            starts.append(
                np.concatenate(
                    [
                        gen.uniform(np.log(0.1), np.log(3.0), size=d),
                        [gen.uniform(np.log(0.1), np.log(10.0))],
                        [gen.uniform(np.log(noise_floor), np.log(0.5))],
                    ]
                )
            )
        best_theta, best_nll = None, np.inf
        for theta0 in starts:
            res = minimize(
                _nll_and_grad,
                theta0,
                args=(d2, ys, d),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 35},
            )
            if res.fun < best_nll:
                best_nll, best_theta = res.fun, res.x
        ell = np.exp(best_theta[:d])
        sf2 = float(np.exp(best_theta[d]))
        sn2 = float(np.exp(best_theta[d + 1]))

    kf = _matern52_cross(x, x, ell, sf2)
    low, _ = _chol_with_jitter(kf + sn2 * np.eye(m))
    alpha = cho_solve((low, True), ys)
    return GpModel(x, y, y_mean, y_std, ell, sf2, sn2, low, alpha, noise_floor)


def gp_predict(gp: GpModel, x: np.ndarray):
    """Posterior mean and (latent) stddev, de-standardized; accepts a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    ks = _matern52_cross(xs, gp.x, gp.ell, gp.sf2)
    mean = gp.y_mean + gp.y_std * (ks @ gp.alpha)
    w = solve_triangular(gp.chol, ks.T, lower=True)
    var = np.maximum(gp.sf2 - np.sum(w * w, axis=0), 0.0)
    std = gp.y_std * np.sqrt(var)
    if single:
        return float(mean[0]), float(std[0])
    return mean, std


def _gp_predict_with_grad(gp: GpModel, x: np.ndarray):
    """(mean, std, dmean/dx, dstd/dx) at a single point."""
    diff = x[None, :] - gp.x  # (m, d)
    r2 = np.sum((diff / gp.ell) ** 2, axis=1)
    t = _SQRT5 * np.sqrt(r2)
    base = gp.sf2 * np.exp(-t)
    ks = base * (1.0 + t + (5.0 / 3.0) * r2)
    c = (5.0 / 3.0) * base * (1.0 + t)  # -dk/d(diff^2/ell^2) scale
    dk = -c[:, None] * diff / (gp.ell * gp.ell)  # (m, d)

    mean_s = float(ks @ gp.alpha)
    dmean = gp.y_std * (dk.T @ gp.alpha)
    kinv_ks = cho_solve((gp.chol, True), ks)
    var = max(float(gp.sf2 - ks @ kinv_ks), 0.0)
    dvar = -2.0 * (dk.T @ kinv_ks)
    std_s = np.sqrt(var)
    if std_s > 1e-12:
        dstd = gp.y_std * dvar / (2.0 * std_s)
    else:
        dstd = np.zeros_like(x)
    return gp.y_mean + gp.y_std * mean_s, gp.y_std * std_s, dmean, dstd


# ---------------------------------------------------------------------------
# Acquisition functions


def expected_improvement(mean: float, stddev: float, best: float) -> float:
    """Closed-form EI for maximization; degenerates to max(mean-best, 0)."""
    if stddev < 0:
        raise ValueError("stddev must be nonnegative")
    if stddev == 0.0:
        return max(mean - best, 0.0)
    z = (mean - best) / stddev
    return float((mean - best) * std_normal_cdf(z) + stddev * std_normal_pdf(z))


def _ei_with_partials(mean: float, stddev: float, best: float):
    if stddev <= 1e-14:
        val = max(mean - best, 0.0)
        return val, (1.0 if mean > best else 0.0), 0.0
    z = (mean - best) / stddev
    cdf = float(std_normal_cdf(z))
    pdf = float(std_normal_pdf(z))
    return (mean - best) * cdf + stddev * pdf, cdf, pdf


def _pof_with_partials(mean: float, stddev: float):
    """P(value >= 0) under N(mean, stddev^2) with partials."""
    if stddev <= 1e-14:
        return (1.0 if mean >= 0 else 0.0), 0.0, 0.0
    u = mean / stddev
    pdf = float(std_normal_pdf(u))
    return float(std_normal_cdf(u)), pdf / stddev, -pdf * u / stddev


def _joint_posterior(gp: GpModel, pts: np.ndarray):
    """Standardized latent posterior (mean, cov) at ``pts`` jointly."""
    k_cross = _matern52_cross(pts, gp.x, gp.ell, gp.sf2)
    mean = k_cross @ gp.alpha
    w = solve_triangular(gp.chol, k_cross.T, lower=True)
    cov = _matern52_cross(pts, pts, gp.ell, gp.sf2) - w.T @ w
    return mean, cov


def _nei_from_draws(gp: GpModel, x: np.ndarray, z_draws: np.ndarray) -> float:
    pts = np.vstack([gp.x, x[None, :]])
    mean, cov = _joint_posterior(gp, pts)
    cov = 0.5 * (cov + cov.T)
    low, _ = _chol_with_jitter(cov + 1e-12 * np.eye(len(cov)))
    f = mean[None, :] + z_draws @ low.T  # (draws, m+1)
    imp = np.maximum(f[:, -1] - f[:, :-1].max(axis=1), 0.0)
    return float(gp.y_std * imp.mean())


def noisy_expected_improvement(
    gp: GpModel, x: np.ndarray, mc_samples: int = 32, rng: SeededRng = SeededRng(0)
) -> float:
    """MC noisy EI: improvement of x over the per-draw best at observed inputs."""
    z = rng.generator().standard_normal((mc_samples, gp.n_train + 1))
    return _nei_from_draws(gp, np.asarray(x, dtype=np.float64), z)


def _maximize_acquisition(
    value_fn,
    dim: int,
    skip: int,
    grad: bool,
    n_starts: int = 64,
    n_refine: int = 8,
    screen_fn=None,
):
    """Screen Sobol starts, locally ascend the best few with L-BFGS-B.

    ``screen_fn`` evaluates a whole (n, dim) batch at once for the ranking
    pass; refinement always goes point by point.
    """
    starts = sobol(dim, n_starts, skip=skip)
    if screen_fn is not None:
        screen = np.asarray(screen_fn(starts))
    elif grad:
        screen = np.array([value_fn(s)[0] for s in starts])
    else:
        screen = np.array([value_fn(s) for s in starts])
    order = np.argsort(screen)[::-1]
    best_x = starts[order[0]].copy()
    best_v = screen[order[0]]
    bounds = [(0.0, 1.0)] * dim
    for idx in order[:n_refine]:
        if grad:
            fun = lambda u: tuple(-np.asarray(v) for v in value_fn(u))
            res = minimize(
                fun, starts[idx], jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": 25},
            )
        else:
            res = minimize(
                lambda u: -value_fn(u), starts[idx], method="L-BFGS-B", bounds=bounds,
                options={"maxiter": 15},
            )
        if -res.fun > best_v:
            best_v = -res.fun
            best_x = np.clip(res.x, 0.0, 1.0)
    return best_x


# ---------------------------------------------------------------------------
# Run configuration and traces


@dataclass
class FinetuneConfig:
    delta_kl: float
    budget: int = 30
    init_candidates: int = 5
    bo_iterations: int = 25
    acquisition: str = "ei"  # "ei" | "nei"
    nei_draws: int = 32
    reinforce_iterations: int = 30
    reinforce_lr: float = 0.005
    reinforce_m: int = 10
    penalty_value: float = -1e6
    use_baseline: bool = False
    exact_constraint: bool = False
    noise_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.delta_kl <= 0:
            raise ConfigurationError("delta_kl must be positive")
        if self.acquisition not in ("ei", "nei"):
            raise ConfigurationError(f"unknown acquisition {self.acquisition!r}")


@dataclass
class TraceRecord:
    index: int
    phase: str  # "init" | "bo" | "reinforce"
    mu: np.ndarray
    sigma: np.ndarray
    qoi: float
    kl: float
    feasible: bool
    best_so_far: float  # nan until a feasible candidate exists
    wall_ms: float


@dataclass
class RunTrace:
    method: str
    delta_kl: float
    records: list[TraceRecord] = field(default_factory=list)
    no_feasible_init: bool = False

    def best(self) -> TraceRecord | None:
        """Best feasible record; earliest evaluation wins ties."""
        best = None
        for rec in self.records:
            if rec.feasible and (best is None or rec.qoi > best.qoi):
                best = rec
        return best

    @property
    def n_evaluations(self) -> int:
        return len(self.records)


class _Bookkeeper:
    """Shared evaluation wrapper: penalties, feasibility, best-so-far, timing."""

    def __init__(self, qoi_fn, space: DesignSpace, cfg: FinetuneConfig, method: str):
        self.qoi_fn = qoi_fn
        self.space = space
        self.cfg = cfg
        self.trace = RunTrace(method=method, delta_kl=cfg.delta_kl)
        self.best = np.nan

    def evaluate(self, cand: SubspaceGaussian, phase: str, omegas=None) -> tuple[float, bool]:
        t0 = time.perf_counter()
        try:
            if omegas is None:
                q = float(self.qoi_fn(cand))
            else:
                q = float(self.qoi_fn(cand, omegas=omegas))
            failed = False
        except (DegenerateEvaluationError, NumericError):
            q = self.cfg.penalty_value
            failed = True
        kl = kl_diag_gauss(cand, self.space.posterior)
        feasible = (not failed) and kl <= self.cfg.delta_kl
        if feasible and (np.isnan(self.best) or q > self.best):
            self.best = q
        self.trace.records.append(
            TraceRecord(
                index=len(self.trace.records),
                phase=phase,
                mu=cand.mean.copy(),
                sigma=cand.stddev.copy(),
                qoi=q,
                kl=kl,
                feasible=feasible,
                best_so_far=self.best,
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        return q, feasible


# ---------------------------------------------------------------------------
# Bayesian optimization


def bo_optimize(qoi_fn, space: DesignSpace, cfg: FinetuneConfig, rng: SeededRng) -> RunTrace:
    """Constrained GP Bayesian optimization over the rescaled unit box.

    Objective GP on QoI, second GP on the constraint slack (delta_kl - kl),
    acquisition = EI (or NEI) x probability of feasibility, maximized by
    Sobol screening plus bounded quasi-Newton refinement.
    """
    if cfg.init_candidates + cfg.bo_iterations != cfg.budget:
        raise ConfigurationError(
            f"init ({cfg.init_candidates}) + iterations ({cfg.bo_iterations}) "
            f"must equal budget ({cfg.budget})"
        )
    d = space.dim
    book = _Bookkeeper(qoi_fn, space, cfg, method="bo")
    xs: list[np.ndarray] = []
    qois: list[float] = []
    slacks: list[float] = []

    def run_candidate(x_unit: np.ndarray, phase: str) -> None:
        cand = space.from_unit(x_unit)
        q, _ = book.evaluate(cand, phase)
        xs.append(np.asarray(x_unit, dtype=np.float64))
        qois.append(q)
        slacks.append(cfg.delta_kl - book.trace.records[-1].kl)

    for x_unit in sobol(d, cfg.init_candidates, skip=1):
        run_candidate(x_unit, "init")
    if np.isnan(book.best):
        book.trace.no_feasible_init = True

    for it in range(cfg.bo_iterations):
        x_arr = np.array(xs)
        obj_gp = gp_fit(x_arr, np.array(qois), cfg.noise_floor, seed=cfg.seed)
        con_gp = None
        if not cfg.exact_constraint:
            con_gp = gp_fit(x_arr, np.array(slacks), cfg.noise_floor, seed=cfg.seed + 1)
        best_for_ei = book.best if not np.isnan(book.best) else max(qois)

        if cfg.acquisition == "ei":

            def acq(u: np.ndarray):
                m_o, s_o, dm, ds = _gp_predict_with_grad(obj_gp, u)
                ei, dei_dm, dei_ds = _ei_with_partials(m_o, s_o, best_for_ei)
                g_ei = dei_dm * dm + dei_ds * ds
                if con_gp is None:
                    cand = space.from_unit(u)
                    pof = 1.0 if kl_diag_gauss(cand, space.posterior) <= cfg.delta_kl else 0.0
                    return ei * pof, g_ei * pof
                m_c, s_c, dm_c, ds_c = _gp_predict_with_grad(con_gp, u)
                pof, dpof_dm, dpof_ds = _pof_with_partials(m_c, s_c)
                g = g_ei * pof + ei * (dpof_dm * dm_c + dpof_ds * ds_c)
                return ei * pof, g

            def acq_screen(pts: np.ndarray):
                means, stds = gp_predict(obj_gp, pts)
                gap = means - best_for_ei
                safe = np.where(stds > 1e-14, stds, 1.0)
                z = gap / safe
                ei = np.where(
                    stds > 1e-14,
                    gap * std_normal_cdf(z) + stds * std_normal_pdf(z),
                    np.maximum(gap, 0.0),
                )
                if con_gp is None:
                    pof = np.array(
                        [
                            1.0
                            if kl_diag_gauss(space.from_unit(p), space.posterior)
                            <= cfg.delta_kl
                            else 0.0
                            for p in pts
                        ]
                    )
                else:
                    m_c, s_c = gp_predict(con_gp, pts)
                    safe_c = np.where(s_c > 1e-14, s_c, 1.0)
                    pof = np.where(
                        s_c > 1e-14, std_normal_cdf(m_c / safe_c), (m_c >= 0).astype(float)
                    )
                return ei * pof

            x_next = _maximize_acquisition(
                acq, d, skip=1 + 64 * (it + 1), grad=True, screen_fn=acq_screen
            )
        else:
            z_draws = (
                SeededRng(cfg.seed, stream=100 + it)
                .generator()
                .standard_normal((cfg.nei_draws, obj_gp.n_train + 1))
            )

            def acq(u: np.ndarray):
                nei = _nei_from_draws(obj_gp, u, z_draws)
                if con_gp is None:
                    cand = space.from_unit(u)
                    pof = 1.0 if kl_diag_gauss(cand, space.posterior) <= cfg.delta_kl else 0.0
                else:
                    m_c, s_c = gp_predict(con_gp, u)
                    pof, _, _ = _pof_with_partials(m_c, s_c)
                return nei * pof

            x_next = _maximize_acquisition(
                acq, d, skip=1 + 64 * (it + 1), grad=False, n_refine=4
            )
        run_candidate(x_next, "bo")
    return book.trace


# ---------------------------------------------------------------------------
# REINFORCE


def reinforce_optimize(qoi_fn, space: DesignSpace, cfg: FinetuneConfig, rng: SeededRng) -> RunTrace:
    """Score-function ascent on the policy (mu_f, sigma_f), clamped to the box.

    Per iteration: draw M omegas from the current policy, one QoI evaluation
    of the induced model pool (reward), Adam step on
    reward * grad log-likelihood of the drawn omegas, then clamp.  Candidates
    violating the KL constraint keep their evaluation but the reward is
    replaced by the penalty value.
    """
    if cfg.reinforce_iterations != cfg.budget:
        raise ConfigurationError(
            f"reinforce_iterations ({cfg.reinforce_iterations}) must equal "
            f"budget ({cfg.budget})"
        )
    k = space.k
    mu = space.posterior.mean.copy()
    sigma = space.posterior.stddev.copy()
    mu, sigma = space.clip(mu, sigma)
    gen = rng.generator()
    adam = AdamState(lr=cfg.reinforce_lr)
    book = _Bookkeeper(qoi_fn, space, cfg, method="reinforce")
    baseline = 0.0
    have_baseline = False

    for _ in range(cfg.reinforce_iterations):
        cand = SubspaceGaussian(mu.copy(), sigma.copy())
        omegas = cand.draw(gen, cfg.reinforce_m)
        q, feasible = book.evaluate(cand, "reinforce", omegas=omegas)
        reward = q if feasible else cfg.penalty_value
        if cfg.use_baseline:
            # short-memory moving average: a long-lag baseline trails the
            # reward during steady ascent and re-inflates the update variance
            effective = reward - baseline if have_baseline else 0.0
            baseline = reward if not have_baseline else 0.5 * baseline + 0.5 * reward
            have_baseline = True
        else:
            effective = reward
        centered = omegas - mu
        score_mu = (centered / sigma**2).sum(axis=0)
        score_sigma = ((centered**2 - sigma**2) / sigma**3).sum(axis=0)
        grad_ascent = effective * np.concatenate([score_mu, score_sigma])
        psi = adam_step(adam, np.concatenate([mu, sigma]), -grad_ascent)
        mu, sigma = space.clip(psi[:k], psi[k:])
    return book.trace
