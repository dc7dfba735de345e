"""Priors on the transfer function and the noise scale.

Two transfer-function priors are provided:

* a squared-exponential Gaussian process on a grid of ``[0, 1]`` with a Gamma
  prior on the inverse squared length scale ``A``, optionally centered at a
  given function;
* a truncated cosine series ``sum_j lambda_j Z_j b phi_j(a t)`` with
  ``lambda_j = j^(-q/4)`` for ``j >= 1``.

The noise scale has an inverse-gamma prior placed on ``sigma`` itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg, special

from . import kernels
from .density import CosineSeries, Tabulated, TransferFunction

__all__ = [
    "SqExpGPConfig",
    "SeriesPriorConfig",
    "SigmaPriorConfig",
    "SeriesCoefficients",
    "ProbeResult",
    "FactorizationError",
    "DomainError",
    "sqexp_kernel",
    "gp_cholesky",
    "sample_gp_path",
    "sample_series_path",
    "rkhs_norm_sq",
    "sobolev_norm_sq",
    "small_ball_probe",
    "supnorm_tail_bound",
    "mc_sup_tail",
    "calibrate_c6",
    "concentration_bound_rhs",
    "sample_sigma",
    "sigma_log_density",
]

SUP_POINTS = 1024


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization failed even after jitter escalation."""


class DomainError(ValueError):
    """A bound was requested outside the range where it is meaningful."""


@dataclass(frozen=True)
class SqExpGPConfig:
    """Gaussian process with covariance ``amplitude^2 exp(-A (t - s)^2)``.

    ``bandwidth_prior`` holds the Gamma shape and rate of ``A``.  The
    amplitude defaults to one, the unit-variance process.
    """

    bandwidth_prior: tuple[float, float] = (2.0, 0.1)
    grid_n: int = 128
    jitter: float = 1e-8
    center: Optional[TransferFunction] = None
    amplitude: float = 1.0

    def __post_init__(self):
        p, q = self.bandwidth_prior
        if not (p > 0 and q > 0):
            raise ValueError("Gamma shape and rate must be positive")
        if self.grid_n < 8:
            raise ValueError("grid_n must be at least 8")
        if not 1e-12 <= self.jitter <= 1e-6:
            raise ValueError("jitter must lie in [1e-12, 1e-6]")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_n)

    def center_values(self) -> np.ndarray:
        if self.center is None:
            return np.zeros(self.grid_n)
        return np.asarray(self.center(self.grid), dtype=float)


@dataclass(frozen=True)
class SeriesPriorConfig:
    """Truncated cosine-series prior.

    Parameters
    ----------
    J : int
        Highest frequency kept.
    q : float
        Smoothness; the scale of frequency ``j`` is ``j^(-q/4)``.
    a : float
        Frequency rescale of the basis.
    b : float
        Global scale.
    lambda0 : float
        Scale of the constant term.
    """

    J: int = 8
    q: float = 20.0
    a: float = 1.0
    b: float = 1.0
    lambda0: float = 1.0

    def __post_init__(self):
        if self.J < 0 or int(self.J) != self.J:
            raise ValueError("J must be a nonnegative integer")
        if not self.q > 0:
            raise ValueError("q must be positive")
        if not (self.a > 0 and self.b > 0 and self.lambda0 > 0):
            raise ValueError("a, b and lambda0 must be positive")

    @property
    def lambdas(self) -> np.ndarray:
        j = np.arange(1, self.J + 1, dtype=float)
        return np.concatenate([[self.lambda0], j ** (-self.q / 4.0)])

    @property
    def sigma_J_sq(self) -> float:
        return float(np.sum(self.lambdas[1:] ** 2))

    def design(self, t) -> np.ndarray:
        """Matrix with entries ``lambda_j b phi_j(a t_i)``."""
        return kernels.cosine_design(t, self.J, self.a) * (self.b * self.lambdas)


@dataclass(frozen=True)
class SigmaPriorConfig:
    """Inverse-gamma prior on ``sigma / rescale``."""

    a_sigma: float = 3.0
    b_sigma: float = 1.0
    rescale: float = 1.0

    def __post_init__(self):
        if not (self.a_sigma > 0 and self.b_sigma > 0 and self.rescale > 0):
            raise ValueError("a_sigma, b_sigma and rescale must be positive")


class SeriesCoefficients(NamedTuple):
    """Coefficients ``w_j`` multiplying ``b phi_j(a t)``; for prior draws ``w_j = lambda_j Z_j``."""

    w: np.ndarray


# ---------------------------------------------------------------------------
# Gaussian process
# ---------------------------------------------------------------------------


def sqexp_kernel(t: np.ndarray, A: float, amplitude: float = 1.0) -> np.ndarray:
    d = t[:, None] - t[None, :]
    return amplitude**2 * np.exp(-A * d * d)


def gp_cholesky(cfg: SqExpGPConfig, A: float) -> np.ndarray:
    """Lower Cholesky factor of the kernel on the grid plus jitter.

    The jitter is multiplied by ten up to three times before giving up.
    """
    K = sqexp_kernel(cfg.grid, A, cfg.amplitude)
    jitter = cfg.jitter
    for attempt in range(4):
        try:
            return linalg.cholesky(K + jitter * np.eye(cfg.grid_n), lower=True)
        except linalg.LinAlgError:
            if attempt == 3:
                break
            jitter *= 10.0
    raise FactorizationError(f"kernel with A={A} not positive definite at jitter {jitter}")


def sample_gp_path(
    cfg: SqExpGPConfig, rng_seed, z: Optional[np.ndarray] = None, A: Optional[float] = None
) -> Tabulated:
    """Draw a path ``center + L z`` on the configured grid.

    ``A`` is drawn from its Gamma prior unless given; ``z`` is standard normal
    unless given (``z = 0`` returns the center).
    """
    rng = np.random.default_rng(rng_seed)
    p, q = cfg.bandwidth_prior
    if A is None:
        A = rng.gamma(p, 1.0 / q)
    if z is None:
        z = rng.standard_normal(cfg.grid_n)
    L = gp_cholesky(cfg, A)
    return Tabulated(cfg.center_values() + L @ np.asarray(z, dtype=float))


# ---------------------------------------------------------------------------
# Cosine series
# ---------------------------------------------------------------------------


def sample_series_path(
    cfg: SeriesPriorConfig, rng_seed, z: Optional[np.ndarray] = None
) -> tuple[CosineSeries, SeriesCoefficients]:
    """Draw ``sum_j lambda_j Z_j b phi_j(a t)`` with iid standard normal ``Z``."""
    if z is None:
        z = np.random.default_rng(rng_seed).standard_normal(cfg.J + 1)
    w = cfg.lambdas * np.asarray(z, dtype=float)
    return CosineSeries(w, cfg.a, cfg.b), SeriesCoefficients(w)


def rkhs_norm_sq(coeffs: SeriesCoefficients, cfg: SeriesPriorConfig) -> float:
    """``sum_j w_j^2 / lambda_j^2`` over ``j = 0..J``."""
    w = np.asarray(coeffs.w if isinstance(coeffs, SeriesCoefficients) else coeffs, dtype=float)
    return float(np.sum((w / cfg.lambdas[: w.size]) ** 2))


def sobolev_norm_sq(coeffs, cfg: SeriesPriorConfig, exponent_mode: str = "q") -> float:
    """``b^2 sum_{j>=1} w_j^2 (2 pi a j)^e`` with ``e = q`` or ``e = 2q``.

    ``exponent_mode="q"`` uses ``q``; ``"2q"`` uses ``2q``, the
    power produced by differentiating ``cos(2 pi a j t)`` ``q`` times.
    """
    if exponent_mode not in ("q", "2q"):
        raise ValueError("exponent_mode must be 'q' or '2q'")
    w = np.asarray(coeffs.w if isinstance(coeffs, SeriesCoefficients) else coeffs, dtype=float)
    e = cfg.q if exponent_mode == "q" else 2.0 * cfg.q
    j = np.arange(1, w.size, dtype=float)
    return float(cfg.b**2 * np.sum(w[1:] ** 2 * (2.0 * math.pi * cfg.a * j) ** e))


class ProbeResult(NamedTuple):
    p_hat: float
    mc_se: float
    ci_upper: float


def _sup_norm_draws(prior, center_vals, t, n, rng):
    """Sup-norm distances of ``n`` prior draws from the center values on ``t``."""
    if isinstance(prior, SeriesPriorConfig):
        design = prior.design(t)
        z = rng.standard_normal((n, prior.J + 1))
        return np.max(np.abs(z @ design.T - center_vals), axis=1)
    if isinstance(prior, SqExpGPConfig):
        p, q = prior.bandwidth_prior
        out = np.empty(n)
        for i in range(n):
            L = gp_cholesky(prior, rng.gamma(p, 1.0 / q))
            path = np.interp(t, prior.grid, L @ rng.standard_normal(prior.grid_n))
            out[i] = np.max(np.abs(path + np.interp(t, prior.grid, prior.center_values()) - center_vals))
        return out
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def small_ball_probe(prior, center: Optional[TransferFunction], eps: float, n_mc: int, rng_seed,
                     chunk: int = 50_000) -> ProbeResult:
    """Monte Carlo estimate of ``P(||W - center||_inf <= eps)`` on 1024 points.

    Returns the estimate, its binomial standard error and a one-sided 95%
    upper confidence limit (``3 / n_mc`` when no draw falls in the ball).
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    rng = np.random.default_rng(rng_seed)
    t = np.linspace(0.0, 1.0, SUP_POINTS)
    c = np.zeros(SUP_POINTS) if center is None else np.asarray(center(t), dtype=float)
    if isinstance(prior, SqExpGPConfig):
        # the process is centered by construction; compare to the offset only
        c = c - np.interp(t, prior.grid, prior.center_values())
        prior = SqExpGPConfig(prior.bandwidth_prior, prior.grid_n, prior.jitter, None, prior.amplitude)
    hits = 0
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        hits += int(np.count_nonzero(_sup_norm_draws(prior, c, t, m, rng) <= eps))
        done += m
    p = hits / n_mc
    se = math.sqrt(p * (1.0 - p) / n_mc)
    upper = 3.0 / n_mc if hits == 0 else min(1.0, p + 1.645 * se)
    return ProbeResult(p, se, upper)


def supnorm_tail_bound(cfg: SeriesPriorConfig, M: float, c6: float = 0.0) -> float:
    """Gaussian tail bound ``2 a M exp(-(M - (c6/M)(sqrt(log a) + sqrt(log M)))^2 / (2 b^2 s^2))``.

    ``s^2`` is the sum of ``lambda_j^2`` over ``j = 1..J``.
    """
    if not M > 0 or c6 < 0:
        raise DomainError("need M > 0 and c6 >= 0")
    log_a, log_m = math.log(cfg.a), math.log(M)
    if c6 > 0 and (log_a < 0 or log_m < 0):
        raise DomainError("square roots of log a and log M need a, M >= 1")
    shift = (c6 / M) * (math.sqrt(max(log_a, 0.0)) + math.sqrt(max(log_m, 0.0)))
    bracket = M - shift
    if bracket <= 0:
        raise DomainError(f"bracketed term {bracket} is not positive; the bound is vacuous")
    var = cfg.b**2 * cfg.sigma_J_sq
    if var == 0:
        return 0.0
    return float(2.0 * cfg.a * M * math.exp(-(bracket**2) / (2.0 * var)))


def mc_sup_tail(cfg: SeriesPriorConfig, M, n_mc: int, rng_seed, chunk: int = 20_000):
    """Monte Carlo ``P(||W^J||_inf > M)`` on 1024 points, for one or several ``M``.

    Returns arrays of estimates and standard errors aligned with ``M``.
    """
    Ms = np.atleast_1d(np.asarray(M, dtype=float))
    rng = np.random.default_rng(rng_seed)
    t = np.linspace(0.0, 1.0, SUP_POINTS)
    counts = np.zeros(Ms.size)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        sup = _sup_norm_draws(cfg, np.zeros(SUP_POINTS), t, m, rng)
        counts += np.count_nonzero(sup[:, None] > Ms[None, :], axis=0)
        done += m
    p = counts / n_mc
    return p, np.sqrt(p * (1.0 - p) / n_mc)


def calibrate_c6(cfg: SeriesPriorConfig | None = None, M: float = 2.0, n_mc: int = 200_000,
                 rng_seed=0) -> float:
    """Smallest ``c6 >= 0`` for which the tail bound covers the simulated tail at ``M``.

    The simulated tail is taken at its upper three-standard-error limit.
    """
    cfg = cfg or SeriesPriorConfig()
    p, se = mc_sup_tail(cfg, M, n_mc, rng_seed)
    target = float(p[0] + 3.0 * se[0])
    if supnorm_tail_bound(cfg, M, 0.0) >= target:
        return 0.0
    # the bound increases with c6 until the bracket reaches zero
    denom = math.sqrt(max(math.log(cfg.a), 0.0)) + math.sqrt(max(math.log(M), 0.0))
    if denom == 0:
        raise DomainError("c6 has no effect when a = M = 1")
    hi = M * M / denom * (1.0 - 1e-12)
    lo = 0.0
    if supnorm_tail_bound(cfg, M, hi) < target:
        raise DomainError("no c6 makes the bound cover the simulated tail")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if supnorm_tail_bound(cfg, M, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def concentration_bound_rhs(eps: float, cfg: SeriesPriorConfig, sobolev_sq: float) -> float:
    """Upper bound on the concentration function at ``eps``.

    ``sobolev_sq / (a^q b^2)`` plus ``J (1 + log(b/eps))`` when
    ``eps J^(q/4) <= b J^2`` and ``(b/eps)^(20/q)`` otherwise.
    """
    if cfg.q <= 16:
        raise ValueError("the concentration bound requires q > 16")
    if not eps > 0:
        raise ValueError("eps must be positive")
    J, q, a, b = cfg.J, cfg.q, cfg.a, cfg.b
    if eps * J ** (q / 4.0) <= b * J * J:
        small_ball = J * (1.0 + math.log(b / eps))
    else:
        small_ball = (b / eps) ** (20.0 / q)
    return sobolev_sq / (a**q * b * b) + small_ball


# ---------------------------------------------------------------------------
# Noise scale
# ---------------------------------------------------------------------------


def sample_sigma(cfg: SigmaPriorConfig, rng_seed, size=None):
    """Draw ``sigma = rescale * X`` with ``X ~ IG(a_sigma, b_sigma)``."""
    rng = np.random.default_rng(rng_seed)
    x = cfg.b_sigma / rng.gamma(cfg.a_sigma, 1.0, size=size)
    return cfg.rescale * x if size is not None else float(cfg.rescale * x)


def sigma_log_density(cfg: SigmaPriorConfig, s):
    """Log density of the rescaled inverse-gamma prior at ``s``."""
    s = np.asarray(s, dtype=float)
    x = s / cfg.rescale
    a, b = cfg.a_sigma, cfg.b_sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * math.log(b) - special.gammaln(a) - (a + 1.0) * np.log(x) - b / x - math.log(cfg.rescale)
    out = np.where(s > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out
