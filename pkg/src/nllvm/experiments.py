"""Desk-scale studies: smoothing bias, posterior contraction slopes, the effect
of centering the prior, a super-smooth truth and the construction of
approximating transfer functions for full-support truths.

Every study is deterministic given its seed.  Each ``(n, replicate)`` cell
draws its data and chain seeds from :class:`numpy.random.SeedSequence` keyed
by ``(seed, n, replicate, stream)``, so no two cells share a random stream.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .density import (
    Custom,
    GridDensity,
    QuadratureSpec,
    QuantileTransfer,
    TruncatedMixture,
    TruthSpec,
    continuous_quantile_approx,
    eval_model_density,
    gaussian_convolve,
    quantile_function,
)
from .inference import (
    ChainDivergenceError,
    ObservationSet,
    PriorBundle,
    SamplerConfig,
    posterior_summary,
    run_chain,
)
from .metrics import hellinger_sq, write_report
from .priors import FactorizationError, SigmaPriorConfig, SqExpGPConfig

__all__ = [
    "StudyAbortedError",
    "RateStudyConfig",
    "RateStudyResult",
    "ConvolutionRateReport",
    "CenteredPriorReport",
    "SupersmoothReport",
    "SupportApproxReport",
    "simulate_data",
    "fit_rate_slope",
    "convolution_rate_study",
    "run_rate_study",
    "write_rate_study",
    "centered_prior_study",
    "supersmooth_truth",
    "supersmooth_study",
    "support_approx_study",
    "default_gp_prior",
    "default_study_sampler",
]


class StudyAbortedError(RuntimeError):
    """A chain inside a study failed; the message names the cell."""

    def __init__(self, n: int, replicate: int, cause: Exception):
        super().__init__(f"study aborted at n={n}, replicate={replicate}: {cause}")
        self.n = n
        self.replicate = replicate


# ---------------------------------------------------------------------------
# Data and slopes
# ---------------------------------------------------------------------------


def simulate_data(truth: TruthSpec, n: int, seed) -> ObservationSet:
    """``n`` draws from ``truth`` by inverting its cdf at seeded uniforms."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=n)
    # uniforms of exactly zero are possible in principle; nudge them inside
    u = np.clip(u, 1e-300, 1.0 - 2.0**-53)
    return ObservationSet(np.atleast_1d(quantile_function(truth, u)))


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Slope, intercept and slope standard error of ``y`` on ``x``."""
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    sxx = float(np.sum((x - x.mean()) ** 2))
    return float(coef[1]), float(coef[0]), math.sqrt(s2 / sxx)


def fit_rate_slope(ns: Sequence[float], distances: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log distance`` on ``log n`` and its standard error."""
    ns = np.asarray(ns, dtype=float)
    d = np.asarray(distances, dtype=float)
    if ns.shape != d.shape or ns.size < 3:
        raise ValueError("need at least three (n, distance) pairs of equal length")
    if np.any(~(d > 0)):
        raise ValueError("distances must be positive")
    if np.any(~(ns > 0)):
        raise ValueError("sample sizes must be positive")
    slope, _, se = _ols(np.log(ns), np.log(d))
    return slope, se


# ---------------------------------------------------------------------------
# Smoothing bias
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvolutionRateReport:
    sigmas: np.ndarray
    distances: np.ndarray
    slope: float
    se: float


def convolution_rate_study(truth: TruthSpec, sigmas: Sequence[float],
                           n_grid: int = 4096) -> ConvolutionRateReport:
    """Slope of ``log h(f0, phi_sigma * f0)`` against ``log sigma``.

    ``h`` is the Hellinger distance in the integral convention.  Both
    densities live on one grid that covers the truth plus eight of the
    largest ``sigma`` on either side; the convolution is a direct discrete
    sum on that grid.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.size < 4:
        raise ValueError("need at least four sigma values")
    if np.any(~(sigmas > 0)):
        raise ValueError("sigmas must be positive")
    ratios = sigmas[1:] / sigmas[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ValueError("sigmas must form a geometric ladder")
    lo, hi = truth.effective_support(1e-12)
    pad = 8.0 * float(sigmas.max())
    x = np.linspace(lo - pad, hi + pad, n_grid)
    f0 = GridDensity(x[0], x[-1], truth.pdf(x))
    dists = []
    for s in sigmas:
        g = gaussian_convolve(f0, float(s))
        # the convolution grid extends f0's grid by whole steps; cut it back
        g = GridDensity(x[0], x[-1], g(x))
        dists.append(math.sqrt(hellinger_sq(f0, g, "integral")))
    dists = np.asarray(dists)
    slope, _, se = _ols(np.log(sigmas), np.log(dists))
    return ConvolutionRateReport(sigmas, dists, slope, se)


# ---------------------------------------------------------------------------
# Posterior contraction
# ---------------------------------------------------------------------------


def default_gp_prior(center=None) -> PriorBundle:
    """GP prior used by the contraction studies.

    Amplitude 3 lets the path reach quantile values of a few units, and the
    Gamma(2, 0.02) bandwidth prior (mean 100) favours length scales around a
    tenth of the unit interval.
    """
    return PriorBundle(
        SqExpGPConfig(bandwidth_prior=(2.0, 0.02), amplitude=3.0, center=center),
        SigmaPriorConfig(2.0, 0.1),
    )


def default_study_sampler(iterations: int = 2000) -> SamplerConfig:
    """Sampler used by the contraction studies: exact path draws, reflected
    latent walk and a 50-sweep warm start inside burn-in."""
    return SamplerConfig(
        iterations=iterations,
        burn_in=iterations // 2,
        thin=max(1, iterations // 800),
        eta_proposal="reflected",
        eta_step=0.01,
        gp_update="conjugate",
        warm_start=min(50, iterations // 2),
    )


@dataclass
class RateStudyConfig:
    truth: TruthSpec
    ns: Sequence[int] = (250, 500, 1000, 2000, 4000)
    replicates: int = 5
    prior: PriorBundle = field(default_factory=default_gp_prior)
    sampler: SamplerConfig = field(default_factory=default_study_sampler)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.ns = tuple(int(n) for n in self.ns)
        if len(self.ns) < 3:
            raise ValueError("a rate study needs at least three sample sizes")
        if any(b <= a for a, b in zip(self.ns, self.ns[1:])):
            raise ValueError("sample sizes must be strictly increasing")
        if self.ns[0] < 1:
            raise ValueError("sample sizes must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class RateStudyResult:
    ns: tuple
    distances: np.ndarray  # shape (len(ns), replicates)
    slope: float
    intercept: float
    se: float

    @property
    def mean_distances(self) -> np.ndarray:
        """Replicate average of the distances at each ``n``."""
        return self.distances.mean(axis=1)

    @property
    def inversions(self) -> int:
        """Number of adjacent ``n`` where the average distance goes up."""
        m = self.mean_distances
        return int(np.count_nonzero(np.diff(m) > 0))

    def rows(self):
        for i, n in enumerate(self.ns):
            for r, d in enumerate(self.distances[i]):
                yield n, r, float(d)


def _cell_seeds(seed: int, n: int, replicate: int) -> tuple[int, int]:
    data = np.random.SeedSequence([seed, n, replicate, 0]).generate_state(1)[0]
    chain = np.random.SeedSequence([seed, n, replicate, 1]).generate_state(1)[0]
    return int(data), int(chain)


def _run_cell(args) -> float:
    truth, n, replicate, prior, sampler, seed = args
    data_seed, chain_seed = _cell_seeds(seed, n, replicate)
    obs = simulate_data(truth, n, data_seed)
    try:
        chain = run_chain(obs, prior, replace(sampler, seed=chain_seed))
        return float(posterior_summary(chain, truth=truth).hellinger_to_truth)
    except (ChainDivergenceError, FactorizationError, FloatingPointError) as exc:
        raise StudyAbortedError(n, replicate, exc) from exc


def _map_cells(cells: list, workers: int) -> list:
    if workers == 1:
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, cells))


def run_rate_study(cfg: RateStudyConfig) -> RateStudyResult:
    """Fit every ``(n, replicate)`` cell and regress log distance on log ``n``.

    The slope is fitted to the replicate average of the log distances.
    """
    cells = [
        (cfg.truth, n, r, cfg.prior, cfg.sampler, cfg.seed)
        for n in cfg.ns
        for r in range(cfg.replicates)
    ]
    dists = np.asarray(_map_cells(cells, cfg.workers)).reshape(len(cfg.ns), cfg.replicates)
    log_mean = np.log(dists).mean(axis=1)
    slope, intercept, se = _ols(np.log(np.asarray(cfg.ns, dtype=float)), log_mean)
    return RateStudyResult(cfg.ns, dists, slope, intercept, se)


def write_rate_study(result: RateStudyResult, out_dir) -> tuple[str, str]:
    """Write ``results.csv`` (n, replicate, hellinger) and ``summary.txt``."""
    os.makedirs(out_dir, exist_ok=True)
    table = os.path.join(out_dir, "results.csv")
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "replicate", "hellinger"])
        for n, r, d in result.rows():
            writer.writerow([n, r, repr(d)])
    summary = os.path.join(out_dir, "summary.txt")
    write_report(
        {
            "slope": result.slope,
            "intercept": result.intercept,
            "se": result.se,
            "ns": [float(n) for n in result.ns],
            "mean_distances": result.mean_distances,
            "inversions": result.inversions,
        },
        summary,
    )
    return table, summary


# ---------------------------------------------------------------------------
# Centering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CenteredPriorReport:
    centered: np.ndarray
    uncentered: np.ndarray

    @property
    def mean_centered(self) -> float:
        return float(self.centered.mean())

    @property
    def mean_uncentered(self) -> float:
        return float(self.uncentered.mean())

    @property
    def ratio(self) -> float:
        """Mean centered distance over mean uncentered distance."""
        return self.mean_centered / self.mean_uncentered


def centered_prior_study(truth: TruthSpec, n: int = 1000, replicates: int = 5,
                         prior: Optional[PriorBundle] = None,
                         sampler: Optional[SamplerConfig] = None,
                         seed: int = 0, workers: int = 1) -> CenteredPriorReport:
    """Paired fits with the GP centered at the true quantile function and at zero.

    Both arms of a replicate see the same data and the same chain seed.
    """
    if not truth.compact:
        raise ValueError("the centered-prior study needs a compactly supported truth")
    prior = prior or default_gp_prior()
    if prior.is_series:
        raise ValueError("the centered-prior study needs a GP prior")
    sampler = sampler or default_study_sampler()
    centered = replace(prior, transfer=replace(prior.transfer, center=QuantileTransfer(truth)))
    uncentered = replace(prior, transfer=replace(prior.transfer, center=None))
    cells = [(truth, n, r, p, sampler, seed) for p in (centered, uncentered) for r in range(replicates)]
    d = np.asarray(_map_cells(cells, workers)).reshape(2, replicates)
    return CenteredPriorReport(d[0], d[1])


# ---------------------------------------------------------------------------
# Super-smooth truth
# ---------------------------------------------------------------------------


def supersmooth_truth(sigma0: float = 0.25, weights=(0.5, 0.5), means=(-1.0, 1.0),
                      sds=(0.5, 0.5), lo: float = -3.0, hi: float = 3.0,
                      n_grid: int = 4097) -> Custom:
    """Truncated Gaussian mixture smoothed by ``N(0, sigma0^2)``, tabulated.

    The smoothing is evaluated in closed form; the grid covers the mixture
    support plus ten ``sigma0`` on each side.
    """
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive; sigma0 = 0 is the unsmoothed mixture")
    mix = TruncatedMixture(weights, means, sds, lo, hi)
    a, b = lo - 10.0 * sigma0, hi + 10.0 * sigma0
    x = np.linspace(a, b, n_grid)
    return Custom(GridDensity(a, b, mix.smoothed_pdf(x, sigma0)))


@dataclass(frozen=True)
class SupersmoothReport:
    result: RateStudyResult
    baseline: RateStudyResult

    @property
    def slope_gap(self) -> float:
        """Super-smooth slope minus baseline slope (negative means faster)."""
        return self.result.slope - self.baseline.slope

    @property
    def no_slower(self) -> bool:
        return self.slope_gap <= 0.1


def supersmooth_study(cfg: RateStudyConfig, baseline: Optional[RateStudyResult] = None,
                      sigma0: float = 0.25) -> SupersmoothReport:
    """Rate study on :func:`supersmooth_truth` next to a baseline study.

    ``cfg.truth`` is the baseline truth; the baseline study is run with the
    same settings unless a finished one is passed in.
    """
    if baseline is None:
        baseline = run_rate_study(cfg)
    smooth = run_rate_study(replace(cfg, truth=supersmooth_truth(sigma0)))
    return SupersmoothReport(smooth, baseline)


# ---------------------------------------------------------------------------
# Support construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportApproxReport:
    eps: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    l1: np.ndarray

    @property
    def achieved(self) -> bool:
        return bool(np.all(self.l1 < self.eps))


_SUPPORT_QUAD = QuadratureSpec(nodes=64, panels=64)


def _approx_l1(truth: TruthSpec, delta: float, sigma: float, n_grid: int) -> float:
    mu = continuous_quantile_approx(truth, delta) if not truth.compact else QuantileTransfer(truth)
    lo, hi = truth.effective_support(1e-10)
    pad = 8.0 * sigma
    x = np.linspace(lo - pad, hi + pad, n_grid)
    f0 = truth.pdf(x)
    fm = eval_model_density(mu, sigma, x, _SUPPORT_QUAD)
    g = GridDensity(x[0], x[-1], np.abs(f0 - fm))
    return g.integral()


def support_approx_study(truth: TruthSpec, eps: Sequence[float] = (0.2, 0.1, 0.05),
                         sigma_start: float = 0.5, max_halvings: int = 20,
                         n_grid: int = 8193) -> SupportApproxReport:
    """Find, for each tolerance, a clamped quantile transfer and noise scale
    whose model density is within that tolerance of the truth in L1.

    For each ``eps`` (in the order given) ``sigma`` is halved from
    ``sigma_start``, and from the previous tolerance's ``sigma`` onwards,
    with clamp level ``delta = eps * sigma / 4``, until the L1 error is below
    ``eps`` and no larger than the previous tolerance's error.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(~(eps > 0)):
        raise ValueError("tolerances must be positive")
    sigma = sigma_start
    prev = math.inf
    out_delta, out_sigma, out_l1 = [], [], []
    for e in eps:
        for _ in range(max_halvings + 1):
            delta = min(e * sigma / 4.0, 0.25)
            err = _approx_l1(truth, delta, sigma, n_grid)
            if err < e and err <= prev:
                break
            sigma *= 0.5
        out_delta.append(delta)
        out_sigma.append(sigma)
        out_l1.append(err)
        prev = err
    return SupportApproxReport(eps, np.asarray(out_delta), np.asarray(out_sigma), np.asarray(out_l1))
