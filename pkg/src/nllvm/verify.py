"""Numerical checks of the distance bounds, tail bound, moment matching and
smoothing rates, each returning a pass/fail :class:`CheckResult`.

The same functions back ``nllvm verify`` and the acceptance tests.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .density import (
    CosineSeries,
    GridDensity,
    QuadratureSpec,
    QuantileTransfer,
    Tabulated,
    TruncatedNormal,
    Uniform,
    eval_model_density,
    normal,
    quantile_function,
)
from .experiments import convolution_rate_study, fit_rate_slope, support_approx_study
from .maxent import MomentProblem, compute_moments, quantile_derivatives, smoothed_sup_gap, solve_maxent
from .metrics import hellinger_bound_rhs, hellinger_sq, log_sup_ratio
from .priors import SeriesPriorConfig, calibrate_c6, mc_sup_tail, supnorm_tail_bound

__all__ = [
    "CheckResult",
    "check_convolution_rate",
    "check_hellinger_bound",
    "check_log_sup_growth",
    "check_sup_tail",
    "check_maxent",
    "check_quantile_derivatives",
    "check_support_construction",
    "SUITES",
    "run_suite",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: str
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.summary} ({self.seconds:.1f} s)"


def _timed(fn: Callable[..., CheckResult]) -> Callable[..., CheckResult]:
    def wrapper(*args, **kwargs) -> CheckResult:
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# Smoothing bias
# ---------------------------------------------------------------------------


@_timed
def check_convolution_rate(sigmas=(0.2, 0.1, 0.05, 0.025), window=(1.8, 2.2)) -> CheckResult:
    """Slope of the smoothing bias of the truncated normal on [-2, 2]."""
    rep = convolution_rate_study(TruncatedNormal(), sigmas)
    ok = window[0] <= rep.slope <= window[1]
    return CheckResult(
        "conv-rate",
        ok,
        f"slope {rep.slope:.3f} (se {rep.se:.3f}), window [{window[0]}, {window[1]}]",
        details={"slope": rep.slope, "se": rep.se, "distances": rep.distances.tolist()},
    )


# ---------------------------------------------------------------------------
# Hellinger bound
# ---------------------------------------------------------------------------


def _model_grid_pair(mu1, mu2, s1, s2, n_grid=8193):
    quad = QuadratureSpec(nodes=64, panels=16)
    t = np.linspace(0.0, 1.0, 1025)
    v = np.concatenate([mu1(t), mu2(t)])
    pad = 10.0 * max(s1, s2)
    x = np.linspace(v.min() - pad, v.max() + pad, n_grid)
    f1 = GridDensity(x[0], x[-1], eval_model_density(mu1, s1, x, quad))
    f2 = GridDensity(x[0], x[-1], eval_model_density(mu2, s2, x, quad))
    return f1, f2


@_timed
def check_hellinger_bound(n_random: int = 100, seed: int = 0, eq_tol: float = 1e-5,
                          slack_tol: float = -1e-6) -> CheckResult:
    """Equality for constant transfers and the inequality on random pairs."""
    rng = np.random.default_rng(seed)
    eq_err = 0.0
    for c1, c2, s1, s2 in [(0.0, 0.0, 0.5, 0.5), (0.0, 1.0, 0.5, 0.5), (-0.3, 0.7, 0.3, 0.8),
                           (1.0, -1.0, 1.0, 0.4)]:
        m1, m2 = Tabulated.constant(c1), Tabulated.constant(c2)
        f1, f2 = _model_grid_pair(m1, m2, s1, s2)
        eq_err = max(eq_err, abs(hellinger_sq(f1, f2) - hellinger_bound_rhs(m1, m2, s1, s2)))
    min_slack = math.inf
    for _ in range(n_random):
        j = int(rng.integers(1, 5))
        m1 = CosineSeries(rng.normal(size=j + 1) / np.arange(1, j + 2))
        m2 = CosineSeries(rng.normal(size=j + 1) / np.arange(1, j + 2))
        s1, s2 = rng.uniform(0.2, 1.0, size=2)
        f1, f2 = _model_grid_pair(m1, m2, s1, s2)
        min_slack = min(min_slack, hellinger_bound_rhs(m1, m2, s1, s2) - hellinger_sq(f1, f2))
    ok = eq_err <= eq_tol and min_slack >= slack_tol
    return CheckResult(
        "hellinger",
        ok,
        f"equality error {eq_err:.2e} (tol {eq_tol:g}), minimum slack {min_slack:.2e} "
        f"over {n_random} random pairs",
        details={"equality_error": eq_err, "min_slack": min_slack},
    )


# ---------------------------------------------------------------------------
# Log sup ratio
# ---------------------------------------------------------------------------


@_timed
def check_log_sup_growth(sigmas=(0.05, 0.1, 0.2), multiples=(4.0, 8.0, 16.0),
                         window=(1.7, 2.3), n_grid=4001) -> CheckResult:
    """Growth exponent of ``log sup f0 / f`` under shifts of the true quantile.

    For each ``sigma`` the shifts are ``sigma * multiples``, which places them
    in the regime where the shifted kernel no longer overlaps the truth's
    edge and the ratio grows like ``shift^2 / (2 sigma^2)``.
    """
    truth = TruncatedNormal()
    x = np.linspace(truth.lo, truth.hi, n_grid)
    f0 = GridDensity(x[0], x[-1], truth.pdf(x))
    quad = QuadratureSpec(nodes=64, panels=64)
    exps = {}
    for s in sigmas:
        deltas = s * np.asarray(multiples)
        L = [
            log_sup_ratio(f0, GridDensity(x[0], x[-1], eval_model_density(
                QuantileTransfer(truth, shift=float(d)), s, x, quad)))
            for d in deltas
        ]
        exps[s] = fit_rate_slope(deltas, L)[0]
    ok = all(window[0] <= e <= window[1] for e in exps.values())
    text = ", ".join(f"sigma {s:g}: {e:.3f}" for s, e in exps.items())
    return CheckResult("logsup", ok, f"exponents {text}; window [{window[0]}, {window[1]}]",
                       details={"exponents": exps})


# ---------------------------------------------------------------------------
# Sup-norm tail
# ---------------------------------------------------------------------------


@_timed
def check_sup_tail(Js=(1, 2, 4), Ms=(2.0, 3.0), n_mc: int = 1_000_000, seed: int = 0) -> CheckResult:
    """Simulated ``P(sup |W| > M)`` against the Gaussian tail bound.

    ``c6`` is calibrated per truncation level at ``M = 2`` on an independent
    stream before the comparison draws are made.
    """
    rows = []
    ok = True
    for J in Js:
        cfg = SeriesPriorConfig(J=J)
        c6 = calibrate_c6(cfg, M=2.0, rng_seed=(seed, J, 0))
        p, se = mc_sup_tail(cfg, list(Ms), n_mc, (seed, J, 1))
        for M, pm, sm in zip(Ms, p, se):
            bound = supnorm_tail_bound(cfg, M, c6)
            ok &= bool(pm <= bound)
            rows.append((J, M, c6, float(pm), float(sm), bound))
    worst = max(rows, key=lambda r: r[3] / r[5] if r[5] > 0 else math.inf)
    return CheckResult(
        "tails",
        ok,
        f"{len(rows)} cases, largest estimate/bound ratio {worst[3] / worst[5]:.3f} "
        f"(J={worst[0]}, M={worst[1]:g}, c6={worst[2]:g})",
        details={"rows": rows},
    )


# ---------------------------------------------------------------------------
# Moment matching and quantile derivatives
# ---------------------------------------------------------------------------


@_timed
def check_maxent(ks=tuple(range(1, 13)), gap_ks=(2, 4, 8, 12), padding: float = 1.5,
                 sigma: float = 0.2, tol: float = 1e-8, n_grid: int = 2049) -> CheckResult:
    """Moment residuals on truncated-normal and uniform targets, and the
    decrease of the smoothed sup gap in the number of moments.

    Each moment problem lives on the target's support widened by the factor
    ``padding`` about its center, so part of the interval carries no mass.
    Residuals are those of the solver's scaled Legendre moment conditions.
    """
    targets = {"trunc-normal": TruncatedNormal(), "uniform": Uniform(-1.0, 1.0)}
    worst = 0.0
    gaps = {}
    for name, truth in targets.items():
        half_width = padding * 0.5 * (truth.hi - truth.lo)
        support = (-half_width, half_width)
        x = np.linspace(-half_width, half_width, n_grid)
        f = GridDensity(x[0], x[-1], truth.pdf(x))
        sols = {}
        for k in sorted(set(ks) | set(gap_ks)):
            m = compute_moments(truth, k, support)
            sol = solve_maxent(MomentProblem(half_width, tuple(m), tol=1e-12))
            sols[k] = sol
            if k in ks:
                worst = max(worst, float(np.max(np.abs(sol.residuals))))
        gaps[name] = [smoothed_sup_gap(f, sols[k].to_grid(n_grid), sigma) for k in gap_ks]
    decreasing = all(all(b < a for a, b in zip(g, g[1:])) for g in gaps.values())
    ok = worst <= tol and decreasing
    gap_text = "; ".join(f"{n}: " + ", ".join(f"{v:.4f}" for v in g) for n, g in gaps.items())
    return CheckResult(
        "maxent",
        ok,
        f"max residual {worst:.2e} (tol {tol:g}) for k <= {max(ks)}; smoothed gaps at "
        f"k={list(gap_ks)}: {gap_text}",
        details={"max_residual": worst, "gaps": gaps},
    )


def _fd_quantile_derivative(truth, u: float, order: int, h: float = 0.005) -> float:
    """Central differences of the quantile function with one Richardson step."""
    def central(step):
        q = quantile_function(truth, u + step * np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
        if order == 1:
            return (q[3] - q[1]) / (2 * step)
        if order == 2:
            return (q[3] - 2 * q[2] + q[1]) / step**2
        return (q[4] - 2 * q[3] + 2 * q[1] - q[0]) / (2 * step**3)

    return (4.0 * central(h / 2) - central(h)) / 3.0


@_timed
def check_quantile_derivatives(us=tuple(np.round(np.arange(0.1, 0.95, 0.1), 10)),
                               tol: float = 1e-4) -> CheckResult:
    """Closed-form quantile derivatives of orders 1 to 3 against finite
    differences of the quantile function.

    The error is relative to ``max(|reference|, 1)`` so that derivatives
    passing through zero (the median of a symmetric density) are compared
    in absolute terms.
    """
    worst = (0.0, None)
    for name, truth in {"normal": normal(), "trunc-normal": TruncatedNormal()}.items():
        for u in us:
            for order in (1, 2, 3):
                ref = _fd_quantile_derivative(truth, float(u), order)
                got = quantile_derivatives(truth, float(u), order)
                err = abs(got - ref) / max(abs(ref), 1.0)
                if err > worst[0]:
                    worst = (err, (name, float(u), order))
    ok = worst[0] <= tol
    return CheckResult("quantile-derivatives", ok,
                       f"largest relative error {worst[0]:.2e} at {worst[1]} (tol {tol:g})",
                       details={"max_error": worst[0]})


# ---------------------------------------------------------------------------
# Support construction
# ---------------------------------------------------------------------------


@_timed
def check_support_construction(eps=(0.2, 0.1, 0.05)) -> CheckResult:
    rep = support_approx_study(normal(), eps)
    rows = ", ".join(
        f"eps {e:g}: L1 {l:.4f} (sigma {s:g}, delta {d:.2e})"
        for e, l, s, d in zip(rep.eps, rep.l1, rep.sigma, rep.delta)
    )
    return CheckResult("support", rep.achieved, rows, details={"l1": rep.l1.tolist()})


SUITES = {
    "hellinger": [check_hellinger_bound],
    "logsup": [check_log_sup_growth],
    "tails": [check_sup_tail],
    "conv-rate": [check_convolution_rate],
    "maxent": [check_maxent, check_quantile_derivatives],
}


def run_suite(name: str) -> list[CheckResult]:
    """Run one named suite, or every suite for ``"all"``."""
    if name == "all":
        return [fn() for fns in SUITES.values() for fn in fns]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return [fn() for fn in SUITES[name]]
