"""Maximum-entropy densities on a compact interval with prescribed moments.

The solution has the form ``exp(-sum_l b_l p_l(x)) / Z`` where ``p_l`` are
monomials or Legendre polynomials rescaled to the support.  It is found by
damped Newton iterations on the convex dual
``G(b) = log Z(b) + sum_l b_l m_l`` whose gradient is ``m - E_b[p]`` and whose
Hessian is the covariance of ``p`` under the current density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import special

from .density import (
    GridDensity,
    TruthSpec,
    _gl_nodes,
    gaussian_convolve,
    quantile_function,
)

__all__ = [
    "MomentProblem",
    "MaxentSolution",
    "SupportError",
    "SingularityError",
    "compute_moments",
    "solve_maxent",
    "maxent_k_schedule",
    "smoothed_sup_gap",
    "quantile_derivatives",
    "K_MAX",
]

K_MAX = 64
ARMIJO_C = 1e-4
BACKTRACK = 0.5
ILL_CONDITIONED = 1e14


class SupportError(ValueError):
    """The density puts non-negligible mass outside the moment support."""


class SingularityError(ValueError):
    """The density is too small at the point where a quantile derivative is requested."""


@dataclass(frozen=True)
class MomentProblem:
    """Moments ``m_0 = 1, m_1, ..., m_k`` of ``x^j`` on ``[-half_width, half_width]``."""

    half_width: float
    target_moments: tuple
    basis: str = "legendre"
    tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        m = tuple(float(v) for v in self.target_moments)
        if not m or abs(m[0] - 1.0) > 1e-12:
            raise ValueError("target moments must start with m_0 = 1")
        if len(m) - 1 > K_MAX:
            raise ValueError(f"at most {K_MAX} moments are supported")
        if self.basis not in ("monomial", "legendre"):
            raise ValueError("basis must be 'monomial' or 'legendre'")
        if not self.half_width > 0:
            raise ValueError("support half-width must be positive")
        object.__setattr__(self, "target_moments", m)

    @property
    def k(self) -> int:
        return len(self.target_moments) - 1

    @property
    def support(self) -> tuple[float, float]:
        return -self.half_width, self.half_width


def _basis_matrix(x: np.ndarray, k: int, basis: str, half_width: float) -> np.ndarray:
    """Columns ``p_1(x), ..., p_k(x)``."""
    if basis == "monomial":
        return np.vander(x, k + 1, increasing=True)[:, 1:]
    return npleg.legvander(x / half_width, k)[:, 1:]


def _basis_moments(moments: np.ndarray, k: int, basis: str, half_width: float) -> np.ndarray:
    """Convert monomial moments into expectations of the chosen basis."""
    if basis == "monomial":
        return moments[1:].copy()
    out = np.empty(k)
    for l in range(1, k + 1):
        unit = np.zeros(l + 1)
        unit[l] = 1.0
        poly = npleg.leg2poly(unit)  # coefficients in powers of x / half_width
        out[l - 1] = np.sum(poly * moments[: l + 1] / half_width ** np.arange(l + 1))
    return out


@dataclass
class MaxentSolution:
    """Exponential-polynomial density matching a moment problem."""

    coeffs: np.ndarray
    log_z: float
    residuals: np.ndarray
    iterations: int
    converged: bool
    basis: str
    half_width: float
    ill_conditioned: bool = False
    objective_trace: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.coeffs.size

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = -self.log_z - _basis_matrix(x.ravel(), self.k, self.basis, self.half_width) @ self.coeffs
        out = out.reshape(x.shape)
        return np.where(np.abs(x) <= self.half_width, out, -np.inf)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))

    def to_grid(self, n: int = 2048, lo: float | None = None, hi: float | None = None) -> GridDensity:
        lo = -self.half_width if lo is None else lo
        hi = self.half_width if hi is None else hi
        return GridDensity(lo, hi, self.pdf(np.linspace(lo, hi, n)))

    def moments(self, k: int | None = None) -> np.ndarray:
        """Monomial moments of the solution density by Gauss-Legendre quadrature."""
        k = self.k if k is None else k
        x, w = _gl_nodes(max(200, 20 * max(k, self.k)), -self.half_width, self.half_width)
        return np.vander(x, k + 1, increasing=True).T @ (w * self.pdf(x))

    def entropy(self) -> float:
        x, w = _gl_nodes(max(200, 20 * self.k), -self.half_width, self.half_width)
        lp = self.log_pdf(x)
        return float(-(w @ (np.exp(lp) * lp)))


def compute_moments(f, k: int, support: tuple[float, float]) -> np.ndarray:
    """Monomial moments ``int x^j f(x) dx`` for ``j = 0..k``.

    Truth densities are integrated by Gauss-Legendre on the intersection of
    their support with ``support``; tabulated densities are integrated exactly
    as piecewise-linear functions.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    lo, hi = support
    if isinstance(f, TruthSpec):
        outside = float(f.cdf(lo)) + (1.0 - float(f.cdf(hi)))
        if outside > 1e-8:
            raise SupportError(f"mass {outside:.3g} lies outside [{lo}, {hi}]")
        a, b = max(lo, f.lo), min(hi, f.hi)
        x, w = _gl_nodes(max(200, 20 * k), a, b)
        return np.vander(x, k + 1, increasing=True).T @ (w * f.pdf(x))
    if isinstance(f, GridDensity):
        xs = f.x
        outside_mask = (xs < lo) | (xs > hi)
        outside = float(f.weights[outside_mask] @ f.values[outside_mask]) if outside_mask.any() else 0.0
        if outside > 1e-8:
            raise SupportError(f"mass {outside:.3g} lies outside [{lo}, {hi}]")
        # Gauss-Legendre on each cell is exact for x^j times a linear function
        n_gl = k // 2 + 2
        gx, gw = np.polynomial.legendre.leggauss(n_gl)
        left = xs[:-1]
        h = f.step
        pts = left[:, None] + 0.5 * h * (gx[None, :] + 1.0)
        vals = f(pts.ravel()).reshape(pts.shape)
        wts = 0.5 * h * gw[None, :] * vals
        return np.array([np.sum(wts * pts**j) for j in range(k + 1)])
    raise TypeError("f must be a TruthSpec or a GridDensity")


def solve_maxent(p: MomentProblem) -> MaxentSolution:
    """Damped Newton on the maximum-entropy dual with Armijo backtracking."""
    k, a = p.k, p.half_width
    x, w = _gl_nodes(max(200, 20 * k), -a, a)
    logw = np.log(w)
    P = _basis_matrix(x, k, p.basis, a)
    target = _basis_moments(np.asarray(p.target_moments), k, p.basis, a)

    def evaluate(b):
        e = logw - P @ b
        log_z = float(special.logsumexp(e))
        prob = np.exp(e - log_z)
        return log_z + float(b @ target), log_z, prob

    b = np.zeros(k)
    obj, log_z, prob = evaluate(b)
    trace = [obj]
    ill = False
    converged = False
    it = 0
    while True:
        mean = prob @ P
        residual = mean - target
        if k == 0 or np.max(np.abs(residual)) <= p.tol:
            converged = True
            break
        if it >= p.max_iter:
            break
        grad = target - mean
        centered = P - mean
        hess = centered.T @ (prob[:, None] * centered)
        if p.basis == "monomial" and np.linalg.cond(hess) > ILL_CONDITIONED:
            ill = True
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        slope = float(grad @ step)
        if not slope < 0:  # numerically singular Hessian: use steepest descent
            step = -grad
            slope = -float(grad @ grad)
        t = 1.0
        while True:
            new_obj, new_log_z, new_prob = evaluate(b + t * step)
            if new_obj <= obj + ARMIJO_C * t * slope or t < 1e-12:
                break
            t *= BACKTRACK
        if not new_obj <= obj:
            break  # no descent left at working precision
        b = b + t * step
        obj, log_z, prob = new_obj, new_log_z, new_prob
        trace.append(obj)
        it += 1
    return MaxentSolution(
        coeffs=b,
        log_z=log_z,
        residuals=residual,
        iterations=it,
        converged=converged,
        basis=p.basis,
        half_width=a,
        ill_conditioned=ill,
        objective_trace=trace,
    )


def maxent_k_schedule(sigma: float, alpha: float, tau2: float, B: float) -> int:
    """Number of moments ``ceil(B sigma^(-alpha) |log sigma|^(alpha / tau2))``."""
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    if not B > 0:
        raise ValueError("B must be positive")
    if not (alpha >= 2 and tau2 > 0):
        raise ValueError("need alpha >= 2 and tau2 > 0")
    val = B * sigma ** (-alpha) * abs(math.log(sigma)) ** (alpha / tau2)
    return int(math.ceil(val - 1e-12 * val))


def smoothed_sup_gap(f: GridDensity, f_m: GridDensity, sigma: float) -> float:
    """Sup-norm gap between the ``sigma``-smoothed versions of two densities.

    ``f_m`` is resampled onto the grid of ``f`` if needed.
    """
    if not f_m.same_grid(f):
        f_m = f_m.resample(f.lo, f.hi, f.n)
    return float(np.max(np.abs(gaussian_convolve(f, sigma).values - gaussian_convolve(f_m, sigma).values)))


def _grid_quantile(f: GridDensity, u: float) -> float:
    """Inverse of the exact CDF of the piecewise-linear interpolant of ``f``."""
    cdf = f.cdf_nodes() / f.integral()
    i = int(np.clip(np.searchsorted(cdf, u) - 1, 0, f.n - 2))
    v0, v1 = f.values[i], f.values[i + 1]
    h = f.step
    norm = f.integral()
    need = (u - cdf[i]) * norm
    slope = (v1 - v0) / h
    # solve v0 t + slope t^2 / 2 = need on [0, h]
    if abs(slope) < 1e-300:
        t = need / v0
    else:
        disc = max(v0 * v0 + 2.0 * slope * need, 0.0)
        t = 2.0 * need / (v0 + math.sqrt(disc))
    return f.lo + i * h + t


def quantile_derivatives(f, u: float, order: int, mode: str = "derived") -> float:
    """Derivative of the quantile function ``Q = F^{-1}`` of order 1, 2 or 3.

    Parameters
    ----------
    f : GridDensity or TruthSpec
        Density; derivatives of tabulated densities use central differences.
    u : float
        Level in ``(0, 1)``.
    order : {1, 2, 3}
    mode : {"derived", "sign_flipped"}
        The third derivative is ``3 f'^2 / f^5 - f'' / f^4`` by the chain
        rule (``"derived"``); ``"sign_flipped"`` flips the sign of the first term.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if mode not in ("derived", "sign_flipped"):
        raise ValueError("mode must be 'derived' or 'sign_flipped'")
    if not 0 < u < 1:
        raise ValueError("u must lie in (0, 1)")
    if isinstance(f, GridDensity):
        x = _grid_quantile(f, u)
        scale = 1.0 / f.integral()
        d0 = scale * float(np.interp(x, f.x, f.values))
        d1 = scale * float(np.interp(x, f.x, f.derivative(1)))
        d2 = scale * float(np.interp(x, f.x, f.derivative(2)))
    elif isinstance(f, TruthSpec):
        x = quantile_function(f, u)
        h = 1e-3
        vals = f.pdf(np.array([x - h, x, x + h]))
        d0 = float(vals[1])
        d1 = float(vals[2] - vals[0]) / (2 * h)
        d2 = float(vals[2] - 2 * vals[1] + vals[0]) / (h * h)
    else:
        raise TypeError("f must be a GridDensity or TruthSpec")
    if d0 < 1e-10:
        raise SingularityError(f"density {d0:.3g} at the {u}-quantile is too small")
    if order == 1:
        return 1.0 / d0
    if order == 2:
        return -d1 / d0**3
    sign = 1.0 if mode == "derived" else -1.0
    return sign * 3.0 * d1 * d1 / d0**5 - d2 / d0**4
