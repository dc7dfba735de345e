"""Densities, transfer functions and the latent-variable density map.

The model density of a transfer function ``mu`` on ``[0, 1]`` and noise scale
``sigma`` is the integral over ``x`` in ``[0, 1]`` of ``phi_sigma(y - mu(x))``.
When ``mu`` is the quantile function of a density ``f0`` this equals the
Gaussian convolution ``phi_sigma * f0``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import kernels

__all__ = [
    "GridDensity",
    "TransferFunction",
    "QuantileTransfer",
    "CosineSeries",
    "Tabulated",
    "TruthSpec",
    "TruncatedNormal",
    "GaussianMixture",
    "normal",
    "TruncatedMixture",
    "Uniform",
    "Custom",
    "QuadratureSpec",
    "EvaluationError",
    "ResolutionError",
    "DegenerateTruncationError",
    "eval_model_density",
    "quantile_function",
    "gaussian_convolve",
    "truncate_and_normalize",
    "superlevel_interval",
    "mixing_measure",
    "continuous_quantile_approx",
    "sup_distance",
    "read_grid_density",
    "write_grid_density",
]

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class EvaluationError(ValueError):
    """A transfer function produced a non-finite value where one is required."""


class ResolutionError(ValueError):
    """The grid is too coarse for the requested kernel width."""


class DegenerateTruncationError(ValueError):
    """The superlevel set used for truncation is empty."""


def _normal_interval(a, b):
    """``P(a <= Z <= b)`` for standard normal ``Z``, without cancellation in either tail."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return np.where(a >= 0.0, special.ndtr(-a) - special.ndtr(-b), special.ndtr(b) - special.ndtr(a))


def _phi(z):
    return np.exp(-0.5 * np.square(z) - _LOG_SQRT_2PI)


# ---------------------------------------------------------------------------
# Tabulated densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative density tabulated at uniform nodes on ``[lo, hi]``.

    Parameters
    ----------
    lo, hi : float
        First and last node.
    values : array_like
        Density ordinates at the ``len(values)`` equally spaced nodes.
    """

    lo: float
    hi: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("a GridDensity needs at least two nodes")
        if not self.hi > self.lo:
            raise ValueError("grid requires hi > lo")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        if np.any(vals < 0):
            raise ValueError("grid values must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights of the grid."""
        w = np.full(self.n, self.step)
        w[[0, -1]] *= 0.5
        return w

    def integral(self) -> float:
        return float(self.weights @ self.values)

    def is_normalized(self, tol: float = 1e-3) -> bool:
        return abs(self.integral() - 1.0) <= tol

    def normalized(self) -> "GridDensity":
        return GridDensity(self.lo, self.hi, self.values / self.integral())

    def __call__(self, y) -> np.ndarray:
        """Linear interpolation, zero outside ``[lo, hi]``."""
        return np.interp(y, self.x, self.values, left=0.0, right=0.0)

    def resample(self, lo: float, hi: float, n: int) -> "GridDensity":
        return GridDensity(lo, hi, self(np.linspace(lo, hi, n)))

    def same_grid(self, other: "GridDensity", rtol: float = 1e-12) -> bool:
        scale = max(abs(self.lo), abs(self.hi), 1.0)
        return (
            self.n == other.n
            and abs(self.lo - other.lo) <= rtol * scale
            and abs(self.hi - other.hi) <= rtol * scale
        )

    def cdf_nodes(self) -> np.ndarray:
        """Cumulative trapezoid integral at each node."""
        inc = 0.5 * self.step * (self.values[1:] + self.values[:-1])
        return np.concatenate([[0.0], np.cumsum(inc)])

    def derivative(self, order: int = 1) -> np.ndarray:
        """Central finite-difference derivative at the nodes (one-sided at the ends)."""
        d = self.values
        for _ in range(order):
            d = np.gradient(d, self.step, edge_order=2)
        return d


def write_grid_density(f: GridDensity, path) -> None:
    """Write ``f`` as two-column text with a ``# lo hi step n`` header."""
    header = f"{f.lo!r} {f.hi!r} {f.step!r} {f.n}"
    np.savetxt(path, np.column_stack([f.x, f.values]), fmt="%.17g", header=header)


def read_grid_density(path) -> GridDensity:
    """Read a file written by :func:`write_grid_density`."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing '# lo hi step n' header")
    lo, hi, step, n = first[1:].split()
    data = np.loadtxt(path, comments="#", ndmin=2)
    n = int(n)
    if data.shape != (n, 2):
        raise ValueError(f"{path}: header declares {n} rows, found {data.shape[0]}")
    lo, hi, step = float(lo), float(hi), float(step)
    if not math.isclose(step, (hi - lo) / (n - 1), rel_tol=1e-9):
        raise ValueError(f"{path}: step inconsistent with lo, hi and n")
    return GridDensity(lo, hi, np.clip(data[:, 1], 0.0, None))


# ---------------------------------------------------------------------------
# True densities
# ---------------------------------------------------------------------------


class TruthSpec:
    """Base class of reference densities with a pdf, cdf and support."""

    lo: float = -math.inf
    hi: float = math.inf

    def pdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def compact(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def bracket(self, eps: float = 1e-16) -> tuple[float, float]:
        """Finite interval carrying all but about ``eps`` of the mass."""
        lo, hi = self.lo, self.hi
        if not math.isfinite(lo):
            lo = -1.0
            while self.cdf(lo) > eps:
                lo *= 2.0
        if not math.isfinite(hi):
            hi = 1.0
            while 1.0 - self.cdf(hi) > eps:
                hi *= 2.0
        return float(lo), float(hi)

    def to_grid(self, n: int = 2048, pad: float = 0.0, eps: float = 1e-12) -> GridDensity:
        lo, hi = self.effective_support(eps)
        return GridDensity(lo - pad, hi + pad, self.pdf(np.linspace(lo - pad, hi + pad, n)))

    def effective_support(self, eps: float = 1e-12) -> tuple[float, float]:
        """Support, or the ``eps`` and ``1 - eps`` quantiles for unbounded tails."""
        lo = self.lo if math.isfinite(self.lo) else float(quantile_function(self, eps))
        hi = self.hi if math.isfinite(self.hi) else float(quantile_function(self, 1.0 - eps))
        return lo, hi

    def mean(self) -> float:
        lo, hi = self.bracket()
        x, w = _gl_nodes(4096, lo, hi)
        return float(w @ (x * self.pdf(x)))


def _check_weights(weights, means, sds):
    w = np.asarray(weights, dtype=float)
    m = np.asarray(means, dtype=float)
    s = np.asarray(sds, dtype=float)
    if not (w.shape == m.shape == s.shape) or w.ndim != 1:
        raise ValueError("weights, means and sds must be equal-length sequences")
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    if np.any(s <= 0):
        raise ValueError("standard deviations must be positive")
    return w, m, s


@dataclass(frozen=True)
class GaussianMixture(TruthSpec):
    """Finite Gaussian location-scale mixture on the real line."""

    weights: Sequence[float]
    means: Sequence[float]
    sds: Sequence[float]

    def __post_init__(self):
        w, m, s = _check_weights(self.weights, self.means, self.sds)
        object.__setattr__(self, "weights", tuple(w))
        object.__setattr__(self, "means", tuple(m))
        object.__setattr__(self, "sds", tuple(s))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(np.asarray(self.weights) * _phi((x - self.means) / self.sds) / self.sds, axis=-1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(np.asarray(self.weights) * special.ndtr((x - self.means) / self.sds), axis=-1)


def normal(mean: float = 0.0, sd: float = 1.0) -> GaussianMixture:
    """Single Gaussian as a one-component mixture."""
    return GaussianMixture((1.0,), (mean,), (sd,))


@dataclass(frozen=True)
class TruncatedMixture(TruthSpec):
    """Mixture of Gaussians, each truncated to ``[lo, hi]`` and renormalized."""

    weights: Sequence[float]
    means: Sequence[float]
    sds: Sequence[float]
    lo: float = -2.0
    hi: float = 2.0

    def __post_init__(self):
        w, m, s = _check_weights(self.weights, self.means, self.sds)
        if not self.hi > self.lo:
            raise ValueError("truncation requires hi > lo")
        mass = special.ndtr((self.hi - m) / s) - special.ndtr((self.lo - m) / s)
        if np.any(mass <= 0):
            raise ValueError("a component has no mass inside the truncation interval")
        object.__setattr__(self, "weights", tuple(w))
        object.__setattr__(self, "means", tuple(m))
        object.__setattr__(self, "sds", tuple(s))
        object.__setattr__(self, "_mass", mass)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / self.sds
        comp = np.asarray(self.weights) * _phi(z) / (np.asarray(self.sds) * self._mass)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, comp.sum(axis=-1), 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)[..., None]
        low = special.ndtr((self.lo - np.asarray(self.means)) / self.sds)
        comp = (special.ndtr((x - self.means) / self.sds) - low) / self._mass
        return np.sum(np.asarray(self.weights) * comp, axis=-1)

    def smoothed_pdf(self, x, sigma0: float) -> np.ndarray:
        """Closed-form density of the mixture convolved with ``N(0, sigma0^2)``."""
        x = np.asarray(x, dtype=float)[..., None]
        m = np.asarray(self.means)
        s = np.asarray(self.sds)
        tot = np.sqrt(s**2 + sigma0**2)
        # posterior of the latent given the sum, restricted to the interval
        post_mean = (m * sigma0**2 + x * s**2) / tot**2
        post_sd = s * sigma0 / tot
        window = _normal_interval((self.lo - post_mean) / post_sd, (self.hi - post_mean) / post_sd)
        comp = _phi((x - m) / tot) / tot * window / self._mass
        return np.sum(np.asarray(self.weights) * comp, axis=-1)


def TruncatedNormal(mean: float = 0.0, sd: float = 1.0, lo: float = -2.0, hi: float = 2.0):
    """Normal density truncated to ``[lo, hi]`` and renormalized."""
    return TruncatedMixture((1.0,), (mean,), (sd,), lo, hi)


@dataclass(frozen=True)
class Uniform(TruthSpec):
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform requires hi > lo")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)


@dataclass(frozen=True)
class Custom(TruthSpec):
    """Truth given by a tabulated density (linearly interpolated)."""

    grid: GridDensity

    def __post_init__(self):
        g = self.grid.normalized()
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "lo", g.lo)
        object.__setattr__(self, "hi", g.hi)
        object.__setattr__(self, "_cdf", g.cdf_nodes())

    def pdf(self, x):
        return self.grid(x)

    def cdf(self, x):
        # exact integral of the piecewise-linear interpolant
        g = self.grid
        x = np.clip(np.asarray(x, dtype=float), g.lo, g.hi)
        idx = np.clip(((x - g.lo) / g.step).astype(int), 0, g.n - 2)
        t = x - (g.lo + idx * g.step)
        v0 = g.values[idx]
        slope = (g.values[idx + 1] - v0) / g.step
        return np.minimum(self._cdf[idx] + v0 * t + 0.5 * slope * t * t, 1.0)


# ---------------------------------------------------------------------------
# Quantiles
# ---------------------------------------------------------------------------

_BISECTION_STEPS = 60


def quantile_function(f: TruthSpec, u):
    """Inverse CDF by bracketed bisection.

    Parameters
    ----------
    f : TruthSpec
        Reference density.
    u : float or array_like
        Probabilities strictly inside ``(0, 1)``.

    Returns
    -------
    float or ndarray
        Points ``x`` with ``F(x) = u``.  Sixty halvings of the bracket give an
        absolute accuracy far below 1e-10 for brackets narrower than 1e6.
    """
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~(u > 0.0) | ~(u < 1.0)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    lo, hi = f.bracket(min(1e-300, float(u.min()), float(1.0 - u.max())) * 0.5)
    a = np.full(u.shape, lo)
    b = np.full(u.shape, hi)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (a + b)
        below = f.cdf(mid) < u
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    out = 0.5 * (a + b)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Transfer functions
# ---------------------------------------------------------------------------


class TransferFunction:
    """A map from ``[0, 1]`` to the real line."""

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Interior points where the function has a kink (quadrature splits there)."""
        return ()

    def shifted(self, c: float) -> "TransferFunction":
        raise NotImplementedError


@dataclass(frozen=True)
class QuantileTransfer(TransferFunction):
    """Quantile function of ``truth``, optionally clamped and shifted.

    Evaluates ``F^{-1}(clip(x, clamp, 1 - clamp)) + shift``; the end points map
    to the support bounds, which are infinite for full-support truths.
    """

    truth: TruthSpec
    clamp: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.clamp < 0.5:
            raise ValueError("clamp must lie in [0, 1/2)")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = np.clip(x, self.clamp, 1.0 - self.clamp)
        out = np.empty(u.shape)
        interior = (u > 0.0) & (u < 1.0)
        if interior.any():
            out[interior] = quantile_function(self.truth, u[interior])
        out[u <= 0.0] = self.truth.lo
        out[u >= 1.0] = self.truth.hi
        return out + self.shift

    def breakpoints(self):
        return (self.clamp, 1.0 - self.clamp) if self.clamp > 0 else ()

    def shifted(self, c):
        return QuantileTransfer(self.truth, self.clamp, self.shift + c)


@dataclass(frozen=True)
class CosineSeries(TransferFunction):
    """``sum_j coeffs[j] * b * phi_j(a t)`` with ``phi_0 = 1/sqrt(2)``, ``phi_j = cos(2 pi j .)``."""

    coeffs: np.ndarray
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if not np.all(np.isfinite(c)):
            raise ValueError("series coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def J(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        design = kernels.cosine_design(x.ravel(), self.J, self.a)
        return (self.b * design @ self.coeffs).reshape(x.shape)

    def shifted(self, c):
        coeffs = self.coeffs.copy()
        coeffs[0] += c * _SQRT2 / self.b
        return CosineSeries(coeffs, self.a, self.b)


@dataclass(frozen=True)
class Tabulated(TransferFunction):
    """Values at equally spaced nodes on ``[0, 1]`` joined linearly."""

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.size < 2:
            raise ValueError("a tabulated transfer needs at least two nodes")
        object.__setattr__(self, "values", v)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.size)

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.nodes, self.values)

    def shifted(self, c):
        return Tabulated(self.values + c)

    @classmethod
    def constant(cls, c: float) -> "Tabulated":
        return cls(np.array([c, c], dtype=float))

    @classmethod
    def from_function(cls, fn, n: int = 4096) -> "Tabulated":
        return cls(np.asarray(fn(np.linspace(0.0, 1.0, n)), dtype=float))


def sup_distance(mu1: TransferFunction, mu2: TransferFunction, n: int = 4096) -> float:
    """Sup-norm distance of two transfer functions on ``n`` uniform points of ``[0, 1]``."""
    x = np.linspace(0.0, 1.0, n)
    with np.errstate(invalid="ignore"):
        d = np.abs(mu1(x) - mu2(x))
    d = np.where(np.isnan(d), np.inf, d)
    return float(d.max())


# ---------------------------------------------------------------------------
# Model density
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature rule on ``[0, 1]``.

    ``panels`` splits the interval into equal pieces, each integrated with
    ``nodes`` points; extra splits are added at the transfer function's kinks.
    """

    rule: str = "gauss-legendre"
    nodes: int = 256
    panels: int = 1

    def __post_init__(self):
        if self.rule not in ("gauss-legendre", "trapezoid"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes < 16:
            raise ValueError("quadrature needs at least 16 nodes")
        if self.panels < 1:
            raise ValueError("panels must be positive")

    def points(self, breaks: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        edges = np.linspace(0.0, 1.0, self.panels + 1)
        edges = np.unique(np.concatenate([edges, [b for b in breaks if 0.0 < b < 1.0]]))
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            if self.rule == "gauss-legendre":
                x, w = _gl_nodes(self.nodes, a, b)
            else:
                x = np.linspace(a, b, self.nodes)
                w = np.full(self.nodes, (b - a) / (self.nodes - 1))
                w[[0, -1]] *= 0.5
            xs.append(x)
            ws.append(w)
        return np.concatenate(xs), np.concatenate(ws)


@functools.lru_cache(maxsize=64)
def _gl_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gl_nodes(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gl_unit(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def transfer_at_nodes(mu: TransferFunction, quad: QuadratureSpec):
    """Transfer values and weights at the quadrature nodes, with finiteness checks.

    Infinite values are tolerated only at the end points of ``[0, 1]``, where
    the Gaussian kernel gives them zero weight.
    """
    x, w = quad.points(mu.breakpoints())
    vals = np.asarray(mu(x), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        ends = (x == 0.0) | (x == 1.0)
        interior_bad = bad & ~(ends & np.isinf(vals))
        if np.any(interior_bad):
            i = int(np.flatnonzero(interior_bad)[0])
            raise EvaluationError(f"transfer function is not finite at node x={x[i]!r}")
        vals, w = vals[~bad], w[~bad]
    return vals, w


def eval_model_density(mu: TransferFunction, sigma: float, y, quad: QuadratureSpec | None = None):
    """Integral over ``[0, 1]`` of ``phi_sigma(y - mu(x))`` by the given quadrature.

    Parameters
    ----------
    mu : TransferFunction
    sigma : float
        Noise standard deviation, positive.
    y : float or array_like
        Evaluation points.
    quad : QuadratureSpec, optional
        Defaults to 256-node Gauss-Legendre.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    quad = quad or QuadratureSpec()
    centers, w = transfer_at_nodes(mu, quad)
    out = kernels.gauss_mix(np.ravel(y), centers, w, sigma)
    return float(out[0]) if np.ndim(y) == 0 else out.reshape(np.shape(y))


def gaussian_convolve(f: GridDensity, sigma: float) -> GridDensity:
    """Convolve a tabulated density with ``N(0, sigma^2)`` by direct summation.

    The output grid keeps the input spacing and extends it by at least
    ``8 sigma`` on each side.  The discrete kernel is renormalized to unit
    trapezoid mass so total mass is preserved even for coarse grids.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    h = f.step
    if sigma < 0.5 * h:
        raise ResolutionError(f"sigma={sigma} is below half the grid step {h}")
    ext = int(math.ceil(8.0 * sigma / h))
    kern = _phi(np.arange(-ext, ext + 1) * h / sigma)
    kern /= kern.sum()
    vals = np.convolve(f.values * f.weights / h, kern)
    # trapezoid half-weights at the input ends become full weights in the
    # output interior, so rescale the mass back exactly
    out = GridDensity(f.lo - ext * h, f.hi + ext * h, np.clip(vals, 0.0, None))
    return GridDensity(out.lo, out.hi, out.values * (f.integral() / out.integral()))


# ---------------------------------------------------------------------------
# Truncation and push-forward measures
# ---------------------------------------------------------------------------


def superlevel_interval(f0: GridDensity, threshold: float) -> tuple[float, float, slice]:
    """Largest interval on which ``f0 > threshold``.

    Returns the interpolated crossing points and the slice of interior nodes.
    """
    above = f0.values > threshold
    if not np.any(above):
        raise DegenerateTruncationError(f"no grid value exceeds threshold {threshold}")
    # longest run of consecutive nodes above the threshold
    padded = np.concatenate([[False], above, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, stops = edges[::2], edges[1::2]
    k = int(np.argmax(stops - starts))
    i0, i1 = int(starts[k]), int(stops[k]) - 1
    x, v = f0.x, f0.values

    def crossing(i_in, i_out):
        if i_out < 0 or i_out >= f0.n:
            return x[i_in]
        t = (v[i_in] - threshold) / (v[i_in] - v[i_out])
        return x[i_in] + t * (x[i_out] - x[i_in])

    return float(crossing(i0, i0 - 1)), float(crossing(i1, i1 + 1)), slice(i0, i1 + 1)


def truncate_and_normalize(f0: GridDensity, threshold: float) -> tuple[GridDensity, float]:
    """Restrict ``f0`` to its superlevel interval above ``threshold`` and renormalize.

    Returns
    -------
    (GridDensity, float)
        The truncated density on the original grid and the retained mass
        ``psi``.  The mass includes the partial cells up to the interpolated
        crossing points.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    d, e, sl = superlevel_interval(f0, threshold)
    x, v = f0.x, f0.values
    i0, i1 = sl.start, sl.stop - 1
    mass = float(np.trapezoid(v[sl], x[sl])) if i1 > i0 else 0.0
    # partial cells between the crossing points and the first/last kept node
    mass += 0.5 * (x[i0] - d) * (v[i0] + threshold) if d < x[i0] else 0.0
    mass += 0.5 * (e - x[i1]) * (v[i1] + threshold) if e > x[i1] else 0.0
    if threshold == 0.0:
        mass = f0.integral()
    if not mass > 0:
        raise DegenerateTruncationError("superlevel set carries no mass")
    kept = np.zeros_like(v)
    kept[sl] = v[sl]
    return GridDensity(f0.lo, f0.hi, kept / mass), min(mass, 1.0)


def mixing_measure(mu: TransferFunction, interval: tuple[float, float], n: int = 1 << 17) -> float:
    """Lebesgue measure of ``{x in [0, 1] : mu(x) in [c, d]}`` by midpoint counting."""
    c, d = interval
    if c > d:
        raise ValueError("interval must satisfy c <= d")
    vals = mu((np.arange(n) + 0.5) / n)
    return float(np.count_nonzero((vals >= c) & (vals <= d))) / n


def continuous_quantile_approx(f0: TruthSpec, delta: float) -> QuantileTransfer:
    """Quantile function clamped to ``[delta, 1 - delta]``, finite on all of ``[0, 1]``."""
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    return QuantileTransfer(f0, clamp=delta)
