"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np
from scipy import special

_NORM = 1.0 / np.sqrt(2.0 * np.pi)
# bound on the size of the temporary (points x centers) matrix
_CHUNK = 1 << 20


def gauss_mix(y, centers, weights, sigma):
    """Evaluate ``sum_j weights[j] * N(y; centers[j], sigma^2)`` at each ``y``."""
    y = np.ascontiguousarray(y, dtype=float)
    centers = np.ascontiguousarray(centers, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    out = np.empty(y.shape[0])
    rows = max(1, _CHUNK // max(1, centers.shape[0]))
    for start in range(0, y.shape[0], rows):
        z = (y[start:start + rows, None] - centers[None, :]) / sigma
        out[start:start + rows] = np.exp(-0.5 * z * z) @ weights
    return out * (_NORM / sigma)


def gauss_mix_batch(y, centers, weights, sigmas):
    """Row ``d`` is the mixture with centers ``centers[d]`` and scale ``sigmas[d]``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    return np.stack(
        [gauss_mix(y, centers[d], weights, sigmas[d]) for d in range(centers.shape[0])]
    ) if centers.shape[0] else np.empty((0, np.asarray(y).shape[0]))


def cosine_design(x, J, a):
    """Columns ``1/sqrt(2), cos(2 pi a x), ..., cos(2 pi J a x)``."""
    x = np.asarray(x, dtype=float)
    out = np.cos(2.0 * np.pi * a * np.outer(x, np.arange(J + 1)))
    out[:, 0] = np.sqrt(0.5)
    return out


_FAR = 38.0
_FLAT = 1e-9


def _interval_prob(a, b):
    """P(a <= Z <= b) for standard normal Z, accurate in both tails."""
    upper = special.ndtr(-a) - special.ndtr(-b)
    lower = special.ndtr(b) - special.ndtr(a)
    return np.where(a >= 0.0, upper, lower)


def _segment_masses(y, values, sigma):
    """Matrix of per-segment contributions to the model density (rows: y)."""
    values = np.asarray(values, dtype=float)
    dx = 1.0 / (values.size - 1)
    lo = np.minimum(values[:-1], values[1:])
    hi = np.maximum(values[:-1], values[1:])
    y = np.asarray(y, dtype=float)[:, None]
    a = (lo - y) / sigma
    b = (hi - y) / sigma
    flat = (b - a) < _FLAT
    width = np.where(flat, 1.0, hi - lo)
    mass = dx * _interval_prob(a, b) / width
    mid = 0.5 * (a + b)
    mass = np.where(flat, dx * np.exp(-0.5 * mid * mid) / (sigma * np.sqrt(2 * np.pi)), mass)
    return np.where((a > _FAR) | (b < -_FAR), 0.0, mass), a, b


def pl_mix_density(y, values, sigma):
    """Model density for a transfer function linear between equally spaced nodes."""
    return _segment_masses(y, values, sigma)[0].sum(axis=1)


def pl_sample_latents(y, values, sigma, u_segment, u_within):
    """Exact latent draws given a piecewise-linear transfer function."""
    values = np.asarray(values, dtype=float)
    G = values.size
    dx = 1.0 / (G - 1)
    mass, a, b = _segment_masses(y, values, sigma)
    total = mass.sum(axis=1)
    cum = np.cumsum(mass, axis=1)
    target = np.asarray(u_segment) * total
    k = np.minimum((cum < target[:, None]).sum(axis=1), G - 2)
    rows = np.arange(k.size)
    a, b = a[rows, k], b[rows, k]
    u = np.asarray(u_within, dtype=float)
    pos = a >= 0.0
    pa = np.where(pos, special.ndtr(-a), special.ndtr(a))
    pb = np.where(pos, special.ndtr(-b), special.ndtr(b))
    with np.errstate(invalid="ignore"):
        z = np.where(pos, -special.ndtri(pb + u * (pa - pb)), special.ndtri(pa + u * (pb - pa)))
    z = np.clip(z, a, b)
    va, vb = values[k], values[k + 1]
    flat = (b - a) < _FLAT
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(flat, u, (np.asarray(y) + sigma * z - va) / (vb - va))
    t = np.clip(np.nan_to_num(t, nan=0.5), 0.0, 1.0)
    eta = (k + t) * dx
    dead = total <= 0.0
    if np.any(dead):
        mids = 0.5 * (values[:-1] + values[1:])
        kk = np.argmin(np.abs(np.asarray(y)[dead][:, None] - mids[None, :]), axis=1)
        eta[dead] = (kk + u[dead]) * dx
    return eta, total
