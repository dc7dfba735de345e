# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Gaussian mixture sums and the cosine design matrix."""
import numpy as np

from libc.math cimport cos, erfc, exp, fabs, sqrt, M_PI
from scipy.special.cython_special cimport ndtri

# exp(-0.5 * 1400) underflows to zero in double precision
cdef double _CUTOFF = 1400.0


cdef inline double _mix_at(double yi, const double[::1] centers,
                           const double[::1] weights, double inv) noexcept nogil:
    cdef Py_ssize_t j
    cdef double z, acc = 0.0
    for j in range(centers.shape[0]):
        z = (yi - centers[j]) * inv
        z = z * z
        if z < _CUTOFF:
            acc += weights[j] * exp(-0.5 * z)
    return acc


def gauss_mix(const double[::1] y, const double[::1] centers,
              const double[::1] weights, double sigma):
    """Evaluate ``sum_j weights[j] * N(y; centers[j], sigma^2)`` at each ``y``."""
    cdef Py_ssize_t i, m = y.shape[0]
    cdef double inv = 1.0 / sigma
    cdef double norm = inv / sqrt(2.0 * M_PI)
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            o[i] = norm * _mix_at(y[i], centers, weights, inv)
    return out


def gauss_mix_batch(const double[::1] y, const double[:, ::1] centers,
                    const double[::1] weights, const double[::1] sigmas):
    """Row ``d`` is the mixture with centers ``centers[d]`` and scale ``sigmas[d]``."""
    cdef Py_ssize_t d, i, n_draws = centers.shape[0], m = y.shape[0]
    cdef double inv, norm
    out = np.empty((n_draws, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for d in range(n_draws):
            inv = 1.0 / sigmas[d]
            norm = inv / sqrt(2.0 * M_PI)
            for i in range(m):
                o[d, i] = norm * _mix_at(y[i], centers[d], weights, inv)
    return out


def cosine_design(const double[::1] x, Py_ssize_t J, double a):
    """Columns ``1/sqrt(2), cos(2 pi a x), ..., cos(2 pi J a x)``.

    Uses the Chebyshev recurrence ``cos((j+1)t) = 2 cos(t) cos(jt) - cos((j-1)t)``
    so only one trigonometric call is made per row.
    """
    cdef Py_ssize_t i, j, n = x.shape[0]
    cdef double c1, prev, cur, nxt
    cdef double r2 = sqrt(0.5)
    out = np.empty((n, J + 1), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            o[i, 0] = r2
            if J >= 1:
                c1 = cos(2.0 * M_PI * a * x[i])
                o[i, 1] = c1
                prev = 1.0
                cur = c1
                for j in range(2, J + 1):
                    nxt = 2.0 * c1 * cur - prev
                    o[i, j] = nxt
                    prev = cur
                    cur = nxt
    return out


# standardized distance beyond which a segment carries no mass
cdef double _FAR = 38.0
cdef double _FLAT = 1e-9


cdef inline double _interval_prob(double a, double b) noexcept nogil:
    """P(a <= Z <= b) for standard normal Z, accurate in both tails."""
    if a >= 0.0:
        return 0.5 * (erfc(a / sqrt(2.0)) - erfc(b / sqrt(2.0)))
    if b <= 0.0:
        return 0.5 * (erfc(-b / sqrt(2.0)) - erfc(-a / sqrt(2.0)))
    return 1.0 - 0.5 * erfc(-a / sqrt(2.0)) - 0.5 * erfc(b / sqrt(2.0))


cdef inline double _segment_mass(double yi, double va, double vb, double dx,
                                 double sigma) noexcept nogil:
    """Integral over one segment of phi_sigma(y - mu(x)) for linear mu."""
    cdef double lo = va if va < vb else vb
    cdef double hi = vb if va < vb else va
    cdef double a = (lo - yi) / sigma
    cdef double b = (hi - yi) / sigma
    cdef double mid
    if a > _FAR or b < -_FAR:
        return 0.0
    if b - a < _FLAT:
        mid = 0.5 * (a + b)
        return dx * exp(-0.5 * mid * mid) / (sigma * sqrt(2.0 * M_PI))
    return dx * _interval_prob(a, b) / (hi - lo)


def pl_mix_density(const double[::1] y, const double[::1] values, double sigma):
    """Model density at each ``y`` for a transfer function that is linear between
    equally spaced nodes on [0, 1] with the given ``values``."""
    cdef Py_ssize_t i, k, m = y.shape[0], G = values.shape[0]
    cdef double dx = 1.0 / (G - 1)
    cdef double acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            acc = 0.0
            for k in range(G - 1):
                acc += _segment_mass(y[i], values[k], values[k + 1], dx, sigma)
            o[i] = acc
    return out


def pl_sample_latents(const double[::1] y, const double[::1] values, double sigma,
                      const double[::1] u_segment, const double[::1] u_within):
    """Exact draws of the latents from their full conditional given a
    piecewise-linear transfer function, driven by the supplied uniforms.

    Returns the draws and the model density at each ``y`` (the normalizer)."""
    cdef Py_ssize_t i, k, j, m = y.shape[0], G = values.shape[0]
    cdef double dx = 1.0 / (G - 1)
    cdef double total, target, acc, va, vb, lo, hi, a, b, pa, pb, z, w, t
    cdef double[::1] buf = np.empty(G - 1, dtype=np.float64)
    eta = np.empty(m, dtype=np.float64)
    dens = np.empty(m, dtype=np.float64)
    cdef double[::1] e = eta
    cdef double[::1] d = dens
    with nogil:
        for i in range(m):
            total = 0.0
            for k in range(G - 1):
                buf[k] = _segment_mass(y[i], values[k], values[k + 1], dx, sigma)
                total += buf[k]
            d[i] = total
            if total <= 0.0:
                # every segment is numerically out of reach: fall back to the
                # segment whose values come closest to y
                k = 0
                acc = 1e300
                for j in range(G - 1):
                    w = fabs(0.5 * (values[j] + values[j + 1]) - y[i])
                    if w < acc:
                        acc = w
                        k = j
                e[i] = (k + u_within[i]) * dx
                continue
            target = u_segment[i] * total
            acc = 0.0
            k = 0
            while k < G - 2 and acc + buf[k] < target:
                acc += buf[k]
                k += 1
            va = values[k]
            vb = values[k + 1]
            lo = va if va < vb else vb
            hi = vb if va < vb else va
            a = (lo - y[i]) / sigma
            b = (hi - y[i]) / sigma
            if b - a < _FLAT:
                t = u_within[i]
            else:
                # truncated normal on [a, b], sampled on the side nearer zero
                if a >= 0.0:
                    pa = 0.5 * erfc(a / sqrt(2.0))
                    pb = 0.5 * erfc(b / sqrt(2.0))
                    z = -ndtri(pb + u_within[i] * (pa - pb))
                else:
                    pa = 0.5 * erfc(-a / sqrt(2.0))
                    pb = 0.5 * erfc(-b / sqrt(2.0))
                    z = ndtri(pa + u_within[i] * (pb - pa))
                if z < a:
                    z = a
                if z > b:
                    z = b
                w = y[i] + sigma * z
                t = (w - va) / (vb - va)
                if t < 0.0:
                    t = 0.0
                if t > 1.0:
                    t = 1.0
            e[i] = (k + t) * dx
    return eta, dens
