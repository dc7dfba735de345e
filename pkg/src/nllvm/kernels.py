"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set the environment variable ``NLLVM_PURE_PYTHON=1`` before import to force
the numpy implementation.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("NLLVM_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py


def _vec(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def gauss_mix(y, centers, weights, sigma: float) -> np.ndarray:
    """Gaussian mixture ``sum_j w_j phi_sigma(y - c_j)`` evaluated at each ``y``."""
    return _impl.gauss_mix(_vec(np.atleast_1d(y)), _vec(centers), _vec(weights), float(sigma))


def gauss_mix_batch(y, centers, weights, sigmas) -> np.ndarray:
    """One mixture per row of ``centers``, each with its own scale."""
    c = np.ascontiguousarray(np.atleast_2d(centers), dtype=np.float64)
    return _impl.gauss_mix_batch(_vec(np.atleast_1d(y)), c, _vec(weights), _vec(sigmas))


def cosine_design(x, J: int, a: float) -> np.ndarray:
    """Design matrix of the cosine basis ``phi_j(a x)``, ``j = 0..J``."""
    return _impl.cosine_design(_vec(np.atleast_1d(x)), int(J), float(a))


def pl_mix_density(y, values, sigma: float) -> np.ndarray:
    """Model density at ``y`` for a transfer function linear between equally
    spaced nodes on ``[0, 1]``, in closed form."""
    return _impl.pl_mix_density(_vec(np.atleast_1d(y)), _vec(values), float(sigma))


def pl_sample_latents(y, values, sigma: float, u_segment, u_within):
    """Exact latent draws for a piecewise-linear transfer; returns ``(eta, density)``."""
    return _impl.pl_sample_latents(
        _vec(np.atleast_1d(y)), _vec(values), float(sigma), _vec(u_segment), _vec(u_within)
    )
