"""Density estimation with a non-linear latent variable model.

Observations are ``y = mu(eta) + sigma * eps`` with ``eta`` uniform on
``(0, 1)`` and Gaussian noise ``eps``.  The package provides tabulated
densities and transfer functions (:mod:`nllvm.density`), divergences
(:mod:`nllvm.metrics`), priors (:mod:`nllvm.priors`), maximum-entropy moment
matching (:mod:`nllvm.maxent`), MCMC (:mod:`nllvm.inference`) and studies
(:mod:`nllvm.experiments`).  Hot loops live in a compiled extension, with a
NumPy fallback selected at import (see :mod:`nllvm.kernels`).
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
