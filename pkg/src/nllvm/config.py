"""Key-value configuration files with ``[truth]``, ``[prior]``, ``[sampler]``
and ``[study]`` sections.

Keys in ``[prior]`` and ``[sampler]`` are the field names of the matching
config classes.  ``[prior]`` also takes ``kind`` (``gp`` or ``series``),
``center`` (``zero`` or ``quantile``, GP only) and the noise-prior fields
``a_sigma``, ``b_sigma`` and ``rescale``.  Example::

    [truth]
    name = trunc-normal

    [prior]
    kind = gp
    bandwidth_prior = 2.0, 0.02
    amplitude = 3.0

    [sampler]
    iterations = 2000
    burn_in = 1000

    [study]
    ns = 250, 500, 1000, 2000, 4000
    replicates = 5
    seed = 0
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from typing import Optional

from .density import (
    Custom,
    GaussianMixture,
    TruncatedNormal,
    TruthSpec,
    Uniform,
    QuantileTransfer,
    normal,
    read_grid_density,
)
from .experiments import RateStudyConfig, default_gp_prior, default_study_sampler, supersmooth_truth
from .inference import PriorBundle, SamplerConfig
from .priors import SeriesPriorConfig, SigmaPriorConfig, SqExpGPConfig

__all__ = [
    "ConfigError",
    "TRUTH_NAMES",
    "truth_from_name",
    "load_config",
    "truth_from_section",
    "prior_from_section",
    "sampler_from_section",
    "rate_study_from_config",
]

TRUTH_NAMES = ("normal", "trunc-normal", "mixture", "uniform", "supersmooth")
_SIGMA_KEYS = ("a_sigma", "b_sigma", "rescale")


class ConfigError(ValueError):
    """A configuration file or value could not be interpreted."""


def truth_from_name(name: str, **params) -> TruthSpec:
    """Named reference density, or a tabulated density read from a file path.

    ``normal`` (params ``mean``, ``sd``), ``trunc-normal`` (``mean``, ``sd``,
    ``lo``, ``hi``; default N(0, 1) on [-2, 2]), ``mixture`` (equal mixture
    of N(-1, 0.25) and N(1, 0.25)), ``uniform`` (``lo``, ``hi``) and
    ``supersmooth`` (``sigma0``).
    """
    p = {k: float(v) for k, v in params.items()}
    if name == "normal":
        return normal(p.get("mean", 0.0), p.get("sd", 1.0))
    if name == "trunc-normal":
        return TruncatedNormal(p.get("mean", 0.0), p.get("sd", 1.0), p.get("lo", -2.0), p.get("hi", 2.0))
    if name == "mixture":
        return GaussianMixture((0.5, 0.5), (-1.0, 1.0), (0.5, 0.5))
    if name == "uniform":
        return Uniform(p.get("lo", 0.0), p.get("hi", 1.0))
    if name == "supersmooth":
        return supersmooth_truth(p.get("sigma0", 0.25))
    if os.path.exists(name):
        return Custom(read_grid_density(name))
    raise ConfigError(f"unknown truth {name!r}; use one of {TRUTH_NAMES} or a grid-density file")


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # field names are case sensitive
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    return parser


def _coerce(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(","))
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _build(cls, section: dict, skip=()):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        f = known[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[key] = _coerce(raw, default, key)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def _section(cfg: Optional[configparser.ConfigParser], name: str) -> dict:
    if cfg is None or not cfg.has_section(name):
        return {}
    return dict(cfg.items(name))


def truth_from_section(cfg) -> Optional[TruthSpec]:
    sec = _section(cfg, "truth")
    if not sec:
        return None
    name = sec.pop("name", None)
    if name is None:
        raise ConfigError("[truth] needs a name")
    return truth_from_name(name, **sec)


def prior_from_section(cfg, kind: Optional[str] = None,
                       truth: Optional[TruthSpec] = None) -> PriorBundle:
    """Prior bundle from ``[prior]``; ``kind`` overrides the section's ``kind``."""
    sec = _section(cfg, "prior")
    kind = kind or sec.get("kind", "gp")
    sigma_sec = {k: sec[k] for k in _SIGMA_KEYS if k in sec}
    center = sec.get("center", "zero")
    skip = ("kind", "center") + _SIGMA_KEYS
    if kind == "series":
        transfer = _build(SeriesPriorConfig, sec, skip)
        sigma = _build(SigmaPriorConfig, sigma_sec)
    elif kind == "gp":
        base = default_gp_prior()
        gp_sec = dict(sec)
        transfer = _build(SqExpGPConfig, {"bandwidth_prior": "2.0, 0.02", "amplitude": "3.0", **gp_sec}, skip)
        sigma = _build(SigmaPriorConfig, {"a_sigma": str(base.sigma.a_sigma),
                                          "b_sigma": str(base.sigma.b_sigma), **sigma_sec})
        if center == "quantile":
            if truth is None:
                raise ConfigError("center = quantile needs a [truth] section")
            transfer = dataclasses.replace(transfer, center=QuantileTransfer(truth))
        elif center != "zero":
            raise ConfigError("center must be 'zero' or 'quantile'")
    else:
        raise ConfigError("prior kind must be 'gp' or 'series'")
    return PriorBundle(transfer, sigma)


def sampler_from_section(cfg) -> SamplerConfig:
    sec = _section(cfg, "sampler")
    if not sec:
        return default_study_sampler()
    try:
        iterations = int(sec.get("iterations", 2000))
    except ValueError as exc:
        raise ConfigError(f"[sampler] iterations: {exc}") from None
    # burn-in, thinning and warm start scale with the requested chain length
    base = dataclasses.asdict(default_study_sampler(max(iterations, 1)))
    merged = {k: str(v) for k, v in base.items()}
    merged.update(sec)
    if int(merged["warm_start"]) > int(merged["burn_in"]):
        merged["warm_start"] = merged["burn_in"]
    return _build(SamplerConfig, merged)


def rate_study_from_config(cfg) -> RateStudyConfig:
    truth = truth_from_section(cfg)
    if truth is None:
        raise ConfigError("a rate study needs a [truth] section")
    sec = _section(cfg, "study")
    try:
        ns = tuple(int(v) for v in sec.get("ns", "250, 500, 1000, 2000, 4000").split(","))
        return RateStudyConfig(
            truth=truth,
            ns=ns,
            replicates=int(sec.get("replicates", 5)),
            prior=prior_from_section(cfg, truth=truth),
            sampler=sampler_from_section(cfg),
            seed=int(sec.get("seed", 0)),
            workers=int(sec.get("workers", 1)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
