"""Markov chain Monte Carlo for the latent-variable density model.

Observations are ``y_i = mu(eta_i) + sigma eps_i`` with ``eta_i`` uniform on
``(0, 1)``.  One sweep updates, in order,

1. the transfer function: an exact Gaussian draw of the series coefficients,
   or a move of the whitened Gaussian-process path (elliptical slice or an
   exact Gaussian draw);
2. the GP inverse squared length scale ``A`` (log-scale random walk);
3. the noise scale ``sigma`` (log-scale random walk);
4. each latent ``eta_i`` by Metropolis with a uniform or reflected-walk
   proposal, or (GP paths) by an exact draw from its full conditional.

A GP path is linear between grid nodes, so the latents can be integrated out
in closed form.  With ``collapse`` set, the ``sigma`` and ``A`` moves target
their distribution given the path alone and are followed by an exact redraw
of all latents.  This breaks the strong coupling between ``sigma`` and the
latents that otherwise traps chains at an inflated noise scale.

Starting from rank-based latents, updating the transfer function first lets
it lock onto the ordering before the latents move.

Each block leaves the posterior invariant and is reversible, so the sweep run
in reverse block order is the time reversal of the forward sweep.  The
getting-it-right check relies on this.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import linalg, special, stats

from . import kernels
from .density import (
    CosineSeries,
    GridDensity,
    QuadratureSpec,
    Tabulated,
    TruthSpec,
    transfer_at_nodes,
)
from .metrics import hellinger_sq
from .priors import (
    FactorizationError,
    SeriesPriorConfig,
    SigmaPriorConfig,
    SqExpGPConfig,
    gp_cholesky,
    sigma_log_density,
)

__all__ = [
    "ObservationSet",
    "ModelState",
    "SamplerConfig",
    "PriorBundle",
    "Chain",
    "PosteriorSummary",
    "ChainDivergenceError",
    "GIRReport",
    "read_observations",
    "init_state",
    "log_likelihood",
    "update_latents",
    "draw_latents_exact",
    "log_marginal_likelihood",
    "update_coefficients",
    "update_gp_path",
    "update_gp_path_conjugate",
    "update_sigma",
    "update_bandwidth",
    "run_chain",
    "posterior_summary",
    "getting_it_right_check",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SIGMA_FLOOR = 1e-3
TARGET_ACCEPT = 0.44


class ChainDivergenceError(RuntimeError):
    """The log-likelihood became non-finite."""

    def __init__(self, iteration: int, detail: str = ""):
        super().__init__(f"chain diverged at iteration {iteration}{': ' + detail if detail else ''}")
        self.iteration = iteration


@dataclass(frozen=True)
class ObservationSet:
    y: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise ValueError("observations must be a finite 1-d sequence")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size


def read_observations(path) -> ObservationSet:
    """One real per line; ``#`` starts a comment."""
    return ObservationSet(np.loadtxt(path, comments="#", ndmin=1))


@dataclass(frozen=True)
class PriorBundle:
    """Transfer-function prior (series or GP) together with the noise prior."""

    transfer: Union[SeriesPriorConfig, SqExpGPConfig]
    sigma: SigmaPriorConfig = SigmaPriorConfig()

    @property
    def is_series(self) -> bool:
        return isinstance(self.transfer, SeriesPriorConfig)


@dataclass(frozen=True)
class SamplerConfig:
    """MCMC run settings.

    ``eta_proposal`` is ``"uniform"`` (independent draws from the prior),
    ``"reflected"`` (Gaussian walk folded back into ``(0, 1)``) or ``"exact"``
    (draws from the full conditional; GP prior only).  ``collapse`` makes the
    ``sigma`` and bandwidth moves integrate the latents out (GP prior only).
    Step sizes adapt towards 44% acceptance during burn-in when ``adapt`` is
    set.  The first ``warm_start`` burn-in sweeps hold the latents at their
    rank-based start and update only the transfer function, bandwidth and
    ``sigma``, which lets ``sigma`` shrink before the latents start moving.
    """

    iterations: int = 2000
    burn_in: int = 1000
    thin: int = 1
    eta_proposal: str = "uniform"
    eta_step: float = 0.05
    sigma_step: float = 0.1
    A_step: float = 0.3
    seed: int = 0
    latent_substeps: int = 1
    sigma_substeps: int = 1
    adapt: bool = True
    gp_update: str = "elliptical"
    collapse: bool = False
    warm_start: int = 0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.eta_proposal not in ("uniform", "reflected", "exact"):
            raise ValueError("eta_proposal must be 'uniform', 'reflected' or 'exact'")
        if not (self.eta_step > 0 and self.sigma_step > 0 and self.A_step > 0):
            raise ValueError("step sizes must be positive")
        if self.latent_substeps < 1 or self.sigma_substeps < 1:
            raise ValueError("substep counts must be positive")
        if self.gp_update not in ("elliptical", "conjugate"):
            raise ValueError("gp_update must be 'elliptical' or 'conjugate'")
        if not 0 <= self.warm_start <= self.burn_in:
            raise ValueError("need 0 <= warm_start <= burn_in")


@dataclass
class ModelState:
    """One state of the chain.

    For the series prior ``z`` holds the standardized coefficients
    (``w_j = lambda_j z_j``); for the GP prior ``z`` is the whitened path, so
    that ``path = center + L_A z``.
    """

    eta: np.ndarray
    sigma: float
    z: np.ndarray
    A: float = math.nan
    chol: Optional[np.ndarray] = field(default=None, repr=False)
    warning: str = ""

    def copy(self) -> "ModelState":
        return replace(self, eta=self.eta.copy(), z=self.z.copy())


# ---------------------------------------------------------------------------
# State helpers
# ---------------------------------------------------------------------------


def _path_values(state: ModelState, cfg: SqExpGPConfig) -> np.ndarray:
    return cfg.center_values() + state.chol @ state.z


def transfer_of(state: ModelState, prior: PriorBundle):
    """Transfer function represented by a state."""
    cfg = prior.transfer
    if isinstance(cfg, SeriesPriorConfig):
        return CosineSeries(cfg.lambdas * state.z, cfg.a, cfg.b)
    return Tabulated(_path_values(state, cfg))


def _mu_at(eta: np.ndarray, state: ModelState, prior: PriorBundle, path=None) -> np.ndarray:
    cfg = prior.transfer
    if isinstance(cfg, SeriesPriorConfig):
        return cfg.design(eta) @ state.z
    if path is None:
        path = _path_values(state, cfg)
    return np.interp(eta, cfg.grid, path)


def _loglik_terms(y, mu, sigma):
    r = (y - mu) / sigma
    return -0.5 * r * r - math.log(sigma) - _LOG_SQRT_2PI


def log_likelihood(state: ModelState, obs: ObservationSet, prior: PriorBundle) -> float:
    if obs.n == 0:
        return 0.0
    return float(np.sum(_loglik_terms(obs.y, _mu_at(state.eta, state, prior), state.sigma)))


def init_state(obs: ObservationSet, prior: PriorBundle, A: Optional[float] = None) -> ModelState:
    """Rank-based latents, zero coefficients (or the GP center), half the sample sd for ``sigma``."""
    n = obs.n
    eta = stats.rankdata(obs.y) / (n + 1.0) if n else np.zeros(0)
    sd = float(np.std(obs.y, ddof=1)) if n > 1 else 0.0
    warning = ""
    if not sd > 0:
        warning = "constant data: sigma floor applied"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    sigma = max(0.5 * sd, SIGMA_FLOOR)
    cfg = prior.transfer
    if isinstance(cfg, SeriesPriorConfig):
        return ModelState(eta=eta, sigma=sigma, z=np.zeros(cfg.J + 1), warning=warning)
    p, q = cfg.bandwidth_prior
    A = p / q if A is None else A
    return ModelState(
        eta=eta, sigma=sigma, z=np.zeros(cfg.grid_n), A=A, chol=gp_cholesky(cfg, A), warning=warning
    )


# ---------------------------------------------------------------------------
# Update blocks
# ---------------------------------------------------------------------------


def _require_path(prior: PriorBundle, what: str) -> None:
    if prior.is_series:
        raise ValueError(f"{what} needs a piecewise-linear (GP) transfer function")


def log_marginal_likelihood(state: ModelState, obs: ObservationSet, prior: PriorBundle,
                            sigma: Optional[float] = None) -> float:
    """Log-likelihood of a GP state with the latents integrated out exactly."""
    _require_path(prior, "the marginal likelihood")
    if obs.n == 0:
        return 0.0
    sigma = state.sigma if sigma is None else sigma
    dens = kernels.pl_mix_density(obs.y, _path_values(state, prior.transfer), sigma)
    return float(np.sum(np.log(np.maximum(dens, 1e-300))))


def draw_latents_exact(state: ModelState, obs: ObservationSet, prior: PriorBundle, rng) -> ModelState:
    """Draw every latent from its full conditional given the GP path and ``sigma``."""
    _require_path(prior, "exact latent draws")
    n = obs.n
    if n == 0:
        return state
    eta, _ = kernels.pl_sample_latents(
        obs.y, _path_values(state, prior.transfer), state.sigma,
        rng.uniform(size=n), rng.uniform(size=n),
    )
    return replace(state, eta=np.clip(eta, 1e-15, 1.0 - 1e-15))


def update_latents(state: ModelState, obs: ObservationSet, prior: PriorBundle, rng,
                   proposal: str = "uniform", step: float = 0.05) -> tuple[ModelState, float]:
    """One Metropolis step per latent; returns the new state and the acceptance rate.

    ``proposal="exact"`` replaces the Metropolis step by a Gibbs draw
    (acceptance 1).
    """
    n = obs.n
    if proposal == "exact":
        return draw_latents_exact(state, obs, prior, rng), 1.0
    if n == 0:
        return state, 1.0
    if proposal == "uniform":
        prop = rng.uniform(size=n)
    else:
        prop = state.eta + step * rng.standard_normal(n)
        # fold into (0, 1): reflection keeps the proposal symmetric
        prop = np.abs(prop)
        prop = 1.0 - np.abs(1.0 - np.mod(prop, 2.0))
    prop = np.clip(prop, 1e-15, 1.0 - 1e-15)
    path = None if prior.is_series else _path_values(state, prior.transfer)
    cur = _loglik_terms(obs.y, _mu_at(state.eta, state, prior, path), state.sigma)
    new = _loglik_terms(obs.y, _mu_at(prop, state, prior, path), state.sigma)
    accept = np.log(rng.uniform(size=n)) < new - cur
    eta = np.where(accept, prop, state.eta)
    return replace(state, eta=eta), float(np.mean(accept))


def _spd_cholesky(P: np.ndarray) -> np.ndarray:
    jitter = 0.0
    for attempt in range(4):
        try:
            return linalg.cholesky(P + jitter * np.eye(P.shape[0]), lower=True)
        except linalg.LinAlgError:
            jitter = 1e-10 * np.trace(P) / P.shape[0] if jitter == 0 else jitter * 10.0
    cond = np.linalg.cond(P)
    raise FactorizationError(f"coefficient precision not positive definite (condition {cond:.3g})")


def update_coefficients(state: ModelState, obs: ObservationSet, cfg: SeriesPriorConfig,
                        sigma: float, rng) -> ModelState:
    """Exact draw of the standardized coefficients from their Gaussian full conditional.

    With ``D_ij = lambda_j b phi_j(a eta_i)`` the precision is
    ``I + D^T D / sigma^2`` and the mean solves ``precision m = D^T y / sigma^2``.
    """
    D = cfg.design(state.eta)
    P = np.eye(cfg.J + 1) + D.T @ D / sigma**2
    L = _spd_cholesky(P)
    mean = linalg.cho_solve((L, True), D.T @ obs.y / sigma**2)
    z = mean + linalg.solve_triangular(L.T, rng.standard_normal(cfg.J + 1), lower=False)
    return replace(state, z=z)


def update_gp_path(state: ModelState, obs: ObservationSet, cfg: SqExpGPConfig, rng,
                   prior: Optional[PriorBundle] = None) -> ModelState:
    """Elliptical slice move on the whitened path.

    Proposals ``z cos t + nu sin t`` with ``nu`` standard normal correspond to
    ``(path - center) cos t + (nu_path - center) sin t + center`` for a prior
    path draw ``nu_path``.  The bracket on ``t`` shrinks towards zero, where
    the current state is recovered, so the loop terminates.
    """
    prior = prior or PriorBundle(cfg)
    if obs.n == 0:
        # the likelihood is flat and every proposal on the ellipse is accepted
        t = rng.uniform(0.0, 2.0 * math.pi)
        return replace(state, z=state.z * math.cos(t) + rng.standard_normal(state.z.size) * math.sin(t))
    center = cfg.center_values()
    nu = rng.standard_normal(state.z.size)
    threshold = log_likelihood(state, obs, prior) + math.log(rng.uniform())
    t = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = t - 2.0 * math.pi, t
    base, dirn = state.chol @ state.z, state.chol @ nu
    while True:
        path = center + base * math.cos(t) + dirn * math.sin(t)
        ll = float(np.sum(_loglik_terms(obs.y, np.interp(state.eta, cfg.grid, path), state.sigma)))
        if ll > threshold:
            return replace(state, z=state.z * math.cos(t) + nu * math.sin(t))
        if t < 0:
            lo = t
        else:
            hi = t
        if hi - lo < 1e-14:
            return state
        t = rng.uniform(lo, hi)


def update_gp_path_conjugate(state: ModelState, obs: ObservationSet, cfg: SqExpGPConfig,
                             rng) -> ModelState:
    """Exact Gaussian draw of the whitened path given the latents and ``sigma``.

    The path enters the likelihood through linear interpolation, so with
    interpolation matrix ``W`` the conditional of ``z`` has precision
    ``I + L^T W^T W L / sigma^2``.  ``W^T W`` is tridiagonal and is assembled
    in linear time.
    """
    G = cfg.grid_n
    pos = np.clip(state.eta, 0.0, 1.0) * (G - 1)
    idx = np.minimum(pos.astype(int), G - 2)
    t = pos - idx
    u = 1.0 - t
    resid = obs.y - np.interp(state.eta, cfg.grid, cfg.center_values())
    diag = np.bincount(idx, u * u, G) + np.bincount(idx + 1, t * t, G)
    off = np.bincount(idx, u * t, G - 1)
    WtW = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    Wtr = np.bincount(idx, u * resid, G) + np.bincount(idx + 1, t * resid, G)
    Lc = state.chol
    inv_var = 1.0 / state.sigma**2
    P = np.eye(G) + inv_var * (Lc.T @ WtW @ Lc)
    R = _spd_cholesky(P)
    mean = linalg.cho_solve((R, True), inv_var * (Lc.T @ Wtr))
    z = mean + linalg.solve_triangular(R.T, rng.standard_normal(G), lower=False)
    return replace(state, z=z)


def update_sigma(state: ModelState, obs: ObservationSet, cfg: SigmaPriorConfig, rng,
                 step: float = 0.1, prior: Optional[PriorBundle] = None,
                 jacobian: bool = True, collapse: bool = False) -> tuple[ModelState, bool]:
    """Random-walk Metropolis on ``log sigma``.

    The target is the likelihood times the prior density of ``sigma``; the
    walk on the log scale contributes the Jacobian ``sigma' / sigma``.
    ``jacobian=False`` drops that term and gives a deliberately wrong kernel,
    used only as a negative control.  With ``collapse`` the likelihood has
    the latents integrated out and the latents are redrawn exactly after the
    move, accepted or not.
    """
    new_sigma = state.sigma * math.exp(step * rng.standard_normal())
    if obs.n and prior is None:
        raise ValueError("update_sigma needs the prior bundle to evaluate the transfer function")
    if collapse:
        ll_old = log_marginal_likelihood(state, obs, prior)
        ll_new = log_marginal_likelihood(state, obs, prior, new_sigma)
    elif obs.n:
        mu = _mu_at(state.eta, state, prior)
        ll_old = float(np.sum(_loglik_terms(obs.y, mu, state.sigma)))
        ll_new = float(np.sum(_loglik_terms(obs.y, mu, new_sigma)))
    else:
        ll_old = ll_new = 0.0
    log_r = ll_new - ll_old + sigma_log_density(cfg, new_sigma) - sigma_log_density(cfg, state.sigma)
    if jacobian:
        log_r += math.log(new_sigma) - math.log(state.sigma)
    accepted = math.log(rng.uniform()) < log_r
    if accepted:
        state = replace(state, sigma=new_sigma)
    if collapse:
        state = draw_latents_exact(state, obs, prior, rng)
    return state, accepted


def _gamma_log_density(A: float, p: float, q: float) -> float:
    return p * math.log(q) - special.gammaln(p) + (p - 1.0) * math.log(A) - q * A


def update_bandwidth(state: ModelState, obs: ObservationSet, cfg: SqExpGPConfig, rng,
                     step: float = 0.3, prior: Optional[PriorBundle] = None,
                     collapse: bool = False) -> tuple[ModelState, bool]:
    """Random-walk Metropolis on ``log A`` with the whitened path held fixed.

    Changing ``A`` changes the path through the Cholesky factor, so the
    target is the likelihood times the Gamma prior on ``A`` (times the
    log-scale Jacobian).  ``collapse`` works as in :func:`update_sigma`.
    """
    prior = prior or PriorBundle(cfg)
    p, q = cfg.bandwidth_prior
    new_A = state.A * math.exp(step * rng.standard_normal())
    try:
        new_chol = gp_cholesky(cfg, new_A)
    except FactorizationError:
        return state, False
    proposal = replace(state, A=new_A, chol=new_chol)
    loglik = log_marginal_likelihood if collapse else log_likelihood
    log_r = (
        loglik(proposal, obs, prior)
        - loglik(state, obs, prior)
        + _gamma_log_density(new_A, p, q)
        - _gamma_log_density(state.A, p, q)
        + math.log(new_A)
        - math.log(state.A)
    )
    accepted = math.log(rng.uniform()) < log_r
    if accepted:
        state = proposal
    if collapse:
        state = draw_latents_exact(state, obs, prior, rng)
    return state, accepted


# ---------------------------------------------------------------------------
# Sweeps and chains
# ---------------------------------------------------------------------------


@dataclass
class _Steps:
    eta: float
    sigma: float
    A: float


def _sweep(state, obs, prior, sampler, steps, rng, stats_out=None, reverse=False,
           blocks=("transfer", "bandwidth", "sigma", "latents"), jacobian=True):
    order = tuple(reversed(blocks)) if reverse else tuple(blocks)
    for block in order:
        if block == "latents":
            for _ in range(sampler.latent_substeps):
                state, acc = update_latents(state, obs, prior, rng, sampler.eta_proposal, steps.eta)
                if stats_out is not None:
                    stats_out["latents"].append(acc)
        elif block == "transfer":
            if prior.is_series:
                state = update_coefficients(state, obs, prior.transfer, state.sigma, rng)
            elif sampler.gp_update == "conjugate":
                state = update_gp_path_conjugate(state, obs, prior.transfer, rng)
            else:
                state = update_gp_path(state, obs, prior.transfer, rng, prior)
        elif block == "bandwidth":
            if not prior.is_series:
                state, acc = update_bandwidth(state, obs, prior.transfer, rng, steps.A, prior,
                                              sampler.collapse)
                if stats_out is not None:
                    stats_out["bandwidth"].append(float(acc))
        elif block == "sigma":
            for _ in range(sampler.sigma_substeps):
                state, acc = update_sigma(state, obs, prior.sigma, rng, steps.sigma, prior, jacobian,
                                          sampler.collapse)
                if stats_out is not None:
                    stats_out["sigma"].append(float(acc))
        else:
            raise ValueError(f"unknown block {block!r}")
    return state


@dataclass
class Chain:
    """Retained draws of one chain."""

    prior: PriorBundle
    sampler: SamplerConfig
    sigma: np.ndarray
    z: np.ndarray
    A: np.ndarray
    eta_mean: np.ndarray
    acceptance: dict
    step_sizes: dict

    @property
    def n_draws(self) -> int:
        return self.sigma.size

    def transfer(self, i: int):
        cfg = self.prior.transfer
        if isinstance(cfg, SeriesPriorConfig):
            return CosineSeries(cfg.lambdas * self.z[i], cfg.a, cfg.b)
        return Tabulated(cfg.center_values() + gp_cholesky(cfg, self.A[i]) @ self.z[i])

    def transfers(self) -> list:
        cfg = self.prior.transfer
        if isinstance(cfg, SeriesPriorConfig):
            return [self.transfer(i) for i in range(self.n_draws)]
        # reuse factorizations for repeated bandwidth values
        cache: dict = {}
        out = []
        center = cfg.center_values()
        for A, z in zip(self.A, self.z):
            if A not in cache:
                cache[A] = gp_cholesky(cfg, A)
            out.append(Tabulated(center + cache[A] @ z))
        return out


def run_chain(obs: ObservationSet, prior: PriorBundle, sampler: SamplerConfig,
              state: Optional[ModelState] = None) -> Chain:
    """Run one chain and keep every ``thin``-th draw after burn-in."""
    rng = np.random.default_rng(sampler.seed)
    state = state.copy() if state is not None else init_state(obs, prior)
    steps = _Steps(sampler.eta_step, sampler.sigma_step, sampler.A_step)
    kept = {"sigma": [], "z": [], "A": [], "eta_mean": []}
    totals = {"latents": [], "sigma": [], "bandwidth": []}
    warm = replace(sampler, collapse=False)
    for it in range(sampler.iterations):
        rec = {"latents": [], "sigma": [], "bandwidth": []}
        if it < sampler.warm_start:
            state = _sweep(state, obs, prior, warm, steps, rng, rec,
                           blocks=("transfer", "bandwidth", "sigma"))
        else:
            state = _sweep(state, obs, prior, sampler, steps, rng, rec)
        ll = log_likelihood(state, obs, prior)
        if not math.isfinite(ll) or not math.isfinite(state.sigma):
            raise ChainDivergenceError(it, f"log-likelihood {ll}")
        if it < sampler.burn_in:
            if sampler.adapt:
                gain = (it + 1.0) ** -0.6
                if rec["sigma"]:
                    steps.sigma *= math.exp(gain * (np.mean(rec["sigma"]) - TARGET_ACCEPT))
                if rec["bandwidth"]:
                    steps.A *= math.exp(gain * (np.mean(rec["bandwidth"]) - TARGET_ACCEPT))
                if sampler.eta_proposal == "reflected" and rec["latents"]:
                    steps.eta = min(1.0, steps.eta * math.exp(gain * (np.mean(rec["latents"]) - TARGET_ACCEPT)))
            continue
        for key in totals:
            totals[key].extend(rec[key])
        if (it - sampler.burn_in) % sampler.thin == 0:
            if not (np.all((state.eta > 0) & (state.eta < 1)) and state.sigma > 0 and np.all(np.isfinite(state.z))):
                raise ChainDivergenceError(it, "state left its domain")
            kept["sigma"].append(state.sigma)
            kept["z"].append(state.z.copy())
            kept["A"].append(state.A)
            kept["eta_mean"].append(float(np.mean(state.eta)) if obs.n else math.nan)
    acceptance = {k: float(np.mean(v)) for k, v in totals.items() if v}
    return Chain(
        prior=prior,
        sampler=sampler,
        sigma=np.asarray(kept["sigma"]),
        z=np.asarray(kept["z"]),
        A=np.asarray(kept["A"]),
        eta_mean=np.asarray(kept["eta_mean"]),
        acceptance=acceptance,
        step_sizes={"eta": steps.eta, "sigma": steps.sigma, "A": steps.A},
    )


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


@dataclass
class PosteriorSummary:
    mean_density: GridDensity
    pointwise_bands: tuple[GridDensity, GridDensity]
    acceptance: dict
    hellinger_to_truth: Optional[float] = None


SUMMARY_QUAD = QuadratureSpec(nodes=64, panels=16)


def summary_grid(chain: Chain, truth: Optional[TruthSpec] = None, n: int = 1024,
                 quad: QuadratureSpec = SUMMARY_QUAD) -> tuple[float, float, int]:
    """Grid covering the bulk of all draws (and of the truth, if given)."""
    lo, hi = math.inf, -math.inf
    for mu in chain.transfers():
        vals, _ = transfer_at_nodes(mu, quad)
        lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
    pad = 6.0 * float(np.quantile(chain.sigma, 0.99))
    lo, hi = lo - pad, hi + pad
    if truth is not None:
        tlo, thi = truth.effective_support(1e-10)
        lo, hi = min(lo, tlo - 0.5), max(hi, thi + 0.5)
    return lo, hi, n


def posterior_summary(chain: Chain, grid=None, truth: Optional[TruthSpec] = None,
                      quad: QuadratureSpec = SUMMARY_QUAD, level: float = 0.9,
                      convention: str = "integral") -> PosteriorSummary:
    """Posterior-mean density with pointwise bands, optionally compared to a truth.

    Parameters
    ----------
    chain : Chain
    grid : (lo, hi, n), GridDensity or None
        Evaluation grid; derived from the draws when omitted.
    truth : TruthSpec, optional
        When given, the Hellinger distance (not squared) of the posterior
        mean to the truth is reported.
    quad : QuadratureSpec
        Rule for series draws.  GP draws are linear between grid nodes and
        are integrated in closed form, which stays accurate for any ``sigma``.
    """
    if chain.n_draws == 0:
        raise ValueError("chain has no retained draws")
    if grid is None:
        grid = summary_grid(chain, truth)
    if isinstance(grid, GridDensity):
        lo, hi, n = grid.lo, grid.hi, grid.n
    else:
        lo, hi, n = grid
    x = np.linspace(lo, hi, int(n))
    if chain.prior.is_series:
        centers = []
        weights = None
        for mu in chain.transfers():
            vals, w = transfer_at_nodes(mu, quad)
            if vals.size != w.size or (weights is not None and w.size != weights.size):
                raise ValueError("transfer values must be finite at every quadrature node")
            centers.append(vals)
            weights = w
        dens = kernels.gauss_mix_batch(x, np.asarray(centers), weights, chain.sigma)
    else:
        dens = np.array([
            kernels.pl_mix_density(x, mu.values, s)
            for mu, s in zip(chain.transfers(), chain.sigma)
        ])
    mean = GridDensity(lo, hi, dens.mean(axis=0))
    tail = 0.5 * (1.0 - level)
    qlo, qhi = np.quantile(dens, [tail, 1.0 - tail], axis=0)
    lower = GridDensity(lo, hi, np.minimum(qlo, mean.values))
    upper = GridDensity(lo, hi, np.maximum(qhi, mean.values))
    dist = None
    if truth is not None:
        dist = math.sqrt(hellinger_sq(mean, GridDensity(lo, hi, truth.pdf(x)), convention))
    return PosteriorSummary(mean, (lower, upper), dict(chain.acceptance), dist)


# ---------------------------------------------------------------------------
# Getting it right
# ---------------------------------------------------------------------------


@dataclass
class GIRReport:
    passed: bool
    p_values: dict
    failing: list
    ranks: dict
    n_cycles: int
    n_bins: int


def _draw_joint(prior: PriorBundle, n_obs: int, rng) -> tuple[ModelState, ObservationSet]:
    """Draw parameters from the prior and data from the model."""
    s = prior.sigma
    sigma = s.rescale * s.b_sigma / rng.gamma(s.a_sigma)
    eta = rng.uniform(size=n_obs)
    cfg = prior.transfer
    if isinstance(cfg, SeriesPriorConfig):
        state = ModelState(eta=eta, sigma=sigma, z=rng.standard_normal(cfg.J + 1))
    else:
        p, q = cfg.bandwidth_prior
        A = rng.gamma(p, 1.0 / q)
        state = ModelState(eta=eta, sigma=sigma, z=rng.standard_normal(cfg.grid_n), A=A,
                           chol=gp_cholesky(cfg, A))
    y = _mu_at(eta, state, prior) + sigma * rng.standard_normal(n_obs)
    return state, ObservationSet(y)


def _functionals(state: ModelState, prior: PriorBundle) -> dict:
    out = {"sigma": state.sigma, "z0": float(state.z[0])}
    if state.eta.size:
        out["eta_mean"] = float(np.mean(state.eta))
    if not prior.is_series:
        out["log_A"] = math.log(state.A)
    return out


def getting_it_right_check(prior: PriorBundle, n_cycles: int = 2000, n_obs: int = 5,
                           chain_length: int = 19, sampler: Optional[SamplerConfig] = None,
                           blocks=("transfer", "bandwidth", "sigma", "latents"),
                           jacobian: bool = True, seed: int = 0, alpha: float = 0.01) -> GIRReport:
    """Rank-uniformity test of the transition kernel against the joint prior.

    Each cycle draws parameters from the prior and data from the model, so
    the parameters are an exact posterior draw.  The chain is run a uniform
    random number ``K`` of sweeps backwards (reverse block order) and
    ``chain_length - K`` sweeps forwards from that draw; the rank of the
    initial draw among all ``chain_length + 1`` states is then uniform if and
    only if the kernel leaves the posterior invariant.  Ties are broken at
    random.  Uniformity of each functional is tested by a chi-square test
    over ``chain_length + 1`` bins.
    """
    if n_cycles < 1000:
        raise ValueError("getting-it-right needs at least 1000 cycles")
    sampler = sampler or SamplerConfig(iterations=2, burn_in=0, adapt=False)
    rng = np.random.default_rng(seed)
    steps = _Steps(sampler.eta_step, sampler.sigma_step, sampler.A_step)
    n_states = chain_length + 1
    ranks: dict = {}
    for _ in range(n_cycles):
        state0, obs = _draw_joint(prior, n_obs, rng)
        k_back = int(rng.integers(0, n_states))
        values = {key: [val] for key, val in _functionals(state0, prior).items()}
        for reverse, count in ((True, k_back), (False, chain_length - k_back)):
            state = state0
            for _ in range(count):
                state = _sweep(state, obs, prior, sampler, steps, rng, reverse=reverse,
                               blocks=blocks, jacobian=jacobian)
                for key, val in _functionals(state, prior).items():
                    values[key].append(val)
        for key, vals in values.items():
            vals = np.asarray(vals)
            below = int(np.count_nonzero(vals[1:] < vals[0]))
            ties = int(np.count_nonzero(vals[1:] == vals[0]))
            ranks.setdefault(key, []).append(below + int(rng.integers(0, ties + 1)))
    p_values = {}
    for key, r in ranks.items():
        counts = np.bincount(np.asarray(r), minlength=n_states)
        p_values[key] = float(stats.chisquare(counts).pvalue)
    failing = [k for k, p in p_values.items() if p <= alpha]
    return GIRReport(
        passed=not failing,
        p_values=p_values,
        failing=failing,
        ranks={k: np.asarray(v) for k, v in ranks.items()},
        n_cycles=n_cycles,
        n_bins=n_states,
    )
