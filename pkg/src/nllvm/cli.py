"""Command-line interface: ``nllvm <command> [options]``."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import (
    ConfigError,
    load_config,
    prior_from_section,
    rate_study_from_config,
    sampler_from_section,
    truth_from_name,
    truth_from_section,
)
from .density import write_grid_density
from .experiments import run_rate_study, simulate_data, write_rate_study
from .inference import posterior_summary, read_observations, run_chain
from .maxent import MomentProblem, compute_moments, solve_maxent
from .metrics import write_report
from .verify import SUITES, run_suite


def _cmd_fit(args) -> int:
    cfg = load_config(args.config) if args.config else None
    obs = read_observations(args.data)
    truth = truth_from_section(cfg)
    prior = prior_from_section(cfg, args.prior, truth)
    sampler = sampler_from_section(cfg)
    chain = run_chain(obs, prior, sampler)
    summary = posterior_summary(chain, truth=truth)
    os.makedirs(args.out, exist_ok=True)
    write_grid_density(summary.mean_density, os.path.join(args.out, "mean.txt"))
    write_grid_density(summary.pointwise_bands[0], os.path.join(args.out, "band_lower.txt"))
    write_grid_density(summary.pointwise_bands[1], os.path.join(args.out, "band_upper.txt"))
    draws = {
        "n_draws": chain.n_draws,
        "sigma_mean": float(chain.sigma.mean()),
        "sigma_sd": float(chain.sigma.std()),
        "sigma_q05": float(np.quantile(chain.sigma, 0.05)),
        "sigma_q95": float(np.quantile(chain.sigma, 0.95)),
    }
    if not prior.is_series:
        draws["A_mean"] = float(chain.A.mean())
        draws["A_sd"] = float(chain.A.std())
    write_report(draws, os.path.join(args.out, "draws.txt"))
    info = {f"acceptance_{k}": v for k, v in chain.acceptance.items()}
    info.update({f"step_{k}": v for k, v in chain.step_sizes.items()})
    if summary.hellinger_to_truth is not None:
        info["hellinger_to_truth"] = summary.hellinger_to_truth
    write_report(info, os.path.join(args.out, "summary.txt"))
    print(f"wrote posterior summary for n={obs.n} to {args.out}")
    return 0


def _cmd_maxent(args) -> int:
    target = truth_from_name(args.target)
    a = args.support
    moments = compute_moments(target, args.k, (-a, a))
    sol = solve_maxent(MomentProblem(a, tuple(moments)))
    write_grid_density(sol.to_grid(), args.out)
    write_report(
        {
            "k": sol.k,
            "support": a,
            "log_z": sol.log_z,
            "coefficients": sol.coeffs,
            "residuals": sol.residuals,
            "iterations": sol.iterations,
            "converged": sol.converged,
            "ill_conditioned": sol.ill_conditioned,
        },
        args.out + ".summary",
    )
    status = "converged" if sol.converged else "did not converge"
    print(f"maxent k={sol.k} {status} in {sol.iterations} iterations; "
          f"max residual {np.max(np.abs(sol.residuals)) if sol.k else 0.0:.2e}")
    return 0 if sol.converged else 1


def _cmd_rate_study(args) -> int:
    cfg = rate_study_from_config(load_config(args.config))
    result = run_rate_study(cfg)
    table, summary = write_rate_study(result, args.out)
    print(f"slope {result.slope:.4f} (se {result.se:.4f}); wrote {table} and {summary}")
    return 0


def _cmd_simulate(args) -> int:
    truth = truth_from_name(args.truth)
    obs = simulate_data(truth, args.n, args.seed)
    header = f"truth={args.truth} n={args.n} seed={args.seed}"
    np.savetxt(args.out, obs.y, fmt="%.17g", header=header)
    print(f"wrote {obs.n} draws to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    results = run_suite(args.suite)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nllvm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="posterior density estimate for a data file")
    p.add_argument("--data", required=True, help="one real per line, '#' comments")
    p.add_argument("--prior", choices=("series", "gp"), default=None,
                   help="overrides the kind in the config's [prior] section")
    p.add_argument("--config", help="key-value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("maxent", help="maximum-entropy density matching a target's moments")
    p.add_argument("--target", required=True, help="truth name or grid-density file")
    p.add_argument("--k", type=int, required=True, help="number of moments")
    p.add_argument("--support", type=float, required=True, help="half-width a of [-a, a]")
    p.add_argument("--out", required=True, help="grid-density output path")
    p.set_defaults(func=_cmd_maxent)

    p = sub.add_parser("rate-study", help="posterior contraction study")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_rate_study)

    p = sub.add_parser("simulate", help="draw data from a named truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="numerical checks")
    p.add_argument("--suite", choices=tuple(SUITES) + ("all",), default="all")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
