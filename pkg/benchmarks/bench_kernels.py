"""Timing of the compiled kernels against their NumPy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Each kernel
is called on identical inputs through both backends; the table reports the
best wall time of ``N`` repeats, the speed-up and the largest absolute
difference between the two outputs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from nllvm import _kernels_py

try:
    from nllvm import _kernels
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None


def _cases(rng):
    y = np.linspace(-4.0, 4.0, 4096)
    centers = np.sort(rng.normal(size=1024))
    weights = np.full(1024, 1.0 / 1024)
    batch = np.sort(rng.normal(size=(64, 256)), axis=1)
    path = np.sort(rng.normal(size=128))
    obs = rng.normal(size=4000)
    u1, u2 = rng.uniform(size=4000), rng.uniform(size=4000)
    return {
        "gauss_mix 4096 x 1024": ("gauss_mix", (y, centers, weights, 0.1)),
        "gauss_mix_batch 4096 x 64 x 256": (
            "gauss_mix_batch", (y, batch, np.full(256, 1.0 / 256), np.full(64, 0.1))),
        "cosine_design 4000 x 9": ("cosine_design", (obs, 8, 1.0)),
        "pl_mix_density 4000 x 127": ("pl_mix_density", (obs, path, 0.05)),
        "pl_sample_latents 4000 x 127": ("pl_sample_latents", (obs, path, 0.05, u1, u2)),
    }


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the NumPy backend is available")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy ms':>10s} {'cython ms':>10s} {'speed-up':>9s} {'max diff':>10s}")
    for label, (name, inputs) in _cases(rng).items():
        times = {}
        outs = {}
        for backend, mod in (("numpy", _kernels_py), ("cython", _kernels)):
            fn = getattr(mod, name)
            outs[backend] = _first(fn(*inputs))
            times[backend] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(outs["numpy"] - outs["cython"])))
        print(f"{label:36s} {1e3 * times['numpy']:10.2f} {1e3 * times['cython']:10.2f} "
              f"{times['numpy'] / times['cython']:9.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
