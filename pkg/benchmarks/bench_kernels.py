"""Time the compiled kernels against the NumPy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--steps N] [--repeat R]

Prints seconds per pass and the speed-up; also checks the two backends agree.
"""
import argparse
import time

import numpy as np

from pqsmag import _backend, retro
from pqsmag.filtering import Dynamics, run_forward
from pqsmag.markov import HmmSpec
from pqsmag.model import default_params
from pqsmag.truthsim import generate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback is available")
    spec, p, dt = HmmSpec(), default_params(), 0.01
    dyn = Dynamics.build(spec, p, dt)

    cases = {
        "truth": lambda b: generate(spec, p, args.steps, dt, seed=0, backend=b)[1].increments,
        "forward": lambda b: run_forward(record, spec, dyn=dyn, backend=b)[0].prob,
        "backward": lambda b: retro.run_backward(record, dyn, backend=b).packed,
        "smoother": lambda b: retro.run_pqs(record, spec, dyn=dyn, backend=b)[1].prob,
    }
    record = generate(spec, p, args.steps, dt, seed=0)[1]

    print(f"{args.steps} steps, {spec.n_states} blocks, best of {args.repeat}")
    print(f"{'pass':<10}" + "".join(f"{b:>12}" for b in backends) + f"{'speed-up':>12}{'max diff':>12}")
    for name, fn in cases.items():
        results = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        row = f"{name:<10}" + "".join(f"{results[b][0]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            speed = results["python"][0] / results["cython"][0]
            diff = np.abs(results["python"][1] - results["cython"][1]).max()
            row += f"{speed:>11.1f}x{diff:>12.1e}"
        print(row)


if __name__ == "__main__":
    main()
