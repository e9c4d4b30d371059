"""Time the compiled and pure-Python kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--decays N] [--repeat K]

Prints best-of-K wall time per backend and the speed-up. Outputs of the two
backends are also compared: integers exactly, floats to 1e-12 relative.
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from mcptiming import kernels
from mcptiming._pykernels import N_COLS
from mcptiming.config import load_config
from mcptiming.montecarlo import run_simulation
from mcptiming.physics import C_LIGHT_CM_PER_PS, POSITRON_BRANCH


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    # float offsets may differ in the last bit (libm vs numpy tan/log)
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if hasattr(a, "interval_ticks"):
        return np.array_equal(a.interval_ticks, b.interval_ticks) and np.array_equal(a.tags, b.tags)
    if a.dtype.kind == "f":
        return a.shape == b.shape and np.allclose(a, b, rtol=1e-12, atol=0)
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--decays", type=int, default=1 << 18)
    ap.add_argument("--sim-decays", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = kernels.available_backends()
    rc = load_config("paper_v.cfg")
    sc = rc.scenario
    rng = np.random.default_rng(0)
    U = rng.random((args.decays, N_COLS))

    def trace(b):
        return kernels.trace_decays(U, 5.0, 0.7, sc.geometry.separation_cm,
                                    sc.geometry.active_radius_cm, sc.fractions.f1, 123.0,
                                    2000.0, C_LIGHT_CM_PER_PS, POSITRON_BRANCH, backend=b)

    rows, det, _, offset = trace("python")
    t = np.cumsum(rng.exponential(1e12 / sc.source.activity_per_s, args.decays))[rows] + offset
    order = np.argsort(t, kind="stable")
    times, is_stop = t[order], det[order]

    def pair(b):
        return kernels.pair_triggers(times, is_stop, sc.coincidence_window_ps, backend=b)

    small = replace(sc, n_decays=args.sim_decays)

    def sim(b):
        return run_simulation(small, backend=b)

    cases = [("trace_decays", f"{args.decays} decays", trace),
             ("pair_triggers", f"{len(times)} triggers", pair),
             ("run_simulation", f"{args.sim_decays} decays", sim)]
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':<16}{'input':<20}" + "".join(f"{b:>10}" for b in backends) + f"{'speed-up':>10}  match")
    for name, what, fn in cases:
        times_, outs = [], []
        for b in backends:
            dt, out = best_of(lambda: fn(b), args.repeat)
            times_.append(dt)
            outs.append(out)
        ratio = times_[0] / times_[-1]
        match = all(same(outs[0], o) for o in outs[1:])
        print(f"{name:<16}{what:<20}" + "".join(f"{1e3 * x:>8.1f}ms" for x in times_)
              + f"{ratio:>9.1f}x  {match}")


if __name__ == "__main__":
    main()
