"""Benchmark the compiled stepping kernel against the pure-Python one.

Usage: python benchmarks/bench_kernels.py [--steps N] [--repeat R]

Runs the same corridors through both kernels (results are bit-identical;
this is timing only) and prints steps/second plus the speedup.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from tollsim import kernels  # noqa: E402
from tollsim.core import FundamentalDiagram, RampSpec, build_geometry, split_lanes  # noqa: E402
from tollsim.sim import DemandProfile, run  # noqa: E402


def corridor(K=8):
    fd = FundamentalDiagram(F=13.0, N=100.0, v=0.8, w=0.4)
    exit_fd = FundamentalDiagram(F=8.0, N=100.0, v=0.8, w=0.4)
    ramps = {i: RampSpec(on_capacity=3.0, on_freeflow=0.5,
                         off_capacity=4.0, split_off=0.2)
             for i in range(3, K, 3)}
    return build_geometry([fd] * K, exit_fd, entrance_capacity=20.0,
                          entrance_freeflow=0.8, ramps=ramps,
                          lengths_miles=[0.25] * (K + 2), lanes=[2] * (K + 2))


def time_case(name, geometry, profile, steps, repeat):
    results = {}
    for kname in kernels.available():
        kernels.use(kname)
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            run(geometry, profile, steps)
            best = min(best, time.perf_counter() - t0)
        results[kname] = best
    py = results["python"]
    line = f"{name:<18} python {steps / py:>12,.0f} steps/s"
    if "compiled" in results:
        cy = results["compiled"]
        line += (f"   compiled {steps / cy:>12,.0f} steps/s"
                 f"   speedup {py / cy:>6.1f}x")
    print(line)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    print(f"kernels available: {kernels.available()}")
    g = corridor()
    profile = DemandProfile.constant(
        10.0, {i: 2.0 for i in g.ramp_links()})
    time_case("single-lane K=8", g, profile, args.steps, args.repeat)

    g2 = corridor(K=8)
    dual = split_lanes(g2, 1, 1)
    time_case("dual-lane K=8", dual, profile, args.steps, args.repeat)
    kernels.use("compiled" if "compiled" in kernels.available() else "python")


if __name__ == "__main__":
    main()
