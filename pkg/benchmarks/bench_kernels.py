"""Compare the compiled and pure-Python detector sweeps.

    python benchmarks/bench_kernels.py --density medium --repeats 3

Both backends run on the same receiver arrays taken from a simulated run;
the verdict matrices are checked for equality before timings are reported.
"""

import argparse
import time

import numpy as np

from veremi_bench.core import AttackerType, density_class
from veremi_bench.detect import DetectorConfig, ReceiverArrays, available_backends, sweep_receiver
from veremi_bench.scenario import ScenarioConfig, simulate


def time_backend(arrays, config, backend, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = [sweep_receiver(a, config, backend) for a in arrays]
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--density", default="medium", choices=["low", "medium", "high"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=100.0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    run = simulate(ScenarioConfig(density=density_class(args.density), seed=args.seed,
                                  attackerType=AttackerType.RANDOM_OFFSET, attackerFraction=0.2,
                                  durationSeconds=args.duration))
    arrays = [ReceiverArrays.from_records(log, rid) for rid, log in sorted(run.logs.items())]
    print(f"simulated {args.density} run in {time.perf_counter() - t0:.1f}s")
    config = DetectorConfig()
    events = sum(len(a) for a in arrays)
    print(f"{len(arrays)} receivers, {events} beacon events, {len(config.columns)} thresholds "
          f"-> {events * len(config.columns)} verdicts")

    results = {}
    for backend in available_backends():
        results[backend] = time_backend(arrays, config, backend, args.repeats)
    if len(results) < 2:
        print("compiled kernel not built; only the Python backend is available")
    ref = next(iter(results.values()))[1]
    for backend, (_, out) in results.items():
        same = all(np.array_equal(a, b) for a, b in zip(ref, out))
        if not same:
            raise SystemExit(f"{backend} verdicts differ from the reference backend")
    base = results.get("python", (None,))[0]
    print(f"{'backend':<8} {'best s':>9} {'Mverdicts/s':>12} {'speedup':>8}")
    for backend, (sec, _) in results.items():
        rate = events * len(config.columns) / sec / 1e6
        speed = f"{base / sec:7.1f}x" if base else "-"
        print(f"{backend:<8} {sec:9.4f} {rate:12.2f} {speed:>8}")


if __name__ == "__main__":
    main()
