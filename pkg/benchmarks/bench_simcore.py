"""Compare the compiled event kernel against its pure-Python twin.

Kernel inputs are captured from admitted stress scenarios, so both backends
replay the same realistic packet streams. Outputs are checked for bit-identity
before timing.

    python3 benchmarks/bench_simcore.py --scenarios 5 --duration 0.2
"""

import argparse
import time

import numpy as np

from detnet.simulator import core, engine, run
from detnet.simulator import _core_py
from detnet.simulator.stress import build_scenario


def capture_inputs(seed, duration_s):
    """Kernel arguments the engine produces for one stress scenario."""
    captured = []

    def grab(*args):
        captured.append(args)
        return _core_py.simulate(*args)

    scenario, _ = build_scenario(seed, duration_s=duration_s)
    original = engine.core.simulate
    engine.core.simulate = grab
    try:
        run(scenario)
    finally:
        engine.core.simulate = original
    return captured[0] if captured else None


def best_of(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", type=int, default=5)
    ap.add_argument("--duration", type=float, default=0.2, help="simulated seconds per scenario")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    opts = ap.parse_args()

    try:
        from detnet.simulator._core import simulate as compiled
    except ImportError:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")

    print(f"active backend: {core.BACKEND}")
    print(f"{'seed':>6} {'packets':>9} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    total_py = total_cy = 0.0
    for seed in range(opts.seed, opts.seed + opts.scenarios):
        args = capture_inputs(seed, opts.duration)
        if args is None or len(args[0]) == 0:
            continue
        a, b = _core_py.simulate(*args), compiled(*args)
        if not (np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])):
            raise SystemExit(f"seed {seed}: backends disagree")
        t_py = best_of(_core_py.simulate, args, opts.repeats)
        t_cy = best_of(compiled, args, opts.repeats)
        total_py += t_py
        total_cy += t_cy
        print(f"{seed:>6} {len(args[0]):>9} {t_py:>10.4f} {t_cy:>10.4f} {t_py / t_cy:>7.1f}x")
    if total_cy:
        print(f"{'total':>6} {'':>9} {total_py:>10.4f} {total_cy:>10.4f} {total_py / total_cy:>7.1f}x")


if __name__ == "__main__":
    main()
