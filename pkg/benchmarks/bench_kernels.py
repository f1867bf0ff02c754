"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--segments 200] [--repeat 3]

Each case runs once to warm up (numba compiles on first call, cached on
disk afterwards), then reports the best of ``--repeat`` timings and checks
that both backends return the same numbers.
"""

import argparse
import time

import numpy as np

from qtrack import _accel, ensemble, kernels, model, riccati


def best_of(func, repeat):
    func()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = func()
        times.append(time.perf_counter() - start)
    return min(times), result


def cases(segments):
    params = model.table_s2()
    rates = model.derive_rates(params)
    rng = np.random.default_rng(0)
    n = 3200
    u = rng.standard_normal((segments, 2, n))
    f = np.full(n, 1.0 - rates.alpha * 1e-6)
    g = np.full(n, 0.1)
    t_grid = np.linspace(0.0, 5.0 / rates.gamma_meas, 20001)
    config = ensemble.EnsembleConfig(n_segments=segments, seed=1, keep_truth=False)
    return {
        f"forward recursion ({segments}x2x{n})": lambda: kernels.forward_recursion(u, f, g),
        f"backward recursion ({segments}x2x{n})": lambda: kernels.backward_recursion(u, f, g),
        "Riccati RK4 oracle (5/Gamma_meas)": lambda: riccati.v_ode_oracle(
            rates, rates.v_bath, t_grid).v,
        f"baseband ensemble ({segments} segments)": lambda: ensemble.run_ensemble(
            params, config).pred.mean,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--segments", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    previous = _accel.get_backend()
    print(f"{'case':44s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  equal")
    try:
        for name, func in cases(args.segments).items():
            _accel.set_backend("numba")
            t_numba, r_numba = best_of(func, args.repeat)
            _accel.set_backend("numpy")
            t_numpy, r_numpy = best_of(func, args.repeat)
            equal = np.allclose(r_numba, r_numpy, rtol=1e-12, atol=0)
            print(f"{name:44s} {t_numba:10.4f} {t_numpy:10.4f} {t_numpy / t_numba:8.1f}  {equal}")
    finally:
        _accel.set_backend(previous)


if __name__ == "__main__":
    main()
