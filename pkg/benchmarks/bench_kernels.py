"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each case reports the best
of several repeats for both backends and their ratio, plus one full
log-posterior evaluation at the full 216x50x2 shape for context.
"""
import argparse
import timeit

import numpy as np

from tensorgp import _kernels_py, kernels


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if kernels.BACKEND != "compiled":
        print("compiled extension not available; only the fallback can be timed")
    rng = np.random.default_rng(0)
    cases = []
    for n, d in ((50, 2), (216, 2), (1000, 2)):
        pts = np.ascontiguousarray(rng.uniform(size=(n, d)))
        q = np.array([15.0, 25.0][:d])
        cases.append((f"sqe_gram n={n} d={d}", lambda p=pts, q=q, m=kernels: m.sqe_gram(p, q, 1e-8),
                      lambda p=pts, q=q: _kernels_py.sqe_gram(p, q, 1e-8)))
    for n, g in ((15000, 512), (60000, 512)):
        x = rng.standard_normal(n)
        grid = np.linspace(-4, 4, g)
        cases.append((f"kde n={n} grid={g}", lambda x=x, g=grid: kernels.gaussian_kde_eval(x, g, 0.1),
                      lambda x=x, g=grid: _kernels_py.gaussian_kde_eval(x, g, 0.1)))

    print(f"{'case':<28}{'compiled [ms]':>15}{'python [ms]':>14}{'speed-up':>10}")
    for name, fast, slow in cases:
        number = 3 if "kde" in name or "1000" in name else 50
        tf = best(fast, args.repeat, number) * 1e3
        ts = best(slow, args.repeat, number) * 1e3
        print(f"{name:<28}{tf:>15.3f}{ts:>14.3f}{ts / tf:>10.2f}")

    from tensorgp.data import SyntheticSpec, generate
    from tensorgp.model import CovParams, PosteriorSpec, TrainingSet, initial_params

    truth = CovParams((15.0, 25.0), (0.05, 0.08), [[1.0, 0.0], [0.4, 0.8]])
    g = generate(SyntheticSpec((216, 50, 2), truth, seed=0, with_test=False))
    spec = PosteriorSpec(TrainingSet(g["design"], g["data"]))
    x = initial_params(spec).to_vector()
    t = best(lambda: spec(x), args.repeat, 20) * 1e3
    print(f"log-posterior 216x50x2 ({kernels.BACKEND}): {t:.3f} ms per evaluation")


if __name__ == "__main__":
    main()
