"""Compare the compiled and pure-Python reverse sweeps on real optimization tapes.

    python3 benchmarks/bench_kernels.py [--widths 8,16] [--repeat 5]
"""
import argparse
import time

import numpy as np

from ctopt.engine import Tape, kernel
from ctopt.objectives import Weights, total_loss
from ctopt.optimizer import init_vars
from ctopt.pipeline import default_impls
from ctopt.sta import Conditions, TimingModel, analyze
from ctopt.tree import build_tree


def record(width, impls):
    model = build_tree(width, width)
    tm = TimingModel(model, impls)
    vars_ = init_vars(model, impls, seed=0)
    tape = Tape()
    t0 = time.perf_counter()
    probs = vars_.derive(tape)
    state = analyze(tm, probs, Conditions())
    loss = total_loss(probs, state, model, impls, Weights()).total
    return tape, loss.idx, time.perf_counter() - t0


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--widths", default="8,16")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = default_impls()
    print(f"compiled backend available: {kernel.BACKEND == 'cython'}")
    print(f"{'width':>5} {'nodes':>8} {'edges':>8} {'forward s':>10} {'python s':>10} {'compiled s':>10} {'speedup':>8}")
    for w in (int(x) for x in args.widths.split(",")):
        tape, root, fwd = record(w, impls)
        ptr = np.frombuffer(tape.ptr, dtype=np.int64)
        par = np.frombuffer(tape.par, dtype=np.int64)
        partial = np.frombuffer(tape.partial, dtype=np.float64)
        n = len(tape.vals)

        def sweep(fn):
            grad = np.zeros(n)
            grad[root] = 1.0
            fn(ptr, par, partial, grad, root)
            return grad

        g_py = sweep(kernel.python_sweep)
        g_c = sweep(kernel.reverse_sweep)
        assert np.allclose(g_py, g_c, rtol=1e-12, atol=1e-15), "kernels disagree"
        t_py = best_of(lambda: sweep(kernel.python_sweep), args.repeat)
        t_c = best_of(lambda: sweep(kernel.reverse_sweep), args.repeat)
        print(f"{w:>5} {n:>8} {len(par):>8} {fwd:>10.4f} {t_py:>10.4f} {t_c:>10.5f} {t_py / t_c:>8.1f}")


if __name__ == "__main__":
    main()
