"""Timing comparison of the numba kernels against the numpy fallback.

Runs each hot kernel on identical inputs through both backends and prints
a table of per-call times and speedups.  The numba path is warmed once
before timing so compilation cost is not counted.

Usage:
    python3 benchmarks/bench_kernels.py [--nx N] [--repeats R]
"""

import argparse
import time

import numpy as np

from defectrecon.fem import assemble_stiffness, stiffness_pattern
from defectrecon.grid import build_grid
from defectrecon.kernels import numpy_backend

try:
    from defectrecon.kernels import numba_backend
except ImportError:
    numba_backend = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build_cases(nx):
    g = build_grid(nx, nx)
    rng = np.random.default_rng(0)
    pat = stiffness_pattern(g)
    w = (0.5 + rng.random(g.n_cells))[pat.tri9] * pat.base9
    u = rng.standard_normal(g.n_nodes)
    coeff = 0.5 + rng.random(g.n_cells)
    op = assemble_stiffness(g, coeff)
    invdiag = 1.0 / op.matrix.diagonal()
    b = rng.standard_normal(g.n_nodes)
    b -= b.mean()
    x0 = np.zeros(g.n_nodes)
    segs = rng.random((200, 2, 2))
    poly = np.array([[0.2, 0.2], [0.8, 0.25], [0.7, 0.8], [0.3, 0.7]])
    pts = rng.random((200_000, 2))

    return {
        "accumulate": lambda k: k.accumulate(pat.slots, w, pat.nnz),
        "tri_gradients": lambda k: k.tri_gradients(g.cells, g.tri_grads, u),
        "stiffness_action": lambda k: k.stiffness_action(
            g.cells, g.tri_grads, g.tri_area, coeff, u, g.n_nodes),
        "pcg": lambda k: k.pcg(pat.indptr, pat.indices, op.data, b, x0,
                               invdiag, 1e-8, 4 * g.n_nodes, True),
        "mark_cells_crossed": lambda k: [
            k.mark_cells_crossed(g.nodes, g.cells, s[0], s[1]) for s in segs],
        "points_in_polygon": lambda k: k.points_in_polygon(pts, poly),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=96,
                    help="grid cells per side (default 96)")
    ap.add_argument("--repeats", type=int, default=5,
                    help="repetitions per kernel; best time is reported")
    args = ap.parse_args()

    cases = build_cases(args.nx)
    g_info = f"{args.nx}x{args.nx} grid"
    if numba_backend is None:
        print(f"numba not importable; timing the numpy backend only ({g_info})")
    else:
        print(f"kernel timings on a {g_info}, best of {args.repeats}")

    header = f"{'kernel':<20} {'numpy':>10}"
    if numba_backend is not None:
        header += f" {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, run in cases.items():
        if numba_backend is not None:
            run(numba_backend)  # JIT warmup outside the timed region
        t_np = best_of(lambda: run(numpy_backend), args.repeats)
        line = f"{name:<20} {t_np * 1e3:>8.2f}ms"
        if numba_backend is not None:
            t_nb = best_of(lambda: run(numba_backend), args.repeats)
            line += f" {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
