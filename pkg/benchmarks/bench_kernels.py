"""Compare the compiled kernels with the numpy fallback.

Run from the repository root after building the extension::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the median wall time of each kernel on a few mesh sizes, plus an
end-to-end assembly + bisection timing with each backend selected through
``ADAPTREG_PURE_PYTHON``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from adaptreg import _kernels_py
from adaptreg.mesh import bisect, build_uniform_interval, build_uniform_triangle_mesh

try:
    from adaptreg import _kernels as compiled
except ImportError:
    compiled = None

END_TO_END = """
import time, numpy as np
from adaptreg import kernels
from adaptreg.assembly import assemble_coupled
from adaptreg.mesh import bisect, build_uniform_triangle_mesh
rng = np.random.default_rng(0)
m = build_uniform_triangle_mesh(64)
t0 = time.perf_counter()
for _ in range(8):
    m = bisect(m, np.flatnonzero(rng.random(m.n_elements) < 0.1))
    assemble_coupled(m, 1e-4, 1.0)
print(kernels.BACKEND, m.n_elements, time.perf_counter() - t0)
"""


def median_time(fn, repeat):
    return float(np.median(timeit.repeat(fn, number=1, repeat=repeat)))


def kernel_cases():
    for n in (10_000, 100_000):
        m = build_uniform_interval(n)
        yield f"p1_local 1D n={n}", "p1_local", (
            np.ascontiguousarray(m.vertices), np.ascontiguousarray(m.elements),
            np.full(m.n_elements, 0.5))
    rng = np.random.default_rng(1)
    for n in (64, 256):
        m = build_uniform_triangle_mesh(n)
        yield f"p1_local 2D {m.n_elements} triangles", "p1_local", (
            np.ascontiguousarray(m.vertices), np.ascontiguousarray(m.elements),
            np.full(m.n_elements, 0.5))
        ee = np.ascontiguousarray(m.element_facets, dtype=np.int64)
        fe = np.ascontiguousarray(m.facets.elements, dtype=np.int64)
        mask = np.zeros(m.n_elements, dtype=bool)
        mask[rng.choice(m.n_elements, m.n_elements // 50, replace=False)] = True
        yield f"nvb_closure {m.n_elements} triangles", "nvb_closure", (ee, fe, mask)
        split = _kernels_py.nvb_closure(ee, fe, mask)
        mid = np.full(len(fe), -1, dtype=np.int64)
        mid[split] = m.n_vertices + np.arange(split.sum())
        yield f"nvb_split {m.n_elements} triangles", "nvb_split", (
            np.ascontiguousarray(m.elements, dtype=np.int64), ee, mid)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'case':<34}{'python [ms]':>12}{'cython [ms]':>13}{'speed-up':>10}")
    for label, name, a in kernel_cases():
        tp = median_time(lambda: getattr(_kernels_py, name)(*a), args.repeat)
        if compiled is None:
            print(f"{label:<34}{1e3 * tp:>12.2f}{'n/a':>13}{'':>10}")
            continue
        tc = median_time(lambda: getattr(compiled, name)(*a), args.repeat)
        print(f"{label:<34}{1e3 * tp:>12.2f}{1e3 * tc:>13.2f}{tp / tc:>10.2f}")
    print("\nend to end: 8 rounds of bisection + coupled assembly, 2D")
    for flag in ("1", "0"):
        env = dict(os.environ, ADAPTREG_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env,
                             capture_output=True, text=True, check=True)
        backend, n_el, secs = out.stdout.split()
        print(f"  {backend:<8} {int(n_el):>8} triangles  {float(secs):.3f} s")


if __name__ == "__main__":
    main()
