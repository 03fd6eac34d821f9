"""Time the numba and numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--nodes 65536] [--repeat 5]

Each kernel is called once per backend before timing so JIT compilation is
not counted.  The last row times a full energy report on a 128x128 grid.
"""
import argparse
import time

import numpy as np

from rigidlab import _kernels
from rigidlab.functionals import energy_report
from rigidlab.oracle_mesh import mesh_from_immersion
from rigidlab.quadrature import build_grid
from rigidlab.surface import make_catalog_surface


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(m, rng):
    d1 = np.eye(2, 3)[None] + 0.3 * rng.normal(size=(m, 2, 3))
    d2 = rng.normal(size=(m, 3, 3))
    pos = rng.normal(size=(m, 3)) + 3.0
    R = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    h = rng.normal(size=(m, 4)), rng.normal(size=(m, 2, 4)), rng.normal(size=(m, 3, 4))
    ew = rng.uniform(0.5, 2.0, m)
    k = max(16, int(np.sqrt(m)))
    mesh = mesh_from_immersion(make_catalog_surface("sphere"), k)
    V, T = mesh.vertices, mesh.triangles
    f = make_catalog_surface("inverted_catenoid")
    grid = build_grid(f.domain, (128, 128))
    return {
        "fundamental_forms": lambda: _kernels.fundamental_forms_kernel(d1, d2),
        "moebius_push": lambda: _kernels.moebius_push_kernel(pos, d1, d2, np.zeros(3), True, R, 1.5, np.ones(3)),
        "sobolev": lambda: _kernels.sobolev_kernel(*h, ew),
        "corner_angles": lambda: _kernels.corner_angles_kernel(V, T),
        "energy_report 128x128": lambda: energy_report(f, grid),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=65536)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.numba_available() else [])
    saved = _kernels.get_backend()
    table = {}
    for name, fn in cases(args.nodes, np.random.default_rng(0)).items():
        for b in backends:
            _kernels.set_backend(b)
            table[name, b] = best_of(fn, args.repeat)
    _kernels.set_backend(saved)
    print(f"{'kernel':24s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for name in dict.fromkeys(k for k, _ in table):
        a = table[name, "numpy"] * 1e3
        if "numba" in backends:
            b = table[name, "numba"] * 1e3
            print(f"{name:24s} {a:12.2f} {b:12.2f} {a / b:8.2f}")
        else:
            print(f"{name:24s} {a:12.2f} {'-':>12s} {'-':>8s}")


if __name__ == "__main__":
    main()
