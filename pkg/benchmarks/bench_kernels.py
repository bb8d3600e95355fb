"""Time the numba and numpy flavours of every hot kernel on the same inputs.

    python benchmarks/bench_kernels.py [--scale 1.0] [--repeat 3]

Prints one line per kernel: best-of-``repeat`` wall time for each backend,
the speed-up, and the largest relative disagreement between the outputs.
The numba kernels are compiled (and cached) before timing.
"""
import argparse
import time

import numpy as np

from selfselect import kernels as K
from selfselect._accel import HAVE_NUMBA


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def cases(scale, rng):
    n = int(200_000 * scale)
    pts = 3.0 * rng.standard_normal((n, 2))
    lo = np.full((n, 2), -np.inf)
    hi = np.full((n, 2), 0.5)
    R = np.full(n, 3.0)
    yield ("project_box_ball", lambda: K._project_many_nb(pts, lo, hi, R, K.DYKSTRA_TOL, K.DYKSTRA_MAX_SWEEPS)[0],
           lambda: K._project_many_np(pts, lo, hi, R, K.DYKSTRA_TOL, K.DYKSTRA_MAX_SWEEPS)[0])

    chains, steps = int(5_000 * scale), 1_000
    noise = rng.standard_normal((steps, chains, 2))
    mu = rng.standard_normal((chains, 2))
    lo_c = np.full((chains, 2), -np.inf)
    hi_c = np.full((chains, 2), -0.5)
    R_c = np.full(chains, 6.0)

    def lang(fn):
        z = np.full((chains, 2), -0.5)
        fn(z, mu, 0.0025, 0.05, noise, lo_c, hi_c, R_c, K.DYKSTRA_TOL, K.DYKSTRA_MAX_SWEEPS)
        return z

    yield ("langevin_chains", lambda: lang(K._langevin_nb), lambda: lang(K._langevin_np))

    m = int(300_000 * scale)
    XU = rng.standard_normal((m, 2))
    y = rng.standard_normal(m)
    t = 2 * np.pi * np.arange(126) / 126
    coords = np.column_stack([np.cos(t), np.sin(t)])
    shifts = np.zeros(len(coords))
    yield ("slab_block_moments", lambda: K._slab_nb(XU, y, coords, shifts, 0.09, 6, 32)[0],
           lambda: K._slab_np(XU, y, coords, shifts, 0.09, 6, 32)[0])

    C = rng.standard_normal((500, 2))
    yield ("grid_shifted_moments", lambda: K._grid2_nb(XU[:, 0].copy(), XU[:, 1].copy(), y, C),
           lambda: K._grid_np(XU, y, C))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scale", type=float, default=1.0, help="multiplies the problem sizes")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speed-up':>10}{'max rel diff':>14}")
    for name, fast, slow in cases(args.scale, rng):
        fast()  # compile / load cache
        t_nb, a = _best(fast, args.repeat)
        t_np, b = _best(slow, args.repeat)
        print(f"{name:<22}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>10.1f}{_rel(a, b):>14.2e}")


if __name__ == "__main__":
    main()
