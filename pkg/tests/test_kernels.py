"""Both kernel flavours must agree; the numpy one is what runs without numba."""
import numpy as np
import pytest

from selfselect import kernels as K
from selfselect._accel import HAVE_NUMBA, backend_name

from conftest import kkt_project

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _boxes(rng, n, dim):
    lo = np.where(rng.uniform(size=(n, dim)) < 0.5, -np.inf, rng.normal(-1, 1, (n, dim)))
    hi = np.maximum(lo, 0) + rng.uniform(0, 2, (n, dim)) - 0.5
    hi = np.where(rng.uniform(size=(n, dim)) < 0.2, np.inf, hi)
    return lo, hi


def test_backend_name_is_known():
    assert backend_name() in ("numba", "numpy")


def test_projection_backends_agree_with_oracle(rng):
    n, dim = 500, 3
    lo, hi = _boxes(rng, n, dim)
    near = np.linalg.norm(np.clip(np.zeros((n, dim)), lo, hi), axis=1)
    R = near + rng.uniform(0.05, 2, n)
    pts = rng.normal(0, 3, (n, dim))
    a, _ = K._project_many_nb(pts, lo, hi, R, K.DYKSTRA_TOL, K.DYKSTRA_MAX_SWEEPS)
    b, _ = K._project_many_np(pts, lo, hi, R, K.DYKSTRA_TOL, K.DYKSTRA_MAX_SWEEPS)
    np.testing.assert_allclose(a, b, atol=1e-12)
    for i in range(n):
        np.testing.assert_allclose(a[i], kkt_project(pts[i], lo[i], hi[i], R[i]), atol=1e-7)


def test_langevin_backends_agree(rng):
    chains, steps, dim = 200, 300, 2
    mu = rng.standard_normal((chains, dim))
    lo = np.full((chains, dim), -np.inf)
    hi = rng.normal(0, 1, (chains, dim))
    R = np.full(chains, 4.0)
    noise = rng.standard_normal((steps, chains, dim))
    start = np.minimum(hi, 0.0)
    z1, z2 = start.copy(), start.copy()
    K._langevin_nb(z1, mu, 0.01, 0.1, noise, lo, hi, R, K.DYKSTRA_TOL, K.DYKSTRA_MAX_SWEEPS)
    K._langevin_np(z2, mu, 0.01, 0.1, noise, lo, hi, R, K.DYKSTRA_TOL, K.DYKSTRA_MAX_SWEEPS)
    np.testing.assert_allclose(z1, z2, atol=1e-10)


def test_langevin_rejects_integer_state():
    z = np.zeros((3, 1), dtype=int)
    with pytest.raises(TypeError):
        K.langevin_chains(z, 0.0, 0.1, 1.0, np.zeros((1, 3, 1)), [-np.inf], [0.0], 5.0)


def test_slab_backends_agree_and_count_correctly(rng):
    XU = rng.standard_normal((5000, 2))
    y = rng.standard_normal(5000)
    t = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    coords = np.column_stack([np.cos(t), np.sin(t)])
    shifts = rng.normal(size=16)
    s1, c1 = K._slab_nb(XU, y, coords, shifts, 0.09, 4, 8)
    s2, c2 = K._slab_np(XU, y, coords, shifts, 0.09, 4, 8)
    np.testing.assert_array_equal(c1, c2)
    np.testing.assert_allclose(s1, s2, rtol=1e-12)
    # direct count for one direction
    perp = XU - np.outer(XU @ coords[3], coords[3])
    assert c1[3].sum() == np.sum(np.linalg.norm(perp, axis=1) <= 0.3)


def test_grid_backends_agree(rng):
    XU = rng.standard_normal((3000, 2))
    y = rng.standard_normal(3000)
    C = rng.standard_normal((40, 2))
    direct = np.stack([((y - XU @ c)[:, None] ** np.array([2, 4, 6, 8])).sum(axis=0) for c in C])
    np.testing.assert_allclose(K._grid_np(XU, y, C), direct, rtol=1e-12)
    np.testing.assert_allclose(K._grid_nb(XU, y, C), direct, rtol=1e-10)
    np.testing.assert_allclose(K._grid2_nb(XU[:, 0].copy(), XU[:, 1].copy(), y, C), direct, rtol=1e-10)
    XU3 = rng.standard_normal((3000, 3))
    C3 = rng.standard_normal((10, 3))
    np.testing.assert_allclose(K.grid_shifted_moments(XU3, y, C3), K._grid_np(XU3, y, C3), rtol=1e-10)


def test_numpy_fallback_flag_in_subprocess():
    import subprocess
    import sys
    code = ("from selfselect._accel import NUMBA_ENABLED, backend_name; "
            "print(NUMBA_ENABLED, backend_name())")
    out = subprocess.run([sys.executable, "-c", code], env={"SELFSELECT_DISABLE_NUMBA": "1", "PATH": ""},
                         capture_output=True, text=True, check=True).stdout.split()
    assert out == ["False", "numpy"]
