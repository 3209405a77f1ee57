import os
import subprocess
import sys

import numpy as np
import pytest

from pcmsar import _kernels, sim

needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")
GEOM = sim.desk_geometry()


def patch_args(seed=0):
    rng = np.random.default_rng(seed)
    eta = np.sort(rng.uniform(-1.5, 1.5, 40))
    tau = 2 * GEOM.r0_scene / GEOM.c + np.linspace(-2e-6, 3e-6, 300)
    return (eta, tau, 3.0, GEOM.r0_scene, 0.5 - 2j, GEOM.v, GEOM.c, GEOM.lam, GEOM.kr, GEOM.tp, GEOM.beam)


@needs_numba
def test_echo_patch_paths_agree():
    a = _kernels.echo_patch_numpy(*patch_args())
    b = _kernels.echo_patch_numba(*patch_args())
    assert np.abs(a).max() > 0
    # the carrier phase is ~1e7 rad, so the paths differ at that scale times eps
    assert np.allclose(a, b, rtol=0, atol=1e-8)


@needs_numba
def test_oracle_paths_agree():
    grid = sim.Grid(500, 300, 2 * GEOM.r0_scene / GEOM.c - 100 / GEOM.fs)
    Y = sim.simulate_point_echo(GEOM, sim.PointTarget.at_pixel(GEOM, grid, 250, 100), grid)
    x = sim.Grid.x_of(GEOM, np.array([249.0, 250.0, 251.0]))
    r = grid.range_of(GEOM, np.array([99.0, 100.0]))
    lo = np.zeros((3, 2), dtype=np.int64)
    args = (Y, grid.eta(GEOM.prf), grid.tau(GEOM.fs), x, r, GEOM.v, GEOM.c, GEOM.lam, GEOM.kr, GEOM.tp, GEOM.beam,
            lo + 20, lo + 480, lo, lo + 300)
    a = _kernels.oracle_window_numpy(*args)
    b = _kernels.oracle_window_numba(*args)
    assert a[1, 1] == pytest.approx(1.0, rel=1e-9)
    assert np.allclose(a, b, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("flag,expected", [("1", "False"), ("0", str(_kernels.HAS_NUMBA))])
def test_env_flag_selects_path(flag, expected):
    env = dict(os.environ, PCMSAR_DISABLE_NUMBA=flag)
    code = "from pcmsar import _kernels as k; print(k.USE_NUMBA, k.echo_patch is k.echo_patch_numpy)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.split()
    assert out[0] == expected
    assert out[1] == str(expected == "False")
