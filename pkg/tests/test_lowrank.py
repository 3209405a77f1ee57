import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pcmsar import sim
from pcmsar.errors import ConvergenceError, InvalidArgumentError
from pcmsar.lowrank import eigenspectrum, principal_component, subspace_iteration

from helpers import complex_normal


def svd_truncation(M, D):
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    return (U[:, :D] * s[:D]) @ Vh[:D]


@pytest.fixture(scope="module")
def point_echo():
    g = sim.desk_geometry()
    grid = sim.centered_grid(g, 512, 512)
    return sim.simulate_point_echo(g, sim.PointTarget.at_pixel(g, grid, 256, 256), grid)


class TestPrincipalComponent:
    def test_rank_one_input_is_reproduced(self):
        rng = np.random.default_rng(0)
        M = 2.5 * np.outer(complex_normal(rng, 9), complex_normal(rng, 7))
        approx, trip = principal_component(M, 1)
        assert np.linalg.norm(approx - M) <= 1e-9 * np.linalg.norm(M)
        assert np.linalg.norm(trip[0].outer() - M) <= 1e-9 * np.linalg.norm(M)

    def test_diagonal(self):
        approx, trip = principal_component(np.diag([3.0, 1.0]), 1)
        assert np.allclose(approx, np.diag([3.0, 0.0]), atol=1e-12)
        assert trip[0].sigma == pytest.approx(3.0, abs=1e-12)

    @pytest.mark.parametrize("shape,D", [((16, 16), 3), ((100, 80), 2), ((80, 120), 1)])
    def test_matches_full_svd_truncation(self, shape, D):
        M = complex_normal(np.random.default_rng(1), shape)
        approx, trip = principal_component(M, D)
        ref = svd_truncation(M, D)
        assert np.linalg.norm(approx - ref) <= 1e-7 * np.linalg.norm(ref)
        s = np.linalg.svd(M, compute_uv=False)
        assert np.allclose([t.sigma for t in trip], s[:D], rtol=1e-9)

    @given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 2**32 - 1), st.data())
    def test_triplet_invariants(self, rows, cols, seed, data):
        D = data.draw(st.integers(1, min(rows, cols)))
        M = complex_normal(np.random.default_rng(seed), (rows, cols))
        approx, trip = principal_component(M, D)
        sig = [t.sigma for t in trip]
        assert all(s >= 0 for s in sig) and sig == sorted(sig, reverse=True)
        for t in trip:
            assert abs(np.linalg.norm(t.u) - 1) < 1e-9 and abs(np.linalg.norm(t.v) - 1) < 1e-9
        assert np.linalg.norm(sum(t.outer() for t in trip) - approx) <= 1e-9 * np.linalg.norm(approx)
        assert np.linalg.norm(approx) ** 2 == pytest.approx(sum(s * s for s in sig), rel=1e-9)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_eckart_young_beats_random_competitors(self, seed, D):
        rng = np.random.default_rng(seed)
        M = complex_normal(rng, (12, 10))
        approx, _ = principal_component(M, D)
        best = np.linalg.norm(M - approx)
        for _ in range(20):
            Qu, _ = np.linalg.qr(complex_normal(rng, (12, D)))
            Qv, _ = np.linalg.qr(complex_normal(rng, (10, D)))
            comp = Qu @ np.diag(np.abs(rng.standard_normal(D)) * 3) @ Qv.conj().T
            assert best <= np.linalg.norm(M - comp) + 1e-12

    @pytest.mark.parametrize("D", [0, 5, 1.0, -1])
    def test_bad_rank(self, D):
        with pytest.raises(InvalidArgumentError):
            principal_component(np.ones((4, 4)), D)

    def test_convergence_error_carries_residual(self):
        M = complex_normal(np.random.default_rng(2), (200, 150))
        with pytest.raises(ConvergenceError) as exc:
            principal_component(M, 1, max_iter=2)
        assert exc.value.residual > 0
        s, U, V = exc.value.partial
        assert s.shape == (1,) and U.shape == (200, 1) and V.shape == (150, 1)

    def test_zero_matrix(self):
        approx, trip = principal_component(np.zeros((5, 4)), 2)
        assert not np.any(approx) and [t.sigma for t in trip] == [0.0, 0.0]

    def test_deterministic(self):
        M = complex_normal(np.random.default_rng(3), (120, 90))
        a1, t1 = principal_component(M, 2)
        a2, t2 = principal_component(M, 2)
        assert np.array_equal(a1, a2) and np.array_equal(t1[0].u, t2[0].u)

    def test_warm_start_gives_same_subspace(self):
        M = complex_normal(np.random.default_rng(4), (120, 90))
        _, t = principal_component(M, 1)
        approx, _ = principal_component(M, 1, v0=t[0].v.conj())
        assert np.linalg.norm(approx - svd_truncation(M, 1)) <= 1e-7 * np.linalg.norm(approx)

    def test_value_tolerance_keeps_singular_value(self):
        M = complex_normal(np.random.default_rng(5), (150, 150))
        s, _, _, it = subspace_iteration(M, 1, value_tol=1e-12, max_iter=2000)
        assert s[0] == pytest.approx(np.linalg.svd(M, compute_uv=False)[0], rel=1e-9)


class TestEigenspectrum:
    def test_zero_matrix(self):
        assert np.array_equal(eigenspectrum(np.zeros((4, 6)), 3), np.zeros(3))

    @given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_matches_squared_sigmas(self, rows, cols, seed):
        M = complex_normal(np.random.default_rng(seed), (rows, cols))
        k = min(rows, cols, 3)
        _, trip = principal_component(M, k)
        assert np.allclose(eigenspectrum(M, k), [t.sigma**2 for t in trip], rtol=1e-7)

    @given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_sum_is_frobenius_energy(self, rows, cols, seed):
        M = complex_normal(np.random.default_rng(seed), (rows, cols))
        vals = eigenspectrum(M, min(rows, cols))
        assert vals.sum() == pytest.approx(np.linalg.norm(M) ** 2, rel=1e-7)
        assert np.all(np.diff(vals) <= 1e-12) and np.all(vals >= 0)

    @pytest.mark.parametrize("k", [0, 7])
    def test_bad_k(self, k):
        with pytest.raises(InvalidArgumentError):
            eigenspectrum(np.ones((6, 6)), k)

    def test_point_echo_is_dominated_by_first_component(self, point_echo):
        vals = eigenspectrum(point_echo, 100)
        assert vals[0] > 5 * vals[1]

    def test_point_echo_energy_in_top_fifteen(self, point_echo):
        vals = eigenspectrum(point_echo, 512)
        assert vals[:15].sum() >= 0.99 * vals.sum()
