import json
import math

import numpy as np
import pytest

from pcmsar import pri, sim
from pcmsar.errors import InsufficientDataError, InvalidArgumentError, NoPeriodicityError
from pcmsar.lowrank import principal_component

from helpers import complex_normal, ers_like_stream


def objective(y, P, rows, cols):
    _, trip = principal_component(pri.map_1d_to_2d(y, P, row_count=rows)[:, :cols], 1)
    return trip[0].sigma ** 2


@pytest.fixture(scope="module", params=[5616.0, 5615.98])
def stream(request):
    y, Y, echo = ers_like_stream(request.param)
    return request.param, y


class TestMapping:
    def test_integer_pri_is_reshape(self):
        y = np.arange(60, dtype=complex)
        assert np.array_equal(pri.map_1d_to_2d(y, 12.0), y.reshape(5, 12))

    def test_row_count(self):
        for n, P in [(1000, 7.3), (5616 * 3 + 100, 5615.98), (100, 10.0)]:
            M = pri.map_1d_to_2d(np.ones(n, dtype=complex), P)
            assert M.shape == (math.floor((n - math.floor(P)) / P) + 1, math.floor(P))

    def test_row_cap(self):
        assert pri.map_1d_to_2d(np.ones(1000), 10.0, row_count=7).shape == (7, 10)

    def test_row_starts_follow_products(self):
        # a tone periodic in the row length is shifted exactly, so row l reads y(l*P + k)
        P = 37.31
        f = 3 / 37
        n = np.arange(2000)
        M = pri.map_1d_to_2d(np.exp(2j * np.pi * f * n), P)
        l = np.arange(M.shape[0])[:, None]
        k = np.arange(37)[None, :]
        assert np.allclose(M, np.exp(2j * np.pi * f * (l * P + k)), atol=1e-9)

    @pytest.mark.parametrize("P", [5616.0, 5615.98])
    def test_round_trip(self, P):
        rng = np.random.default_rng(2)
        Y = complex_normal(rng, (6, 5600))
        back = pri.map_1d_to_2d(sim.flatten_to_stream(Y, P), P)
        # the stream stops at the last pulse's data, so its slot is incomplete
        L = back.shape[0]
        assert L == 5
        inner = slice(8, 5600 - 8)
        err = np.linalg.norm(back[:, inner] - Y[:L, inner]) / np.linalg.norm(Y[:L, inner])
        assert err <= (0 if P.is_integer() else 1e-6)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            pri.map_1d_to_2d(np.ones(15), 10.0)

    @pytest.mark.parametrize("P", [1.0, 0.5, np.nan])
    def test_invalid_pri(self, P):
        with pytest.raises(InvalidArgumentError):
            pri.map_1d_to_2d(np.ones(100), P)


class TestCoarse:
    def test_pulse_train(self):
        y = np.zeros(65536)
        y[(np.arange(65536) % 128) < 20] = 1.0
        assert pri.coarse_pri(y) == pytest.approx(128, abs=0.5)

    def test_sparse_pulse_train_prefers_fundamental(self):
        y = np.zeros(65536)
        y[(np.arange(65536) % 300) < 200] = 1.0
        assert pri.coarse_pri(y) == pytest.approx(300, abs=0.5)

    def test_constant_amplitude(self):
        with pytest.raises(NoPeriodicityError):
            pri.coarse_pri(np.exp(1j * np.linspace(0, 50, 40000)))

    @pytest.mark.parametrize("band", [(1, 100), (100, 50), (10, 20000)])
    def test_invalid_band(self, band):
        with pytest.raises(InvalidArgumentError):
            pri.coarse_pri(np.ones(40000), *band)

    def test_simulated_stream(self, stream):
        P, y = stream
        assert abs(pri.coarse_pri(y) - P) <= 3


class TestFine:
    def test_from_offset_start(self, stream):
        P, y = stream
        est = pri.fine_pri(y[: pri.DEFAULT_SUBSET], P - 2.0)
        assert abs(est.final - P) <= 0.05
        assert abs(est.final - P) <= abs(est.coarse - P)
        assert est.final == est.stage_estimates[-1]
        widths = [w for w, _ in est.stage_windows]
        assert all(a > b for a, b in zip(widths, widths[1:]))

    def test_interior_maximum(self, stream):
        P, y = stream
        est = pri.fine_pri(y[: pri.DEFAULT_SUBSET], P - 1.0)
        ps, obj = est.curves[-1]
        assert 0 < int(np.argmax(obj)) < ps.size - 1
        assert not any(est.edge_hits)

    def test_exact_integer_start_stays(self):
        y, _, _ = ers_like_stream(5616.0, pulses=30, seed=4)
        est = pri.fine_pri(y, 5616.0)
        assert abs(est.final - 5616.0) <= 0.001
        # exhaustive fine grid around the truth peaks at the truth
        rows = pri.mapped_row_count(y.size, 5616.05)
        grid = 5616.0 + 0.001 * np.arange(-20, 21)
        vals = [objective(y, P, rows, 5615) for P in grid]
        assert grid[int(np.argmax(vals))] == pytest.approx(5616.0, abs=1e-9)

    def test_subset_agrees_with_full_stream(self):
        y, _, _ = ers_like_stream(5615.98, pulses=40, seed=5)
        a = pri.fine_pri(y[:100_000], 5615.5)
        b = pri.fine_pri(y, 5615.5)
        assert abs(a.final - b.final) <= 2 * 0.001

    def test_window_too_small_warns(self, stream):
        P, y = stream
        with pytest.warns(pri.WindowTooSmallWarning):
            est = pri.fine_pri(y[:50_000], P - 0.5, schedule=((0.1, 0.01),))
        assert est.edge_hits == [True]

    def test_workers_do_not_change_result(self, stream):
        P, y = stream
        sched = ((0.2, 0.02), (0.02, 0.002))
        a = pri.fine_pri(y[:50_000], P - 0.1, schedule=sched, workers=1)
        b = pri.fine_pri(y[:50_000], P - 0.1, schedule=sched, workers=3)
        assert a.stage_estimates == b.stage_estimates
        for (pa, oa), (pb, ob) in zip(a.curves, b.curves):
            assert np.array_equal(pa, pb) and np.array_equal(oa, ob)

    @pytest.mark.parametrize("sched", [(), ((1.0, 1.0),), ((0.0, 0.1),)])
    def test_invalid_schedule(self, sched):
        with pytest.raises(InvalidArgumentError):
            pri.fine_pri(np.ones(1000, dtype=complex), 100.0, schedule=sched)

    def test_subset_too_short(self):
        with pytest.raises(InsufficientDataError):
            pri.fine_pri(np.ones(7000, dtype=complex), 5616.0)

    def test_exports(self, tmp_path, stream):
        P, y = stream
        est = pri.fine_pri(y[:50_000], P, schedule=((0.05, 0.01),))
        d = json.loads(est.to_json(tmp_path / "t.json"))
        assert d["final"] == est.final and d["stage_windows"] == [[0.05, 0.01]]
        assert json.loads((tmp_path / "t.json").read_text()) == d
        est.write_curves_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "stage,P,objective" and len(lines) == 1 + 11


def test_estimate_pri_end_to_end():
    y, _, _ = ers_like_stream(5615.98, seed=6)
    est = pri.estimate_pri(y)
    assert abs(est.coarse - 5615.98) <= 3 and abs(est.final - 5615.98) <= 0.05
