"""Sample-PRI estimation and 1-D to 2-D raw-data mapping.

A receiver records one long stream; pulse ``l`` starts at sample ``l * P``
where the sample PRI ``P`` is unknown and usually fractional. The coarse
estimate comes from the periodicity of ``|y|``; the fine estimate searches
``P`` for the mapping whose 2-D matrix has the strongest rank-1 component,
since only the true ``P`` lines the pulses up coherently.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from .core import fractional_shift, parabolic_peak, row_starts
from .errors import InsufficientDataError, InvalidArgumentError, NoPeriodicityError
from .lowrank import principal_component
from .pcm import default_workers

__all__ = [
    "DEFAULT_SCHEDULE",
    "DEFAULT_SUBSET",
    "PriEstimate",
    "WindowTooSmallWarning",
    "map_1d_to_2d",
    "mapped_row_count",
    "coarse_pri",
    "fine_pri",
    "estimate_pri",
]

DEFAULT_SCHEDULE = ((3.0, 0.1), (0.3, 0.01), (0.03, 0.001))
DEFAULT_SUBSET = 100_000
PEAK_MARGIN_DB = 6.0
# the objective needs the leading singular value only
OBJECTIVE_VALUE_TOL = 1e-12


class WindowTooSmallWarning(UserWarning):
    """A fine-search stage peaked on the edge of its window."""


def mapped_row_count(n, P):
    p_int = int(math.floor(P))
    if n < p_int:
        return 0
    return int(math.floor((n - p_int) / P)) + 1


def map_1d_to_2d(y, P, row_count=None):
    """Cut a stream into rows of ``floor(P)`` samples starting at ``l * P``.

    Each row is advanced by the fractional part of its start with an FFT
    shift so that column ``k`` always samples the same fast time.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    if not (math.isfinite(P) and P > 1):
        raise InvalidArgumentError(f"sample PRI must exceed 1, got {P!r}")
    L = mapped_row_count(y.size, P)
    if row_count is not None:
        L = min(L, int(row_count))
    if L < 2:
        raise InsufficientDataError(f"stream of {y.size} samples holds fewer than 2 rows at P={P}")
    p_int = int(math.floor(P))
    starts, fracs = row_starts(L, P)
    rows = y[starts[:, None] + np.arange(p_int)[None, :]]
    if np.any(fracs != 0):
        rows = fractional_shift(rows, -fracs)
    return rows


def _hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def coarse_pri(y, P_min=None, P_max=None, pad_factor=4):
    """Period of ``|y|`` from the peak of its spectrum.

    The mean-removed amplitude is Hann-windowed and zero-padded, the strongest
    bin with a period in ``[P_min, P_max]`` is refined by a 3-point parabola
    (on log magnitude), and ``1/f_peak`` is returned. If an integer fraction
    of that frequency also carries a clear peak, the lowest such frequency is
    taken, because a pulse train with short dead time can put more energy in
    its second or third harmonic than in the fundamental.
    """
    a = np.abs(np.asarray(y).ravel()).astype(float)
    n = a.size
    P_min = 64.0 if P_min is None else float(P_min)
    P_max = n / 8.0 if P_max is None else float(P_max)
    if P_min < 2 or P_max > n / 4.0 or P_min >= P_max:
        raise InvalidArgumentError(f"period band [{P_min}, {P_max}] invalid for {n} samples")
    mean = a.mean()
    a -= mean
    if not np.abs(a).max() > 1e-12 * max(mean, 1e-300):
        raise NoPeriodicityError("stream amplitude is constant")
    nfft = sfft.next_fast_len(pad_factor * n)
    mag = np.abs(sfft.rfft(a * _hann(n), nfft))
    k_lo = int(math.ceil(nfft / P_max))
    k_hi = int(math.floor(nfft / P_min))
    band = mag[k_lo : k_hi + 1]
    floor = float(np.median(band))
    peak = float(band.max())
    if not peak > 0 or 20.0 * math.log10(peak / max(floor, 1e-300)) < PEAK_MARGIN_DB:
        raise NoPeriodicityError("no spectral line stands out of the amplitude spectrum")
    k = k_lo + int(np.argmax(band))

    def local_peak(center):
        lo = max(k_lo, int(center) - 3 * pad_factor)
        hi = min(k_hi, int(center) + 3 * pad_factor)
        if hi < lo:
            return None
        j = lo + int(np.argmax(mag[lo : hi + 1]))
        return j if j not in (lo, hi) or lo == hi else None

    for d in (4, 3, 2):
        if k / d < k_lo:
            continue
        j = local_peak(k / d)
        if j is not None and mag[j] >= 0.3 * peak and 20.0 * math.log10(mag[j] / floor) >= PEAK_MARGIN_DB:
            k = j
            break
    logmag = np.log(np.maximum(mag[k - 1 : k + 2], 1e-300))
    off, _ = parabolic_peak(logmag, 1)
    return nfft / (k + off)


@dataclass
class PriEstimate:
    coarse: float
    stage_estimates: list = field(default_factory=list)
    final: float = float("nan")
    stage_windows: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    edge_hits: list = field(default_factory=list)

    def to_json(self, path=None):
        d = asdict(self)
        d["curves"] = [{"P": list(map(float, p)), "objective": list(map(float, o))} for p, o in self.curves]
        text = json.dumps({k: v for k, v in d.items() if k != "curves"}, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def write_curves_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "P", "objective"])
            for q, (ps, obj) in enumerate(self.curves, start=1):
                for p, o in zip(ps, obj):
                    w.writerow([q, repr(float(p)), repr(float(o))])


def _objective(y, P, rows, cols, v0=None):
    M = map_1d_to_2d(y, P, row_count=rows)[:, :cols]
    _, trip = principal_component(M, 1, v0=v0, value_tol=OBJECTIVE_VALUE_TOL)
    return trip[0].sigma ** 2, trip[0].v.conj()


def fine_pri(y_sub, P0, schedule=DEFAULT_SCHEDULE, workers=None):
    """Multi-stage grid search of the sample PRI around ``P0``.

    Stage ``q`` scans ``center +- W_q`` with spacing ``dP_q`` and keeps the
    ``P`` whose mapped matrix has the largest leading singular value squared.
    All grid points use the same row and column count so that objective
    values are comparable; ties go to the smallest ``P``. Each grid point is
    warm-started from the stage center's singular vector, so the result does
    not depend on ``workers``.
    """
    y_sub = np.asarray(y_sub, dtype=np.complex128).ravel()
    if not (math.isfinite(P0) and P0 > 1):
        raise InvalidArgumentError(f"invalid starting PRI {P0!r}")
    schedule = [(float(w), float(d)) for w, d in schedule]
    if not schedule:
        raise InvalidArgumentError("empty search schedule")
    for w, d in schedule:
        if not (0 < d < 1) or w <= 0:
            raise InvalidArgumentError(f"stage (W={w}, dP={d}) needs W > 0 and 0 < dP < 1")
    # lock the matrix size to what the widest stage can supply everywhere
    reach = sum(w for w, _ in schedule)
    rows = mapped_row_count(y_sub.size, P0 + reach)
    cols = int(math.floor(P0 - reach))
    if rows < 2 or cols < 1:
        raise InsufficientDataError(f"subset of {y_sub.size} samples too short for P near {P0}")
    workers = workers or default_workers()

    est = PriEstimate(coarse=float(P0))
    center = float(P0)
    for w, d in schedule:
        half = int(round(w / d))
        grid = center + d * np.arange(-half, half + 1)
        _, v0 = _objective(y_sub, center, rows, cols)

        def job(P, v0=v0):
            return _objective(y_sub, float(P), rows, cols, v0=v0)[0]

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                obj = np.array(list(pool.map(job, grid)))
        else:
            obj = np.array([job(P) for P in grid])
        best = int(np.argmax(obj))
        if best in (0, grid.size - 1):
            warnings.warn(
                f"PRI search peaked at the edge of [{grid[0]:.4f}, {grid[-1]:.4f}]; widen the window",
                WindowTooSmallWarning,
                stacklevel=2,
            )
            est.edge_hits.append(True)
        else:
            est.edge_hits.append(False)
        center = float(grid[best])
        est.stage_estimates.append(center)
        est.stage_windows.append((w, d))
        est.curves.append((grid, obj))
    est.final = est.stage_estimates[-1]
    return est


def estimate_pri(y, P_min=None, P_max=None, schedule=DEFAULT_SCHEDULE, subset=DEFAULT_SUBSET, workers=None):
    """Coarse estimate on the full stream, then fine search on its first ``subset`` samples."""
    y = np.asarray(y, dtype=np.complex128).ravel()
    P0 = coarse_pri(y, P_min, P_max)
    n = y.size if subset is None else min(int(subset), y.size)
    return fine_pri(y[:n], P0, schedule, workers=workers)
