"""Reference-echo estimation by principal component maximization.

The raw data are cut into equally sized blocks; each block is mean-removed,
scaled to unit Frobenius norm, and scored by the energy of its rank-``D``
principal component. Normalization makes the score a *fraction* of block
energy, so a bright scatterer in weak clutter beats a brighter one buried in
strong clutter. The block with the highest score supplies the reference echo.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import as_complex_matrix
from .errors import ConvergenceError, DegenerateBlockError, InvalidArgumentError, NoReferenceError
from .lowrank import SvdTriplet, eigenspectrum, principal_component

__all__ = [
    "BlockGrid",
    "BlockScore",
    "ReferenceEcho",
    "segment_blocks",
    "normalize_block",
    "estimate_reference_echo",
    "write_score_csv",
    "default_workers",
]

# block scores only need the leading singular values, which converge
# quadratically faster than the subspace itself
SCORE_TOL = 1e-7
SCORE_VALUE_TOL = 1e-10
# blocks without a dominant component converge slowly; past this many sweeps
# the dense Gram spectrum is cheaper
SCORE_SWEEPS = 6


def default_workers():
    try:
        return max(1, int(os.environ.get("PCMSAR_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class BlockGrid:
    block_rows: int = 500
    block_cols: int = 500
    stride_rows: int | None = None
    stride_cols: int | None = None
    cover_edges: bool = True

    def __post_init__(self):
        sr = self.block_rows if self.stride_rows is None else self.stride_rows
        sc = self.block_cols if self.stride_cols is None else self.stride_cols
        object.__setattr__(self, "stride_rows", sr)
        object.__setattr__(self, "stride_cols", sc)
        for name in ("block_rows", "block_cols", "stride_rows", "stride_cols"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"BlockGrid.{name} must be positive")
        if sr > self.block_rows or sc > self.block_cols:
            raise InvalidArgumentError("strides larger than blocks would leave holes")

    def origins(self, n, block, stride):
        pos = list(range(0, n - block + 1, stride))
        if self.cover_edges and pos[-1] + block < n:
            pos.append(n - block)
        return pos

    def lattice(self, shape):
        if self.block_rows > shape[0] or self.block_cols > shape[1]:
            raise InvalidArgumentError(f"block {self.block_rows}x{self.block_cols} larger than data {shape}")
        return (
            self.origins(shape[0], self.block_rows, self.stride_rows),
            self.origins(shape[1], self.block_cols, self.stride_cols),
        )


@dataclass(frozen=True)
class BlockScore:
    index: tuple
    g: float
    origin: tuple = (0, 0)


@dataclass
class ReferenceEcho:
    """Rank-``D`` reference echo taken from the winning block.

    ``matrix`` is the principal component of the mean-removed but *unscaled*
    block, so ``matrix / raw_norm`` is the normalized component whose energy
    is ``source.g`` (when normalization was on). ``anchor`` is the pixel of
    ``matrix`` treated as the echo center when correlating: the main-lobe
    peak of the slow-time factor (its zero-Doppler point when the block cuts
    the lobe off, so the row may fall outside ``matrix``) and the energy
    centroid of the fast-time factor.
    """

    matrix: np.ndarray
    triplets: list
    source: BlockScore
    raw_norm: float
    anchor: tuple

    @property
    def origin(self):
        return self.source.origin

    @property
    def azimuth_factor(self):
        return self.triplets[0].u

    @property
    def range_factor(self):
        return self.triplets[0].v


def segment_blocks(Y, grid):
    """Row-major list of ``((i, j), (row0, col0), view)`` for every block."""
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise InvalidArgumentError("data must be 2-D")
    rows, cols = grid.lattice(Y.shape)
    out = []
    for i, r0 in enumerate(rows):
        for j, c0 in enumerate(cols):
            out.append(((i, j), (r0, c0), Y[r0 : r0 + grid.block_rows, c0 : c0 + grid.block_cols]))
    return out


def normalize_block(B):
    """Scale ``B`` to unit Frobenius norm; all-zero blocks are degenerate."""
    B = np.asarray(B, dtype=np.complex128)
    norm = np.linalg.norm(B)
    if not norm > 0:
        raise DegenerateBlockError("block has zero energy")
    return B / norm


def _centroid(weights):
    w = np.abs(weights) ** 2
    return int(round(float(np.dot(np.arange(w.size), w) / w.sum())))


def _main_lobe(a):
    """Peak index and half-amplitude bounds ``[lo, hi)`` of the main lobe of ``a``."""
    p = int(np.argmax(a))
    lo, hi = p, p + 1
    while lo > 0 and a[lo - 1] >= 0.5 * a[p]:
        lo -= 1
    while hi < a.size and a[hi] >= 0.5 * a[p]:
        hi += 1
    return p, lo, hi


def _lobe_center(weights):
    """Vertex of a parabola fitted to the main lobe of ``|weights|``.

    Unlike the energy centroid this stays on the pattern peak when the
    block cuts the echo off on one side.
    """
    a = np.abs(weights)
    p, lo, hi = _main_lobe(a)
    if hi - lo < 5:
        return p
    x = np.arange(lo, hi) - p
    c2, c1, _ = np.polyfit(x, a[lo:hi], 2)
    if not c2 < 0:
        return p
    vertex = p - 0.5 * c1 / c2
    return int(round(min(max(vertex, lo), hi - 1)))


def _zero_doppler(u):
    """Index where the instantaneous frequency of chirp ``u`` crosses zero, or None.

    A weighted line is fitted to the wrapped phase increments, so no phase
    unwrapping is needed; points the first fit disagrees with by more than a
    quarter cycle (aliased ones near the band edge) are dropped once.
    """
    d = u[1:] * np.conj(u[:-1])
    f = np.angle(d) / (2.0 * np.pi)
    w = np.abs(d)
    x = np.arange(d.size) + 0.5
    keep = w > 1e-6 * w.max()
    for _ in range(2):
        if keep.sum() < 3:
            return None
        slope, icpt = np.polyfit(x[keep], f[keep], 1, w=np.sqrt(w[keep]))
        keep &= np.abs(f - (icpt + slope * x)) < 0.25
    if not abs(slope) * u.size > 1e-3:
        return None
    return -icpt / slope


def _azimuth_anchor(u):
    """Echo center along slow time.

    The main-lobe center when the block holds the whole lobe; when the block
    cuts the lobe off, the zero-Doppler point of the slow-time chirp, which
    may lie outside the block.
    """
    u = np.asarray(u)
    _, lo, hi = _main_lobe(np.abs(u))
    if lo > 0 and hi < u.size:
        return _lobe_center(u)
    x0 = _zero_doppler(u)
    if x0 is None or not abs(x0) < 4 * u.size:
        return _lobe_center(u)
    return int(round(x0))


def _leading(M, D):
    try:
        return principal_component(M, D)
    except ConvergenceError as err:
        s, U, V = err.partial
        trip = [SvdTriplet(float(s[d]), U[:, d].copy(), V[:, d].conj()) for d in range(D)]
        return (U * s) @ V.conj().T, trip


def _score_block(B, D, normalize):
    B = B - B.mean()
    if normalize:
        try:
            B = normalize_block(B)
        except DegenerateBlockError:
            return None
    elif not np.any(B):
        return None
    try:
        _, trip = principal_component(B, D, tol=SCORE_TOL, max_iter=SCORE_SWEEPS, value_tol=SCORE_VALUE_TOL)
    except ConvergenceError:
        return float(eigenspectrum(B, D).sum())
    return float(sum(t.sigma**2 for t in trip))


def estimate_reference_echo(Y, grid=None, D=1, normalize=True, workers=None):
    """Pick the block whose rank-``D`` principal component is strongest.

    Returns ``(ReferenceEcho, scores)`` where ``scores`` is the block-lattice
    map of ``g`` values (NaN for degenerate blocks). Ties go to the lowest
    row-major block index. The result does not depend on ``workers``.
    """
    Y = as_complex_matrix(Y, "Y")
    grid = grid or BlockGrid()
    if not isinstance(D, (int, np.integer)) or D < 1 or D > min(grid.block_rows, grid.block_cols):
        raise InvalidArgumentError(f"invalid principal-component dimension D={D!r}")
    rows, cols = grid.lattice(Y.shape)
    blocks = segment_blocks(Y, grid)
    workers = workers or default_workers()

    def job(item):
        return _score_block(item[2], D, normalize)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, blocks))
    else:
        results = [job(b) for b in blocks]

    scores = np.array([np.nan if g is None else g for g in results]).reshape(len(rows), len(cols))
    if np.all(np.isnan(scores)):
        raise NoReferenceError("every block is degenerate")
    flat = int(np.nanargmax(scores))
    (i, j), origin, view = blocks[flat]
    block = view - view.mean()
    raw_norm = float(np.linalg.norm(block))
    matrix, triplets = _leading(block, D)
    anchor = (_azimuth_anchor(triplets[0].u), _centroid(triplets[0].v))
    ref = ReferenceEcho(matrix, triplets, BlockScore((i, j), float(scores[i, j]), origin), raw_norm, anchor)
    return ref, scores


def write_score_csv(scores, path):
    """Write a block score map as ``row,col,g`` lines."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "g"])
        for (i, j), g in np.ndenumerate(scores):
            w.writerow([i, j, "" if np.isnan(g) else repr(float(g))])
