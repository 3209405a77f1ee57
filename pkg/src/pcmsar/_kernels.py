"""Hot loops of the simulator and the focusing oracle.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy version
with identical semantics. The numba path is used when numba imports and the
environment variable ``PCMSAR_DISABLE_NUMBA`` is unset or ``0``; both paths
stay importable so tests and ``benchmarks/bench_kernels.py`` can compare them.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("PCMSAR_DISABLE_NUMBA", "0") in ("", "0")

__all__ = ["HAS_NUMBA", "USE_NUMBA", "echo_patch", "echo_patch_numpy", "oracle_window", "oracle_window_numpy"]


def echo_patch_numpy(eta, tau, x0, r0, amp, v, c, lam, kr, tp, beam):
    """Point echo of one scatterer sampled on the ``eta x tau`` grid.

    ``beam`` scales the two-way pattern ``sinc(beam * sin(theta))**2``, which
    is truncated at its first null.
    """
    along = v * eta - x0
    rng = np.sqrt(along * along + r0 * r0)
    arg = beam * along / rng
    w = np.where(np.abs(arg) <= 1.0, np.sinc(arg) ** 2, 0.0)
    t = tau[None, :] - (2.0 / c) * rng[:, None]
    chirp = np.where(np.abs(t) <= 0.5 * tp, np.exp(1j * np.pi * kr * t * t), 0.0)
    phase = np.exp(-4j * np.pi * rng / lam)
    return (amp * w * phase)[:, None] * chirp


def oracle_window_numpy(Y, eta, tau, x_pix, r_pix, v, c, lam, kr, tp, beam, row_lo, row_hi, col_lo, col_hi):
    """Normalized matched-filter magnitude for every pixel of a window.

    ``x_pix``/``r_pix`` give each pixel's along-track position and closest
    range; ``row_lo``.. bound each pixel's echo support inside ``Y``.
    """
    out = np.zeros((x_pix.size, r_pix.size))
    for a in range(x_pix.size):
        for b in range(r_pix.size):
            r0, r1 = row_lo[a, b], row_hi[a, b]
            c0, c1 = col_lo[a, b], col_hi[a, b]
            e = echo_patch_numpy(eta[r0:r1], tau[c0:c1], x_pix[a], r_pix[b], 1.0, v, c, lam, kr, tp, beam)
            energy = np.vdot(e, e).real
            if energy > 0:
                out[a, b] = abs(np.vdot(e, Y[r0:r1, c0:c1])) / energy
    return out


if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _sinc2(x):
        if x == 0.0:
            return 1.0
        s = np.sin(np.pi * x) / (np.pi * x)
        return s * s

    @numba.njit(cache=True, nogil=True)
    def echo_patch_numba(eta, tau, x0, r0, amp, v, c, lam, kr, tp, beam):
        out = np.zeros((eta.size, tau.size), dtype=np.complex128)
        half = 0.5 * tp
        for i in range(eta.size):
            along = v * eta[i] - x0
            rng = np.sqrt(along * along + r0 * r0)
            arg = beam * along / rng
            if abs(arg) > 1.0:
                continue
            lead = amp * _sinc2(arg) * np.exp(-4j * np.pi * rng / lam)
            delay = 2.0 * rng / c
            for j in range(tau.size):
                t = tau[j] - delay
                if abs(t) <= half:
                    out[i, j] = lead * np.exp(1j * np.pi * kr * t * t)
        return out

    @numba.njit(cache=True, nogil=True)
    def oracle_window_numba(Y, eta, tau, x_pix, r_pix, v, c, lam, kr, tp, beam, row_lo, row_hi, col_lo, col_hi):
        out = np.zeros((x_pix.size, r_pix.size))
        half = 0.5 * tp
        for a in range(x_pix.size):
            for b in range(r_pix.size):
                acc = 0j
                energy = 0.0
                for i in range(row_lo[a, b], row_hi[a, b]):
                    along = v * eta[i] - x_pix[a]
                    rng = np.sqrt(along * along + r_pix[b] * r_pix[b])
                    arg = beam * along / rng
                    if abs(arg) > 1.0:
                        continue
                    w = _sinc2(arg)
                    lead = w * np.exp(-4j * np.pi * rng / lam)
                    delay = 2.0 * rng / c
                    for j in range(col_lo[a, b], col_hi[a, b]):
                        t = tau[j] - delay
                        if abs(t) <= half:
                            e = lead * np.exp(1j * np.pi * kr * t * t)
                            acc += Y[i, j] * np.conj(e)
                            energy += w * w
                if energy > 0:
                    out[a, b] = abs(acc) / energy
        return out

else:  # pragma: no cover
    echo_patch_numba = None
    oracle_window_numba = None


echo_patch = echo_patch_numba if USE_NUMBA else echo_patch_numpy
oracle_window = oracle_window_numba if USE_NUMBA else oracle_window_numpy
