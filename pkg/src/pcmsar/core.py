"""Complex-matrix primitives: FFT correlation, fractional shifts, peak helpers.

All functions are pure. Correlations are computed with zero-padded FFTs whose
length is rounded up to a fast size; the padded length never changes the
result beyond floating-point rounding because the padding always covers the
full linear-correlation support.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .errors import InvalidArgumentError

__all__ = [
    "as_complex_matrix",
    "fractional_shift",
    "xcorr2_same",
    "xcorr_rows",
    "parabolic_peak",
    "center_anchor",
    "row_starts",
    "half_power_width",
]


def as_complex_matrix(a, name="matrix"):
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    m = m.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return m


def center_anchor(shape):
    """Geometric-center anchor used when a kernel carries no explicit anchor."""
    return tuple(int(s) // 2 for s in shape)


def fractional_shift(v, delta):
    """Circularly delay ``v`` by ``delta`` samples along its last axis.

    The delay is applied as a linear phase ramp over *signed* frequency
    indices, so negative-frequency content of complex baseband data moves the
    same way as positive-frequency content. ``delta`` may be a scalar or an
    array broadcastable against ``v.shape[:-1]`` (one delay per row).

    >>> x = np.arange(4, dtype=complex)
    >>> np.allclose(fractional_shift(x, 1), np.roll(x, 1))
    True
    """
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim == 0 or v.shape[-1] < 1:
        raise InvalidArgumentError("fractional_shift needs a non-empty vector")
    d = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(d)):
        raise InvalidArgumentError(f"non-finite shift {delta!r}")
    if d.ndim == 0:
        if d == 0:
            return v.copy()
        if float(d).is_integer():
            return np.roll(v, int(d), axis=-1)
    n = v.shape[-1]
    freqs = sfft.fftfreq(n)
    ramp = np.exp(-2j * np.pi * freqs * d[..., None])
    return sfft.ifft(sfft.fft(v, axis=-1) * ramp, axis=-1)


def _check_anchor(anchor, shape):
    if anchor is None:
        return center_anchor(shape)
    anchor = tuple(int(a) for a in anchor)
    if len(anchor) != len(shape) or any(not 0 <= a < s for a, s in zip(anchor, shape)):
        raise InvalidArgumentError(f"anchor {anchor} outside kernel of shape {shape}")
    return anchor


def xcorr2_same(Y, R, anchor=None, workers=None):
    """Same-size 2-D cross-correlation of ``Y`` with kernel ``R``.

    ``out[n, k] = sum_{i,j} Y[i, j] * conj(R[i - n + ar, j - k + ac])`` where
    ``(ar, ac)`` is the kernel anchor (geometric center by default). Samples
    outside ``Y`` are treated as zero, so nothing wraps around the edges.
    """
    Y = as_complex_matrix(Y, "Y")
    R = as_complex_matrix(R, "R")
    if R.shape[0] > Y.shape[0] or R.shape[1] > Y.shape[1]:
        raise InvalidArgumentError(f"kernel {R.shape} larger than data {Y.shape}")
    ar, ac = _check_anchor(anchor, R.shape)
    m, n = R.shape
    shape = (sfft.next_fast_len(Y.shape[0] + m - 1), sfft.next_fast_len(Y.shape[1] + n - 1))
    spec = sfft.fft2(Y, shape, workers=workers) * np.conj(sfft.fft2(R, shape, workers=workers))
    full = sfft.ifft2(spec, workers=workers)
    # circular lag s sits at index s mod N; output row n needs lag n - ar
    rows = (np.arange(Y.shape[0]) - ar) % shape[0]
    cols = (np.arange(Y.shape[1]) - ac) % shape[1]
    return full[np.ix_(rows, cols)]


def xcorr_rows(Y, r, anchor=None, workers=None):
    """Correlate every row of ``Y`` with the 1-D kernel ``r`` (same-size output)."""
    Y = as_complex_matrix(Y, "Y")
    r = np.asarray(r, dtype=np.complex128).ravel()
    if r.size < 1 or r.size > Y.shape[1]:
        raise InvalidArgumentError(f"kernel length {r.size} invalid for rows of length {Y.shape[1]}")
    (a,) = _check_anchor(None if anchor is None else (anchor,), r.shape)
    nfft = sfft.next_fast_len(Y.shape[1] + r.size - 1)
    spec = sfft.fft(Y, nfft, axis=1, workers=workers) * np.conj(sfft.fft(r, nfft))
    full = sfft.ifft(spec, axis=1, workers=workers)
    cols = (np.arange(Y.shape[1]) - a) % nfft
    return full[:, cols]


def parabolic_peak(values, i):
    """Refine the peak at index ``i`` with a 3-point parabola.

    Returns ``(offset, peak_value)`` where ``offset`` is in [-0.5, 0.5] and
    measured in index units relative to ``i``. End points are not refined.
    """
    values = np.asarray(values, dtype=float)
    if i <= 0 or i >= values.size - 1:
        return 0.0, float(values[i])
    a, b, c = values[i - 1], values[i], values[i + 1]
    denom = a - 2.0 * b + c
    if denom >= 0:
        return 0.0, float(b)
    off = 0.5 * (a - c) / denom
    off = float(np.clip(off, -0.5, 0.5))
    return off, float(b - 0.25 * (a - c) * off)


def row_starts(n_rows, P):
    """Integer and fractional start of each row of a stream with sample PRI ``P``.

    Row ``l`` starts at continuous sample ``l * P``. Products are rounded to
    1e-9 samples first so that values such as ``50 * 5615.98`` land on their
    exact integer instead of one ulp below it.
    """
    exact = np.round(np.arange(n_rows) * float(P), 9)
    ints = np.floor(exact).astype(np.int64)
    return ints, exact - ints


def half_power_width(profile, level=0.5 ** 0.5):
    """Width in samples of the main lobe of ``|profile|`` at ``level`` of its peak.

    Crossings are located by linear interpolation; the default level is the
    -3 dB point of an amplitude profile.
    """
    a = np.abs(np.asarray(profile, dtype=complex)).ravel()
    if a.size < 3 or not a.max() > 0:
        raise InvalidArgumentError("profile needs at least 3 samples and some energy")
    p = int(np.argmax(a))
    a = a / a[p]
    lo = p
    while lo > 0 and a[lo - 1] > level:
        lo -= 1
    hi = p
    while hi < a.size - 1 and a[hi + 1] > level:
        hi += 1
    if lo == 0 or hi == a.size - 1:
        raise InvalidArgumentError("main lobe runs into the end of the profile")
    left = lo - 1 + (level - a[lo - 1]) / (a[lo] - a[lo - 1])
    right = hi + (a[hi] - level) / (a[hi] - a[hi + 1])
    return float(right - left)
