"""Image formation with the reference echo and range-varying azimuth correction.

The plain image is the 2-D correlation of the data with the reference echo.
Because the azimuth FM rate scales with ``1/R``, that single kernel only
focuses targets near the reference range. ``focus_corrected`` splits the
range-compressed data into range blocks, estimates each block's normalized
FM rate by dechirping, fits a smooth rate profile over range and compresses
every range cell with its own azimuth chirp.

Rates are normalized: ``K`` is in cycles per pulse squared, the physical
rate in Hz/s divided by ``prf**2``. A target's slow-time phase is then
``pi * K * n**2`` with ``n`` in pulses.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly

from .core import as_complex_matrix, parabolic_peak, xcorr2_same, xcorr_rows
from .errors import InsufficientBlocksError, InvalidArgumentError, NoSignalError, PcmSarError
from .pcm import ReferenceEcho, default_workers

__all__ = [
    "SarImage",
    "FmRateProfile",
    "DefocusPrediction",
    "CONFIDENCE_THRESHOLD",
    "form_image",
    "estimate_fm_rate_block",
    "fit_fm_rate_profile",
    "support_window",
    "whiten_lines",
    "focus_corrected",
    "predict_defocus",
    "multilook",
]

CONFIDENCE_THRESHOLD = 0.2
SUPPORT_LEVEL = 0.1
MAX_LINES = 64
ZOOM_LEVELS = 3
ZOOM_POINTS = 41


@dataclass
class SarImage:
    complex: np.ndarray
    magnitude: np.ndarray
    looks: tuple = (1, 1)

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z)
        return cls(z, np.abs(z), (1, 1))


@dataclass
class FmRateProfile:
    """Per-block normalized FM rates and the polynomial fit over range cells.

    ``fit`` holds ascending polynomial coefficients, ``(a, b)`` for the
    default affine model ``K(m) = a + b*m``.
    """

    centers: np.ndarray
    rates: np.ndarray
    confidence: np.ndarray
    fit: np.ndarray
    accepted: np.ndarray
    residual: float
    threshold: float = CONFIDENCE_THRESHOLD

    def rate_at(self, m):
        return npoly.polyval(np.asarray(m, dtype=float), self.fit)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["center", "rate", "confidence", "accepted", "fitted_rate"])
            for c, r, q, a in zip(self.centers, self.rates, self.confidence, self.accepted):
                w.writerow([repr(float(c)), repr(float(r)), repr(float(q)), int(bool(a)), repr(float(self.rate_at(c)))])


@dataclass(frozen=True)
class DefocusPrediction:
    time_span: float
    resolution_elements: float
    azimuth_bandwidth: float
    residual_rate: float


def _anchored_kernel(R, anchor):
    # zero-pad the kernel so that an anchor outside it lands inside
    ar, ac = (int(a) for a in anchor)
    pad = ((max(0, -ar), max(0, ar - R.shape[0] + 1)), (max(0, -ac), max(0, ac - R.shape[1] + 1)))
    if any(any(p) for p in pad):
        R = np.pad(R, pad)
    return R, (ar + pad[0][0], ac + pad[1][0])


def form_image(Y, ref: ReferenceEcho, workers=None):
    """Correlate ``Y`` with the reference echo; pixels sit at echo centers."""
    Y = as_complex_matrix(Y, "Y")
    R = np.asarray(ref.matrix)
    if R.ndim != 2:
        raise InvalidArgumentError("reference matrix must be 2-D")
    R, anchor = _anchored_kernel(R, ref.anchor)
    if R.shape[0] > Y.shape[0] or R.shape[1] > Y.shape[1]:
        raise InvalidArgumentError(f"reference {R.shape} (anchor included) does not fit data {Y.shape}")
    return SarImage.from_complex(xcorr2_same(Y, R, anchor=anchor, workers=workers))


def _line_peaks(spec_power):
    # peak power per column, parabola-refined on log power against scalloping
    idx = np.argmax(spec_power, axis=0)
    n = spec_power.shape[0]
    cols = np.arange(spec_power.shape[1])
    mid = spec_power[idx, cols]
    lo = spec_power[(idx - 1) % n, cols]
    hi = spec_power[(idx + 1) % n, cols]
    with np.errstate(divide="ignore", invalid="ignore"):
        a, b, c = np.log(lo), np.log(mid), np.log(hi)
        denom = a - 2.0 * b + c
        ok = np.isfinite(denom) & (denom < 0)
        off = np.where(ok, 0.5 * (a - c) / np.where(ok, denom, -1.0), 0.0)
        off = np.clip(off, -0.5, 0.5)
        logpk = np.where(ok, b - 0.25 * (a - c) * off, b)
    return np.exp(logpk)


def _dechirp_scores(lines, ks, n):
    nfft = sfft.next_fast_len(2 * lines.shape[0])
    out = np.empty(ks.size)
    for i, k in enumerate(ks):
        d = lines * np.exp(-1j * np.pi * k * n * n)[:, None]
        p = np.abs(sfft.fft(d, nfft, axis=0)) ** 2
        out[i] = _line_peaks(p).sum()
    return out


def estimate_fm_rate_block(lines, K_range, grid_points=201):
    """Normalized FM rate of the azimuth lines (columns) of ``lines``.

    Every candidate rate dechirps the lines; the score is the summed
    spectral peak power, maximal when the chirps collapse to tones. The
    coarse grid is refined by ``ZOOM_LEVELS`` zoomed grids, then by a
    parabola. Returns ``(K, confidence)``; confidence compares the coarse
    grid's best score with its median.
    """
    lines = np.asarray(lines, dtype=np.complex128)
    if lines.ndim == 1:
        lines = lines[:, None]
    if lines.ndim != 2 or lines.shape[0] < 3 or lines.shape[1] < 1:
        raise InvalidArgumentError("lines must be a 2-D array with at least 3 pulses")
    k_lo, k_hi = map(float, K_range)
    if not (math.isfinite(k_lo) and math.isfinite(k_hi) and k_lo < k_hi):
        raise InvalidArgumentError(f"invalid rate range {K_range!r}")
    if grid_points < 3:
        raise InvalidArgumentError("need at least 3 grid points")
    if not np.all(np.isfinite(lines)):
        raise InvalidArgumentError("lines contain non-finite values")
    energy = np.einsum("ij,ij->j", lines.real, lines.real) + np.einsum("ij,ij->j", lines.imag, lines.imag)
    if not np.any(energy > 0):
        raise NoSignalError("azimuth lines carry no energy")
    lines = lines[:, energy > 0]
    n = np.arange(lines.shape[0]) - 0.5 * (lines.shape[0] - 1)

    ks = np.linspace(k_lo, k_hi, grid_points)
    scores = _dechirp_scores(lines, ks, n)
    best = int(np.argmax(scores))
    top = float(scores[best])
    confidence = float(np.clip((top - np.median(scores)) / top, 0.0, 1.0))
    step = ks[1] - ks[0]
    k_best = ks[best]
    for _ in range(ZOOM_LEVELS):
        half = (ZOOM_POINTS - 1) // 2
        zk = k_best + (2.0 * step / half) * np.arange(-half, half + 1)
        zk = zk[(zk >= k_lo) & (zk <= k_hi)]
        zs = _dechirp_scores(lines, zk, n)
        step = 2.0 * step / half
        i = int(np.argmax(zs))
        k_best = zk[i]
        ks, scores, best = zk, zs, i
    off, _ = parabolic_peak(np.log(scores), best)
    return float(k_best + off * step), confidence


def fit_fm_rate_profile(centers, rates, confidences, threshold=CONFIDENCE_THRESHOLD, order=1):
    """Confidence-weighted polynomial fit of block rates over range cell."""
    centers = np.asarray(centers, dtype=float).ravel()
    rates = np.asarray(rates, dtype=float).ravel()
    conf = np.asarray(confidences, dtype=float).ravel()
    if not centers.size == rates.size == conf.size:
        raise InvalidArgumentError("centers, rates and confidences must have equal length")
    if order not in (1, 2, 3):
        raise InvalidArgumentError(f"fit order {order!r} must be 1, 2 or 3")
    accepted = (conf > threshold) & np.isfinite(rates) & np.isfinite(centers)
    if accepted.sum() < max(2, order + 1):
        raise InsufficientBlocksError(f"{int(accepted.sum())} blocks above confidence {threshold}; need {max(2, order + 1)}")
    x, y, w = centers[accepted], rates[accepted], conf[accepted]
    # Polynomial.fit works on a scaled domain for conditioning; convert() maps back
    coeffs = np.zeros(order + 1)
    c = Polynomial.fit(x, y, order, w=np.sqrt(w)).convert().coef
    coeffs[: c.size] = c
    resid = y - npoly.polyval(x, coeffs)
    rms = float(np.sqrt(np.sum(w * resid**2) / np.sum(w)))
    return FmRateProfile(centers, rates, conf, np.asarray(coeffs, dtype=float), accepted, rms, threshold)


def support_window(u, level=SUPPORT_LEVEL):
    """Contiguous index range ``[start, stop)`` around the peak where ``|u| > level*max``."""
    a = np.abs(np.asarray(u).ravel())
    if not a.size or not a.max() > 0:
        raise NoSignalError("factor has no energy")
    p = int(np.argmax(a))
    above = a > level * a[p]
    lo = p
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = p + 1
    while hi < a.size and above[hi]:
        hi += 1
    return lo, hi


def whiten_lines(lines, smooth=9, floor=1e-2):
    """Flatten the mean azimuth power spectrum of a set of lines.

    Clutter inherits the antenna pattern's Doppler shape, which otherwise
    pulls the dechirp score towards zero rate. Dividing by the smoothed mean
    spectrum turns clutter white while chirps stay chirps.
    """
    n = lines.shape[0]
    nfft = sfft.next_fast_len(2 * n)
    X = sfft.fft(lines, nfft, axis=0)
    psd = np.mean(np.abs(X) ** 2, axis=1)
    k = np.ones(smooth) / smooth
    psd = np.convolve(np.concatenate([psd[-smooth:], psd, psd[:smooth]]), k, mode="same")[smooth:-smooth]
    psd = psd + floor * psd.max()
    return sfft.ifft(X / np.sqrt(psd)[:, None], axis=0)[:n]


def _block_edges(n_cols, m_blk):
    return np.linspace(0, n_cols, m_blk + 1).round().astype(int)


def _azimuth_compress(Yr, rates, anchor, envelope, workers=None):
    # per-column chirp u(n) = env(n) exp(j pi K(m) n^2), n = i - anchor over the support
    N = Yr.shape[0]
    n_support = envelope.size
    nfft = sfft.next_fast_len(N + n_support - 1)
    n = np.arange(n_support) - anchor
    U = envelope[:, None] * np.exp(1j * np.pi * np.outer(n * n, rates))
    spec = sfft.fft(Yr, nfft, axis=0, workers=workers) * np.conj(sfft.fft(U, nfft, axis=0, workers=workers))
    full = sfft.ifft(spec, axis=0, workers=workers)
    return full[(np.arange(N) - anchor) % nfft]


def focus_corrected(Y, ref: ReferenceEcho, M_blk=8, grid_points=201, order=1, threshold=CONFIDENCE_THRESHOLD,
                    fallback=True, workers=None):
    """Range-varying azimuth-corrected image and the fitted rate profile.

    Steps: range-compress with the reference's fast-time factor; estimate a
    normalized FM rate in each of ``M_blk`` range blocks; fit the rate over
    range; azimuth-compress each range cell with its own chirp over the
    reference's azimuth support. The chirp carries the reference's azimuth
    envelope ``|u1|`` so that, at zero residual rate, the result matches
    :func:`form_image`. ``InsufficientBlocksError`` always
    propagates. Any other failure falls back to :func:`form_image` with a
    warning and a ``None`` profile when ``fallback`` is true.
    """
    Y = as_complex_matrix(Y, "Y")
    if not isinstance(M_blk, (int, np.integer)) or M_blk < 2 or M_blk > Y.shape[1]:
        raise InvalidArgumentError(f"M_blk={M_blk!r} must be an integer in [2, {Y.shape[1]}]")
    workers = workers or default_workers()
    try:
        return _focus_corrected(Y, ref, int(M_blk), grid_points, order, threshold, workers)
    except InsufficientBlocksError:
        raise
    except (PcmSarError, np.linalg.LinAlgError) as err:
        if not fallback:
            raise
        warnings.warn(f"azimuth correction failed ({err}); returning the uncorrected image", RuntimeWarning, stacklevel=2)
        return form_image(Y, ref, workers=workers), None


def _focus_corrected(Y, ref, M_blk, grid_points, order, threshold, workers):
    u1 = np.asarray(ref.azimuth_factor)
    v1 = np.asarray(ref.range_factor)
    Yr = xcorr_rows(Y, v1, anchor=ref.anchor[1], workers=workers)

    s0, s1 = support_window(u1)
    n_s = s1 - s0
    if n_s < 3:
        raise NoSignalError(f"azimuth support of {n_s} pulses is too short")
    if n_s > Y.shape[0]:
        raise InvalidArgumentError("azimuth support longer than the data")
    # a chirp of rate K spans |K|*n_s cycles/pulse of Doppler, which cannot exceed 1
    k_bound = 1.0 / n_s
    k_ref, _ = estimate_fm_rate_block(u1[s0:s1], (-k_bound, k_bound), grid_points)
    k_span = 3.0 * max(abs(k_ref), 1e-3 * k_bound)

    edges = _block_edges(Y.shape[1], M_blk)
    centers = 0.5 * (edges[:-1] + edges[1:] - 1)

    def job(b):
        lines = Yr[:, edges[b] : edges[b + 1]]
        e = np.einsum("ij,ij->j", lines.real, lines.real) + np.einsum("ij,ij->j", lines.imag, lines.imag)
        keep = np.sort(np.argsort(-e, kind="stable")[:MAX_LINES])
        try:
            return estimate_fm_rate_block(whiten_lines(lines[:, keep]), (-k_span, k_span), grid_points)
        except NoSignalError:
            return float("nan"), 0.0

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            est = list(pool.map(job, range(M_blk)))
    else:
        est = [job(b) for b in range(M_blk)]
    rates = np.array([r for r, _ in est])
    conf = np.array([c for _, c in est])
    profile = fit_fm_rate_profile(centers, rates, conf, threshold=threshold, order=order)

    cell_rates = profile.rate_at(np.arange(Y.shape[1]))
    # the chirp is centred on the anchor, which may lie outside the support
    anchor = int(ref.anchor[0]) - s0
    lo, hi = min(0, anchor), max(n_s, anchor + 1)
    if hi - lo > Y.shape[0]:
        raise InvalidArgumentError("azimuth reference (anchor included) longer than the data")
    envelope = np.zeros(hi - lo)
    envelope[-lo : n_s - lo] = np.abs(u1[s0:s1]) / np.abs(u1[s0:s1]).max()
    img = _azimuth_compress(Yr, cell_rates, anchor - lo, envelope, workers=workers)
    return SarImage.from_complex(img), profile


def predict_defocus(lam, v, la, dr):
    """Azimuth defocus of a target ``dr`` metres off the reference range.

    ``resolution_elements`` is how many resolution cells the uncorrected
    response spreads over; 1 means fully focused.
    """
    for name, val in (("lam", lam), ("v", v), ("la", la)):
        if not (math.isfinite(val) and val > 0):
            raise InvalidArgumentError(f"{name} must be positive, got {val!r}")
    dr = abs(float(dr))
    x = lam / (2.0 * la)
    sinc = math.sin(x) / x
    b_a = 2.0 * v / la * sinc
    if dr == 0:
        k_res = math.inf
        span = 1.0 / b_a
    else:
        k_res = 2.0 * v * v / (lam * dr)
        span = b_a / k_res + 1.0 / b_a
    elements = 2.0 * lam * dr / la**2 * sinc**2 + 1.0
    return DefocusPrediction(span, elements, b_a, k_res)


def multilook(img: SarImage, looks_az=1, looks_rg=1):
    """Box-average intensity over ``looks_az x looks_rg`` cells, then take the root."""
    la, lr = int(looks_az), int(looks_rg)
    if la < 1 or lr < 1:
        raise InvalidArgumentError("look factors must be >= 1")
    mag = np.asarray(img.magnitude, dtype=float)
    if la > mag.shape[0] or lr > mag.shape[1]:
        raise InvalidArgumentError(f"looks {la}x{lr} exceed image {mag.shape}")
    if la == 1 and lr == 1:
        return SarImage(img.complex, mag.copy(), tuple(img.looks))
    r, c = mag.shape[0] // la, mag.shape[1] // lr
    inten = (mag[: r * la, : c * lr] ** 2).reshape(r, la, c, lr).mean(axis=(1, 3))
    looks = (img.looks[0] * la, img.looks[1] * lr)
    return SarImage(img.complex, np.sqrt(inten), looks)
