"""Ground-truth raw-data synthesis and an exact time-domain focusing oracle.

This is the only module that knows system parameters. Everything downstream
(``pcm``, ``pri``, ``azfocus``) works from data alone.

Conventions
-----------
* Pulse ``i`` is transmitted at slow time ``eta = i / prf``; a scatterer at
  along-track position ``x`` reaches closest approach at pulse ``x*prf/v``.
* Column ``k`` samples fast time ``tau = tau_start + k / fs``. The chirp is
  centered on its delay, so a scatterer at closest range ``R`` has its echo
  center in column ``(2R/c - tau_start) * fs``.
* Pixel ``(n, k)`` of any image refers to a scatterer whose echo center sits
  at pulse ``n`` and column ``k``.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from . import _kernels
from .core import fractional_shift, row_starts
from .errors import InvalidArgumentError

__all__ = [
    "Geometry",
    "Grid",
    "PointTarget",
    "ClutterField",
    "SimulatedScene",
    "desk_geometry",
    "centered_grid",
    "range_history",
    "simulate_point_echo",
    "simulate_targets",
    "simulate_clutter",
    "simulate_noise",
    "simulate_scene",
    "flatten_to_stream",
    "exact_focus_oracle",
    "step_profile",
    "read_scene_config",
    "scene_ground_truth",
]

SPEED_OF_LIGHT = 299_792_458.0

# sinc(x)**4 = 1/2: half-power point of the two-way amplitude pattern sinc(x)**2
_HALF_POWER_ARG = brentq(lambda x: np.sinc(x) ** 4 - 0.5, 0.1, 0.5)


@dataclass(frozen=True)
class Geometry:
    """Broadside stripmap system description (SI units).

    ``kr * tp`` is the chirp bandwidth and must stay below ``fs``.
    """

    v: float
    lam: float
    r0_scene: float
    fs: float
    prf: float
    kr: float
    tp: float
    la: float
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("v", "lam", "r0_scene", "fs", "prf", "kr", "tp", "la", "c"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InvalidArgumentError(f"Geometry.{name} must be positive, got {val!r}")
        if self.kr * self.tp >= self.fs:
            raise InvalidArgumentError("chirp bandwidth kr*tp must be below fs")
        if self.lam >= 0.01 * self.r0_scene:
            raise InvalidArgumentError("wavelength must be much smaller than the slant range")

    @property
    def beam(self):
        """Scale of the pattern ``sinc(beam*sin(theta))**2``: two-way -3 dB width = lam/La."""
        return 2.0 * _HALF_POWER_ARG * self.la / self.lam

    @property
    def bandwidth(self):
        return self.kr * self.tp

    def half_aperture(self, r):
        """Along-track half-length over which a scatterer at range ``r`` is lit."""
        return r / math.sqrt(self.beam**2 - 1.0)

    def aperture_pulses(self, r):
        return 2.0 * self.half_aperture(r) / self.v * self.prf

    def azimuth_fm_rate(self, r):
        return -2.0 * self.v**2 / (self.lam * np.asarray(r, dtype=float))

    def normalized_fm_rate(self, r):
        """Azimuth FM rate in cycles/pulse**2 (rate divided by prf**2)."""
        return self.azimuth_fm_rate(r) / self.prf**2


def desk_geometry(**overrides):
    """C-band stripmap parameters sized for desk-scale tests.

    Aperture about 400 pulses, chirp 120 samples, range spacing 2.5 m, and the
    PRF just covers the null-to-null Doppler band so nothing aliases.
    """
    params = dict(v=250.0, lam=0.0566, r0_scene=35_000.0, fs=60e6, prf=160.0, kr=2.5e13, tp=2e-6, la=10.0)
    params.update(overrides)
    return Geometry(**params)


@dataclass(frozen=True)
class Grid:
    n_pulses: int
    n_samples: int
    tau_start: float

    def eta(self, prf):
        return np.arange(self.n_pulses) / prf

    def tau(self, fs):
        return self.tau_start + np.arange(self.n_samples) / fs

    def column_of(self, geom, r):
        return (2.0 * r / geom.c - self.tau_start) * geom.fs

    def range_of(self, geom, col):
        return 0.5 * geom.c * (self.tau_start + np.asarray(col, dtype=float) / geom.fs)

    @staticmethod
    def pulse_of(geom, x):
        return x * geom.prf / geom.v

    @staticmethod
    def x_of(geom, pulse):
        return np.asarray(pulse, dtype=float) * geom.v / geom.prf


def centered_grid(geom, n_pulses, n_samples):
    """Grid whose middle column sits at ``geom.r0_scene``."""
    return Grid(int(n_pulses), int(n_samples), 2.0 * geom.r0_scene / geom.c - (n_samples // 2) / geom.fs)


@dataclass(frozen=True)
class PointTarget:
    x: float
    r: float
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidArgumentError("PointTarget.r must be positive")

    @classmethod
    def at_pixel(cls, geom, grid, pulse, col, amplitude=1.0):
        return cls(float(Grid.x_of(geom, pulse)), float(grid.range_of(geom, col)), amplitude)


@dataclass
class ClutterField:
    """Distributed clutter: one random-phase scatterer per grid cell.

    ``power_profile`` is the local mean clutter power of the raw data. It may
    be a scalar or any 2-D array; arrays are stretched over the grid by
    nearest-neighbour lookup, so ``[[10, 1]]`` means a left/right step.
    """

    power_profile: object = 1.0

    def profile_on(self, shape):
        p = np.asarray(self.power_profile, dtype=float)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidArgumentError("power_profile must be finite and non-negative")
        if p.ndim == 0:
            return np.full(shape, float(p))
        if p.ndim != 2:
            raise InvalidArgumentError("power_profile must be scalar or 2-D")
        ri = (np.arange(shape[0]) * p.shape[0]) // shape[0]
        ci = (np.arange(shape[1]) * p.shape[1]) // shape[1]
        return p[np.ix_(ri, ci)]


def step_profile(left, right, split=0.5):
    """Two-region profile, ``left`` power on the near-range side of ``split``."""
    n = 1000
    k = int(round(split * n))
    row = np.where(np.arange(n) < k, float(left), float(right))
    return row[None, :]


@dataclass
class SimulatedScene:
    geometry: Geometry
    grid: Grid
    targets: list = field(default_factory=list)
    clutter: ClutterField | None = None
    noise_power: float = 0.0
    seed: int = 0


def range_history(geom, target, eta):
    """Exact slant range of ``target`` at slow times ``eta``."""
    along = geom.v * np.asarray(eta, dtype=float) - target.x
    return np.sqrt(along * along + target.r * target.r)


def _support(geom, grid, target):
    """Inclusive pulse and column bounds of a target's echo."""
    lh = geom.half_aperture(target.r)
    i0 = math.ceil((target.x - lh) / geom.v * geom.prf - 1e-9)
    i1 = math.floor((target.x + lh) / geom.v * geom.prf + 1e-9)
    r_far = math.hypot(lh, target.r)
    k0 = math.ceil((2.0 * target.r / geom.c - 0.5 * geom.tp - grid.tau_start) * geom.fs - 1e-9)
    k1 = math.floor((2.0 * r_far / geom.c + 0.5 * geom.tp - grid.tau_start) * geom.fs + 1e-9)
    return i0, i1, k0, k1


def _echo(geom, eta, tau, x0, r0, amp):
    return _kernels.echo_patch(
        np.ascontiguousarray(eta, dtype=float),
        np.ascontiguousarray(tau, dtype=float),
        float(x0), float(r0), complex(amp), geom.v, geom.c, geom.lam, geom.kr, geom.tp, geom.beam,
    )


def simulate_point_echo(geom, target, grid):
    """Echo of one point target on ``grid`` with the exact hyperbolic range history."""
    i0, i1, k0, k1 = _support(geom, grid, target)
    if i0 < 0 or k0 < 0 or i1 >= grid.n_pulses or k1 >= grid.n_samples:
        raise InvalidArgumentError(
            f"target support pulses [{i0}, {i1}] x columns [{k0}, {k1}] "
            f"exceeds grid {grid.n_pulses} x {grid.n_samples}"
        )
    out = np.zeros((grid.n_pulses, grid.n_samples), dtype=np.complex128)
    eta = grid.eta(geom.prf)[i0 : i1 + 1]
    tau = grid.tau(geom.fs)[k0 : k1 + 1]
    out[i0 : i1 + 1, k0 : k1 + 1] = _echo(geom, eta, tau, target.x, target.r, target.amplitude)
    return out


def simulate_targets(scene):
    out = np.zeros((scene.grid.n_pulses, scene.grid.n_samples), dtype=np.complex128)
    for t in scene.targets:
        out += simulate_point_echo(scene.geometry, t, scene.grid)
    return out


def _rng(seed, stream, row):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, row])


def _clutter_strip_width(geom, r):
    # rate mismatch inside half a strip keeps the quadratic phase error at the
    # aperture edge below pi/8
    th = geom.half_aperture(r) / geom.v
    half_m = r / (8.0 * abs(float(geom.azimuth_fm_rate(r))) * th * th)
    half_cols = half_m * 2.0 * geom.fs / geom.c
    return int(np.clip(2 * math.floor(half_cols) + 1, 1, 129))


def simulate_clutter(scene):
    """Clutter echo: every grid cell holds a unit-modulus random-phase scatterer.

    Scatterers just outside the recorded window are included so the clutter
    stays stationary up to the data edges. Echoes are synthesized strip by
    strip in range: inside a strip every cell uses the exact echo computed at
    the strip's center range, shifted to the cell; strips are narrow enough
    that the neglected FM-rate change costs under pi/8 of phase.
    """
    geom, grid = scene.geometry, scene.grid
    if scene.clutter is None:
        return np.zeros((grid.n_pulses, grid.n_samples), dtype=np.complex128)
    r_far = float(grid.range_of(geom, grid.n_samples))
    ha = int(math.ceil(geom.half_aperture(r_far) / geom.v * geom.prf)) + 1
    rcm = math.hypot(geom.half_aperture(r_far), r_far) - r_far
    hc = int(math.ceil((0.5 * geom.tp + 2.0 * rcm / geom.c) * geom.fs)) + 1
    rows_p, cols_p = grid.n_pulses + 2 * ha, grid.n_samples + 2 * hc

    profile = np.pad(scene.clutter.profile_on((grid.n_pulses, grid.n_samples)), ((ha, ha), (hc, hc)), mode="edge")
    phases = np.empty((rows_p, cols_p))
    for i in range(rows_p):
        phases[i] = _rng(scene.seed, 1, i).random(cols_p)
    cells = np.sqrt(profile) * np.exp(2j * np.pi * phases)

    acc = np.zeros((rows_p + 2 * ha, cols_p + 2 * hc), dtype=np.complex128)
    eta_k = np.arange(-ha, ha + 1) / geom.prf
    j = 0
    while j < cols_p:
        r_mid = float(grid.range_of(geom, j - hc))
        width = _clutter_strip_width(geom, r_mid)
        j1 = min(cols_p, j + width)
        jc = (j + j1 - 1) // 2
        rc = float(grid.range_of(geom, jc - hc))
        tau_k = 2.0 * rc / geom.c + np.arange(-hc, hc + 1) / geom.fs
        kern = _echo(geom, eta_k, tau_k, 0.0, rc, 1.0)
        kern /= math.sqrt(np.vdot(kern, kern).real)
        # kernel is centered at (ha, hc); cell (i, jj) lands at (i + ha, jj + hc)
        # shifted by the offset of jj from the strip center
        strip = cells[:, j:j1]
        conv = fftconvolve(strip, kern)
        acc[:, j : j1 + 2 * hc] += conv
        j = j1
    return acc[2 * ha : 2 * ha + grid.n_pulses, 2 * hc : 2 * hc + grid.n_samples].copy()


def simulate_noise(scene):
    grid = scene.grid
    out = np.zeros((grid.n_pulses, grid.n_samples), dtype=np.complex128)
    if scene.noise_power <= 0:
        return out
    s = math.sqrt(scene.noise_power / 2.0)
    for i in range(grid.n_pulses):
        z = _rng(scene.seed, 2, i).standard_normal(2 * grid.n_samples)
        out[i] = s * (z[: grid.n_samples] + 1j * z[grid.n_samples :])
    return out


def simulate_scene(scene):
    """Targets + clutter + circular white Gaussian noise, all seeded by ``scene.seed``."""
    return simulate_targets(scene) + simulate_clutter(scene) + simulate_noise(scene)


def flatten_to_stream(Y, P):
    """Lay the rows of ``Y`` out as a 1-D receiver stream with sample PRI ``P``.

    Row ``l`` starts at continuous sample time ``l*P``; the fractional part of
    that start is realized by a circular FFT delay inside a slot of
    ``floor(P)`` samples, and dead time between pulses is zero. The stream is
    ``ceil((rows-1)*P) + cols`` samples long.
    """
    Y = np.asarray(Y, dtype=np.complex128)
    rows, cols = Y.shape
    if not (math.isfinite(P) and P >= cols):
        raise InvalidArgumentError(f"P={P} must be >= row length {cols} (pulses would overlap)")
    p_int = int(math.floor(P))
    starts, fracs = row_starts(rows, P)
    slots = np.zeros((rows, p_int), dtype=np.complex128)
    slots[:, :cols] = Y
    if np.any(fracs != 0):
        slots = fractional_shift(slots, fracs)
    length = int(math.ceil((rows - 1) * float(P))) + cols
    stream = np.zeros(max(length, int(starts[-1]) + p_int), dtype=np.complex128)
    for l in range(rows):
        stream[starts[l] : starts[l] + p_int] = slots[l]
    return stream[:length]


def exact_focus_oracle(Y, geom, grid, rows, cols):
    """Time-domain matched filter with the true parameters on a pixel window.

    ``rows``/``cols`` are pulse and column indices (array-like) of the pixels
    to evaluate. Each pixel's value is ``|<Y, E>| / <E, E>`` where ``E`` is
    the exact echo of a unit scatterer at that pixel, clipped to the data, so
    an isolated unit target peaks at 1.
    """
    Y = np.ascontiguousarray(Y, dtype=np.complex128)
    rows = np.atleast_1d(np.asarray(rows, dtype=float))
    cols = np.atleast_1d(np.asarray(cols, dtype=float))
    x_pix = Grid.x_of(geom, rows)
    r_pix = grid.range_of(geom, cols)
    shape = (rows.size, cols.size)
    row_lo = np.empty(shape, dtype=np.int64)
    row_hi = np.empty(shape, dtype=np.int64)
    col_lo = np.empty(shape, dtype=np.int64)
    col_hi = np.empty(shape, dtype=np.int64)
    for a in range(rows.size):
        for b in range(cols.size):
            i0, i1, k0, k1 = _support(geom, grid, PointTarget(x_pix[a], r_pix[b]))
            row_lo[a, b], row_hi[a, b] = max(i0, 0), min(i1 + 1, grid.n_pulses)
            col_lo[a, b], col_hi[a, b] = max(k0, 0), min(k1 + 1, grid.n_samples)
    return _kernels.oracle_window(
        Y, grid.eta(geom.prf), grid.tau(geom.fs), x_pix, r_pix,
        geom.v, geom.c, geom.lam, geom.kr, geom.tp, geom.beam, row_lo, row_hi, col_lo, col_hi,
    )


def read_scene_config(path):
    """Build a scene from an INI file; returns ``(scene, stream_pri or None)``.

    Sections: ``[geometry]`` overrides :func:`desk_geometry` keys;
    ``[grid]`` has ``pulses`` and ``samples``; ``[scene]`` has ``seed``,
    ``noise_power`` and either ``clutter_power`` or ``clutter_left``,
    ``clutter_right`` and ``clutter_split``; each ``[target NAME]`` has
    ``pulse``, ``col`` and optional ``amplitude``/``phase_deg``; ``[stream]``
    with ``pri`` asks for a flattened 1-D stream.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    try:
        geom = desk_geometry(**{k: float(v) for k, v in cp["geometry"].items()} if cp.has_section("geometry") else {})
        grid = centered_grid(geom, cp.getint("grid", "pulses"), cp.getint("grid", "samples"))
        sc = cp["scene"] if cp.has_section("scene") else {}
        clutter = None
        if "clutter_left" in sc:
            clutter = ClutterField(step_profile(float(sc["clutter_left"]), float(sc["clutter_right"]),
                                                float(sc.get("clutter_split", 0.5))))
        elif float(sc.get("clutter_power", 0.0)) > 0:
            clutter = ClutterField(float(sc["clutter_power"]))
        targets = []
        for name in cp.sections():
            if not name.startswith("target"):
                continue
            t = cp[name]
            amp = float(t.get("amplitude", 1.0)) * np.exp(1j * math.radians(float(t.get("phase_deg", 0.0))))
            targets.append(PointTarget.at_pixel(geom, grid, float(t["pulse"]), float(t["col"]), complex(amp)))
        scene = SimulatedScene(geom, grid, targets, clutter, float(sc.get("noise_power", 0.0)), int(sc.get("seed", 0)))
        pri = cp.getfloat("stream", "pri") if cp.has_option("stream", "pri") else None
    except (KeyError, ValueError, configparser.Error) as err:
        raise InvalidArgumentError(f"{path}: bad scene description ({err})") from None
    return scene, pri


def scene_ground_truth(scene, pri=None):
    """JSON-ready description of a scene for a raw file's quarantined header."""
    g, grid = scene.geometry, scene.grid
    truth = {
        "geometry": asdict(g),
        "grid": asdict(grid),
        "targets": [
            {
                "pulse": float(Grid.pulse_of(g, t.x)),
                "col": float(grid.column_of(g, t.r)),
                "amplitude": [complex(t.amplitude).real, complex(t.amplitude).imag],
            }
            for t in scene.targets
        ],
        "noise_power": scene.noise_power,
        "seed": scene.seed,
    }
    if pri is not None:
        truth["pri"] = float(pri)
    return truth
