"""Scene builders and measurements shared by the test modules."""
import numpy as np

from pcmsar import sim
from pcmsar.core import half_power_width


def complex_normal(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def local_peak(mag, pulse, col, radius=5):
    """Arg-max of ``mag`` inside a square window centred on (pulse, col)."""
    r0, c0 = max(0, int(round(pulse)) - radius), max(0, int(round(col)) - radius)
    win = mag[r0 : int(round(pulse)) + radius + 1, c0 : int(round(col)) + radius + 1]
    i, j = np.unravel_index(np.argmax(win), win.shape)
    return r0 + int(i), c0 + int(j)


def azimuth_width(mag, pulse, col, radius=5):
    """-3 dB width (pulses) of the azimuth cut through a target's local peak."""
    p, c = local_peak(mag, pulse, col, radius)
    return half_power_width(mag[:, c])


def oracle_peak(Y, geom, grid, pulse, col, radius=3):
    rows = np.arange(int(pulse) - radius, int(pulse) + radius + 1)
    cols = np.arange(int(col) - radius, int(col) + radius + 1)
    o = sim.exact_focus_oracle(Y, geom, grid, rows, cols)
    i, j = np.unravel_index(np.argmax(o), o.shape)
    return int(rows[i]), int(cols[j])


def range_offset_scene(fractions, seed, pulses=1536, samples=2048, clutter=0.01, noise=0.01, ref_amp=4.0):
    """Reference target mid-swath plus one target per range offset (fraction of R0).

    Off-reference targets alternate between early and late pulses so no
    500-pulse window around the reference holds another target's aperture.
    """
    g = sim.desk_geometry()
    grid = sim.centered_grid(g, pulses, samples)
    spacing = g.c / (2.0 * g.fs)
    mid = samples // 2
    placed = [(pulses // 2, mid, ref_amp)]
    for i, f in enumerate(fractions):
        col = int(round(mid + f * g.r0_scene / spacing))
        placed.append((250 if i % 2 == 0 else pulses - 236, col, 1.0))
    targets = [sim.PointTarget.at_pixel(g, grid, p, c, a) for p, c, a in placed]
    scene = sim.SimulatedScene(g, grid, targets, sim.ClutterField(clutter), noise, seed)
    return scene, [(p, c) for p, c, _ in placed]


def direct_xcorr2(Y, R, anchor):
    """Brute-force double sum over every lag."""
    out = np.zeros(Y.shape, dtype=complex)
    ar, ac = anchor
    for n in range(Y.shape[0]):
        for k in range(Y.shape[1]):
            acc = 0j
            for i in range(Y.shape[0]):
                for j in range(Y.shape[1]):
                    a, b = i - n + ar, j - k + ac
                    if 0 <= a < R.shape[0] and 0 <= b < R.shape[1]:
                        acc += Y[i, j] * np.conj(R[a, b])
            out[n, k] = acc
    return out


def ers_like_stream(P, pulses=80, samples=4096, seed=1, amp=1.0, clutter=0.01, noise=0.01):
    """Raw data of one target plus clutter, laid out with sample PRI ``P``."""
    g = sim.desk_geometry()
    grid = sim.centered_grid(g, pulses, samples)
    t = sim.PointTarget.at_pixel(g, grid, pulses // 2, samples // 2, amp)
    scene = sim.SimulatedScene(g, grid, [], sim.ClutterField(clutter), noise, seed)
    # the target's aperture is longer than the stream, so place its echo directly
    lh = g.half_aperture(t.r)
    ext = sim.Grid(pulses + 2 * int(lh / g.v * g.prf) + 4, samples, grid.tau_start)
    off = int(lh / g.v * g.prf) + 2
    echo = sim.simulate_point_echo(g, sim.PointTarget(t.x + off * g.v / g.prf, t.r, amp), ext)[off : off + pulses]
    Y = sim.simulate_scene(scene) + echo
    return sim.flatten_to_stream(Y, P), Y, echo
