"""Command-line front end and end-to-end pipeline.

Subcommands::

    pcmsar simulate scene.ini raw.cf32
    pcmsar estimate-pri stream.cf32 --json trace.json --csv curves.csv
    pcmsar focus raw.cf32 out/
    pcmsar spectrum raw.cf32 spectrum.csv --top-k 100
    pcmsar pipeline raw.cf32 out/

Exit codes: 0 success, 2 bad input, 3 estimation failure, 4 I/O error.
``PCMSAR_WORKERS`` sets the worker count for block-parallel stages.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import azfocus, io, pcm, pri, sim
from .core import half_power_width, xcorr2_same
from .errors import (
    ConvergenceError,
    CorruptFileError,
    DegenerateBlockError,
    InsufficientBlocksError,
    InsufficientDataError,
    InvalidArgumentError,
    NoPeriodicityError,
    NoReferenceError,
    NoSignalError,
    UnsupportedFormatError,
)
from .lowrank import eigenspectrum

__all__ = ["PipelineConfig", "run_pipeline", "suggest_looks", "parse_schedule", "main", "EXIT_OK", "EXIT_INPUT",
           "EXIT_ESTIMATION", "EXIT_IO"]

log = logging.getLogger("pcmsar")

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_IO = 0, 2, 3, 4

_INPUT_ERRORS = (InvalidArgumentError, CorruptFileError, UnsupportedFormatError, InsufficientDataError)
_ESTIMATION_ERRORS = (NoPeriodicityError, NoReferenceError, InsufficientBlocksError, NoSignalError,
                      ConvergenceError, DegenerateBlockError)


class StageError(Exception):
    """Wraps a failure with the pipeline stage it came from."""

    def __init__(self, stage, err):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage
        self.cause = err


@dataclass
class PipelineConfig:
    block_rows: int = 500
    block_cols: int = 500
    stride_rows: int | None = None
    stride_cols: int | None = None
    cover_edges: bool = True
    D: int = 1
    normalize: bool = True
    schedule: tuple = pri.DEFAULT_SCHEDULE
    subset: int = pri.DEFAULT_SUBSET
    p_min: float | None = None
    p_max: float | None = None
    m_blk: int = 8
    fit_order: int = 1
    looks: tuple | None = (1, 1)  # None picks looks from the reference
    dynamic_range_db: float = 40.0
    workers: int | None = None

    def __post_init__(self):
        if self.dynamic_range_db <= 0:
            raise InvalidArgumentError("dynamic range must be positive")
        if self.looks is not None and min(self.looks) < 1:
            raise InvalidArgumentError("looks must be >= 1")
        if self.m_blk < 2:
            raise InvalidArgumentError("m_blk must be >= 2")
        if self.D < 1:
            raise InvalidArgumentError("D must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")

    @property
    def block_grid(self):
        return pcm.BlockGrid(self.block_rows, self.block_cols, self.stride_rows, self.stride_cols, self.cover_edges)


def parse_schedule(text):
    """``"3:0.1,0.3:0.01"`` -> ``((3.0, 0.1), (0.3, 0.01))``."""
    try:
        stages = tuple(tuple(float(x) for x in part.split(":")) for part in text.split(","))
    except ValueError:
        raise InvalidArgumentError(f"bad schedule {text!r}") from None
    if not stages or any(len(s) != 2 for s in stages):
        raise InvalidArgumentError(f"bad schedule {text!r}; expected W:dP pairs")
    return stages


def suggest_looks(ref, max_looks=8):
    """Look factors that make the reference's focused response square in pixels.

    The reference correlated with itself is the point response of the
    uncorrected image; its -3 dB widths along each axis give the resolution
    in pixels, and the finer axis is averaged down to match the coarser one.
    """
    R = np.asarray(ref.matrix)
    auto = np.abs(xcorr2_same(R, R))
    r, c = np.unravel_index(np.argmax(auto), auto.shape)
    try:
        w_az = half_power_width(auto[:, c])
        w_rg = half_power_width(auto[r, :])
    except InvalidArgumentError:
        return (1, 1)
    if w_az >= w_rg:
        return (1, int(min(max_looks, max(1, round(w_az / w_rg)))))
    return (int(min(max_looks, max(1, round(w_rg / w_az)))), 1)


def _stage(name, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        out = fn(*args, **kwargs)
    except Exception as err:  # re-raised with its stage tag
        raise StageError(name, err) from err
    log.info("%s done in %.2f s", name, time.perf_counter() - t0)
    return out


def run_pipeline(dataset, config=None, out_dir=".", pri_hint=None):
    """Blind end-to-end processing of a :class:`~pcmsar.io.RawDataset`.

    A 1-D payload goes through coarse and fine PRI estimation (unless
    ``pri_hint`` fixes the PRI) and is mapped to 2-D; then the reference echo
    is estimated and both images are formed. Returns a dict of output paths.
    The dataset's ground truth is never consulted.
    """
    config = config or PipelineConfig()
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    payload = np.asarray(dataset.payload)
    log.info("input %s, config %s", payload.shape, asdict(config))

    if payload.ndim == 1:
        if pri_hint is None:
            p0 = _stage("pri", pri.coarse_pri, payload, config.p_min, config.p_max)
            n = min(int(config.subset), payload.size)
            est = _stage("pri", pri.fine_pri, payload[:n], p0, config.schedule, workers=config.workers)
            paths["pri_trace"] = os.path.join(out_dir, "pri_trace.json")
            paths["pri_curves"] = os.path.join(out_dir, "pri_curves.csv")
            est.to_json(paths["pri_trace"])
            est.write_curves_csv(paths["pri_curves"])
            P = est.final
            log.info("pri coarse %.4f final %.4f", est.coarse, P)
        else:
            P = float(pri_hint)
        Y = _stage("map", pri.map_1d_to_2d, payload, P)
    else:
        Y = payload
    Y = np.asarray(Y, dtype=np.complex128)

    ref, scores = _stage("pcm", pcm.estimate_reference_echo, Y, config.block_grid, config.D, config.normalize,
                         workers=config.workers)
    paths["scores"] = os.path.join(out_dir, "block_scores.csv")
    pcm.write_score_csv(scores, paths["scores"])
    log.info("reference block %s origin %s g=%.6f anchor %s", ref.source.index, ref.origin, ref.source.g, ref.anchor)

    looks = config.looks or suggest_looks(ref)
    img = _stage("focus", azfocus.form_image, Y, ref, workers=config.workers)
    paths["image"] = os.path.join(out_dir, "image_uncorrected.pgm")
    io.write_image(azfocus.multilook(img, *looks), paths["image"], config.dynamic_range_db)

    cimg, profile = _stage("correct", azfocus.focus_corrected, Y, ref, config.m_blk, order=config.fit_order,
                           workers=config.workers)
    paths["image_corrected"] = os.path.join(out_dir, "image_corrected.pgm")
    io.write_image(azfocus.multilook(cimg, *looks), paths["image_corrected"], config.dynamic_range_db)
    if profile is not None:
        paths["fm_profile"] = os.path.join(out_dir, "fm_profile.csv")
        profile.write_csv(paths["fm_profile"])
        log.info("fm-rate fit %s over %d accepted blocks", profile.fit.tolist(), int(profile.accepted.sum()))
    paths["looks"] = looks
    return paths


def _add_pipeline_flags(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--block", type=int, nargs=2, default=(500, 500), metavar=("ROWS", "COLS"))
    g.add_argument("--stride", type=int, nargs=2, default=None, metavar=("ROWS", "COLS"))
    g.add_argument("--no-cover-edges", action="store_true", help="drop partial edge blocks instead of re-anchoring them")
    g.add_argument("-D", type=int, default=1, help="principal-component rank")
    g.add_argument("--no-normalize", action="store_true")
    g.add_argument("--schedule", type=parse_schedule, default=pri.DEFAULT_SCHEDULE, help="W:dP,W:dP,...")
    g.add_argument("--subset", type=int, default=pri.DEFAULT_SUBSET)
    g.add_argument("--p-min", type=float, default=None)
    g.add_argument("--p-max", type=float, default=None)
    g.add_argument("--pri", type=float, default=None, help="skip PRI estimation and use this sample PRI")
    g.add_argument("--m-blk", type=int, default=8)
    g.add_argument("--fit-order", type=int, default=1)
    g.add_argument("--looks", default="1,1", help="AZ,RG or 'auto'")
    g.add_argument("--dynamic-range", type=float, default=40.0)
    g.add_argument("--workers", type=int, default=None, help="worker threads (default: $PCMSAR_WORKERS or 1)")


def _config_from(args):
    looks = None if args.looks == "auto" else tuple(int(x) for x in args.looks.split(","))
    stride = args.stride or (None, None)
    return PipelineConfig(
        block_rows=args.block[0], block_cols=args.block[1], stride_rows=stride[0], stride_cols=stride[1],
        cover_edges=not args.no_cover_edges, D=args.D, normalize=not args.no_normalize, schedule=args.schedule,
        subset=args.subset, p_min=args.p_min, p_max=args.p_max, m_blk=args.m_blk, fit_order=args.fit_order,
        looks=looks, dynamic_range_db=args.dynamic_range, workers=args.workers,
    )


def _cmd_simulate(args):
    scene, stream_pri = sim.read_scene_config(args.config)
    if args.pri is not None:
        stream_pri = args.pri
    Y = sim.simulate_scene(scene)
    out = Y if stream_pri is None else sim.flatten_to_stream(Y, stream_pri)
    io.write_raw(args.output, out.astype(np.complex64), ground_truth=sim.scene_ground_truth(scene, stream_pri))
    print(f"wrote {args.output} {out.shape}")


def _cmd_estimate_pri(args):
    ds = io.read_raw(args.input, args.header)
    if not ds.is_stream:
        raise InvalidArgumentError("estimate-pri needs a 1-D stream")
    est = pri.estimate_pri(ds.payload, args.p_min, args.p_max, args.schedule, args.subset)
    text = est.to_json(args.json)
    if args.csv:
        est.write_curves_csv(args.csv)
    print(text)


def _cmd_focus(args):
    ds = io.read_raw(args.input, args.header)
    cfg = _config_from(args)
    payload = ds.payload
    if ds.is_stream:
        if args.pri is None:
            raise InvalidArgumentError("focus on a 1-D stream needs --pri (or use the pipeline command)")
        payload = pri.map_1d_to_2d(payload, args.pri)
    Y = np.asarray(payload, dtype=np.complex128)
    os.makedirs(args.out_dir, exist_ok=True)
    ref, scores = pcm.estimate_reference_echo(Y, cfg.block_grid, cfg.D, cfg.normalize, workers=cfg.workers)
    pcm.write_score_csv(scores, os.path.join(args.out_dir, "block_scores.csv"))
    looks = cfg.looks or suggest_looks(ref)
    img = azfocus.form_image(Y, ref, workers=cfg.workers)
    io.write_image(azfocus.multilook(img, *looks), os.path.join(args.out_dir, "image_uncorrected.pgm"),
                   cfg.dynamic_range_db)
    if not args.no_correct:
        cimg, profile = azfocus.focus_corrected(Y, ref, cfg.m_blk, order=cfg.fit_order, workers=cfg.workers)
        io.write_image(azfocus.multilook(cimg, *looks), os.path.join(args.out_dir, "image_corrected.pgm"),
                       cfg.dynamic_range_db)
        if profile is not None:
            profile.write_csv(os.path.join(args.out_dir, "fm_profile.csv"))
    print(f"reference block {ref.source.index} g={ref.source.g:.6f}")


def _cmd_spectrum(args):
    ds = io.read_raw(args.input, args.header)
    Y = np.asarray(ds.payload, dtype=np.complex128)
    if Y.ndim != 2:
        raise InvalidArgumentError("spectrum needs 2-D data")
    if args.window:
        r0, c0, nr, nc = args.window
        Y = Y[r0 : r0 + nr, c0 : c0 + nc]
    k = min(args.top_k, min(Y.shape))
    vals = eigenspectrum(Y, k)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "eigenvalue", "normalized"])
        top = vals[0] if vals[0] > 0 else 1.0
        for i, v in enumerate(vals, start=1):
            w.writerow([i, repr(float(v)), repr(float(v / top))])
    print(f"wrote {k} eigenvalues to {args.output}")


def _cmd_pipeline(args):
    ds = io.read_raw(args.input, args.header)
    cfg = _config_from(args)
    os.makedirs(args.out_dir, exist_ok=True)
    handler = logging.FileHandler(os.path.join(args.out_dir, "pipeline.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        paths = run_pipeline(ds, cfg, args.out_dir, pri_hint=args.pri)
    finally:
        log.removeHandler(handler)
        handler.close()
    for k, v in paths.items():
        print(f"{k}: {v}")


def build_parser():
    ap = argparse.ArgumentParser(prog="pcmsar", description="Blind SAR image formation from raw echoes.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize raw data from a scene INI file")
    p.add_argument("config")
    p.add_argument("output")
    p.add_argument("--pri", type=float, default=None, help="flatten to a 1-D stream with this sample PRI")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate-pri", help="coarse and fine sample-PRI estimation of a 1-D stream")
    p.add_argument("input")
    p.add_argument("--header", default=None)
    p.add_argument("--json", default=None, help="write the estimate trace here")
    p.add_argument("--csv", default=None, help="write per-stage objective curves here")
    p.add_argument("--schedule", type=parse_schedule, default=pri.DEFAULT_SCHEDULE)
    p.add_argument("--subset", type=int, default=pri.DEFAULT_SUBSET)
    p.add_argument("--p-min", type=float, default=None)
    p.add_argument("--p-max", type=float, default=None)
    p.set_defaults(func=_cmd_estimate_pri)

    p = sub.add_parser("focus", help="reference estimation and image formation of 2-D data")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--header", default=None)
    p.add_argument("--no-correct", action="store_true", help="skip the azimuth FM-rate correction")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_focus)

    p = sub.add_parser("spectrum", help="top eigenvalues of the data (or a window) as CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--header", default=None)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--window", type=int, nargs=4, default=None, metavar=("ROW", "COL", "ROWS", "COLS"))
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("pipeline", help="full blind chain with all diagnostics")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--header", default=None)
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_pipeline)
    return ap


def _exit_code(err):
    if isinstance(err, _INPUT_ERRORS):
        return EXIT_INPUT
    if isinstance(err, _ESTIMATION_ERRORS):
        return EXIT_ESTIMATION
    if isinstance(err, OSError):
        return EXIT_IO
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except StageError as err:
        code = _exit_code(err.cause)
        if code is None:
            raise
        print(f"pcmsar: {err}", file=sys.stderr)
        return code
    except Exception as err:
        code = _exit_code(err)
        if code is None:
            raise
        print(f"pcmsar: [{args.command}] {type(err).__name__}: {err}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
