"""Quality metrics, BD-rate and the drift / skip / RD analyzers.

CSV schemas (column order fixed):

* drift: ``frame_index,frame_type,bits,psnr``
* skip:  ``quality,stream,elements,skipped,skip_ratio,time_with_skip,time_without``
* rd:    ``quality,qstep,frames,bits,bpp,psnr,msssim``  (msssim left empty)

PSNR is written with 6 decimals; an identical frame is written as ``inf``.
Timing columns are seconds (median of 3 runs) and are the only
non-deterministic fields.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import entropy
from .codec import StreamTrace, encode_frames
from .core import QUANT_TABLE, CodecConfig, Frame, FrameStat, FrameType, RDPoint

STREAM_NAMES = {0: "image", 1: "motion", 2: "residual"}
VARIANTS = {"I+P+cI": "full", "I+P": "p-only", "I+cI": "ci-only"}


def psnr(a: Frame, b: Frame) -> float:
    """10 log10(MAX^2 / MSE); ``math.inf`` for identical frames."""
    if a.geometry != b.geometry or a.bitdepth != b.bitdepth:
        raise ValueError("psnr needs frames of equal geometry and bit depth")
    diff = a.plane.astype(np.float64) - b.plane.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return math.inf
    peak = (1 << a.bitdepth) - 1
    return 10.0 * math.log10(peak * peak / mse)


def _curve(points):
    pts = np.asarray(sorted(points, key=lambda p: p[1]), dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 4:
        raise ValueError("bd_rate needs at least 4 (bpp, psnr) points per curve")
    rate, quality = pts[:, 0], pts[:, 1]
    if np.any(rate <= 0):
        raise ValueError("rates must be positive")
    if np.any(np.diff(quality) <= 0) or np.any(np.diff(rate) <= 0):
        raise ValueError("RD points must be strictly monotone")
    return quality, np.log(rate)


def bd_rate(anchor: Sequence[tuple[float, float]], test: Sequence[tuple[float, float]]) -> float:
    """Bjontegaard delta rate of ``test`` against ``anchor``, in percent.

    Log-rate is interpolated as a function of PSNR with a monotone
    piecewise-cubic (PCHIP) curve and integrated exactly over the PSNR
    overlap of the two curves.
    """
    qa, la = _curve(anchor)
    qt, lt = _curve(test)
    lo, hi = max(qa[0], qt[0]), min(qa[-1], qt[-1])
    if not lo < hi:
        raise ValueError("RD curves have no PSNR overlap")
    ia = PchipInterpolator(qa, la).integrate(lo, hi)
    it = PchipInterpolator(qt, lt).integrate(lo, hi)
    return (math.exp((it - ia) / (hi - lo)) - 1.0) * 100.0


# -- drift --------------------------------------------------------------------

def analyze_drift(frames: Sequence[Frame], cfg: CodecConfig, variant: str = "I+P+cI") -> RDPoint:
    """Per-frame bits and PSNR under one schedule variant.

    ``variant`` is one of ``I+P+cI``, ``I+P`` or ``I+cI`` (or the schedule
    names ``full``, ``p-only``, ``ci-only``).
    """
    sched = VARIANTS.get(variant, variant)
    if len(frames) < 2 * cfg.gop_size:
        raise ValueError(f"drift analysis needs at least {2 * cfg.gop_size} frames")
    encoded = encode_frames(frames, cfg, sched)
    stats = tuple(FrameStat(i, e.frame_type, 8 * e.record.nbytes, psnr(f, e.recon))
                  for i, (f, e) in enumerate(zip(frames, encoded)))
    h, w = frames[0].geometry
    return RDPoint(w, h, stats, cfg.quality_index)


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.6f}"


def write_drift_csv(point: RDPoint, out) -> None:
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(["frame_index", "frame_type", "bits", "psnr"])
    for f in point.frames:
        wr.writerow([f.frame_index, f.frame_type.label, f.bits, _fmt(f.psnr)])


# -- skip ---------------------------------------------------------------------

@dataclass(frozen=True)
class SkipRow:
    quality: int
    stream: str
    elements: int
    skipped: int
    time_with_skip: float
    time_without: float

    @property
    def skip_ratio(self) -> float:
        return self.skipped / self.elements if self.elements else 0.0


def _entropy_time(traces: Iterable[StreamTrace], tau: float, repeats: int = 3) -> float:
    jobs = []
    for t in traces:
        latents, mask = entropy.apply_skip(t.values, t.model, tau)
        jobs.append((latents, mask, t.model))
    runs = []
    for _ in range(repeats):
        start = time.perf_counter()
        for latents, mask, model in jobs:
            payload = entropy.encode_latents(latents, model, mask)
            entropy.decode_latents(payload, model, tau)
        runs.append(time.perf_counter() - start)
    return float(np.median(runs))


def analyze_skip(frames: Sequence[Frame], cfg: CodecConfig,
                 qualities: Sequence[int] = (0, 2, 4, 5), variant: str = "full",
                 timing: bool = True) -> list[SkipRow]:
    """Skip ratio and entropy coding time per quality and stream.

    Timing re-codes the recorded latents of each stream twice: with the
    configured threshold and with skipping forced off (tau = 0).
    """
    tau = float(np.float32(cfg.tau_sigma))

    def traces_for(q):
        traces: list[StreamTrace] = []
        encode_frames(frames, replace(cfg, quality_index=q), VARIANTS.get(variant, variant), traces)
        return q, traces

    rows = []
    for q, traces in _parallel_map(traces_for, qualities):
        for sid, name in STREAM_NAMES.items():
            group = [t for t in traces if t.stream_id == sid]
            if not group:
                continue
            total = sum(t.values.size for t in group)
            skipped = sum(int(entropy.skip_mask(t.model.sigma, tau).sum()) for t in group)
            t_on = _entropy_time(group, tau) if timing else float("nan")
            t_off = _entropy_time(group, 0.0) if timing else float("nan")
            rows.append(SkipRow(q, name, total, skipped, t_on, t_off))
    return rows


def write_skip_csv(rows: Sequence[SkipRow], out) -> None:
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(["quality", "stream", "elements", "skipped", "skip_ratio",
                 "time_with_skip", "time_without"])
    for r in rows:
        wr.writerow([r.quality, r.stream, r.elements, r.skipped, f"{r.skip_ratio:.6f}",
                     f"{r.time_with_skip:.6f}", f"{r.time_without:.6f}"])


# -- rd -----------------------------------------------------------------------

def rd_sweep(frames: Sequence[Frame], cfg: CodecConfig,
             qualities: Sequence[int] = tuple(range(len(QUANT_TABLE))),
             variant: str = "full") -> list[RDPoint]:
    def run(q):
        c = replace(cfg, quality_index=q)
        encoded = encode_frames(frames, c, VARIANTS.get(variant, variant))
        stats = tuple(FrameStat(i, e.frame_type, 8 * e.record.nbytes, psnr(f, e.recon))
                      for i, (f, e) in enumerate(zip(frames, encoded)))
        h, w = frames[0].geometry
        return RDPoint(w, h, stats, q)

    return list(_parallel_map(run, qualities))


def write_rd_csv(points: Sequence[RDPoint], out) -> None:
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(["quality", "qstep", "frames", "bits", "bpp", "psnr", "msssim"])
    for p in points:
        wr.writerow([p.quality_index, QUANT_TABLE[p.quality_index], len(p.frames),
                     p.bits_total, f"{p.bpp:.6f}", _fmt(p.psnr), ""])


def frame_type_summary(point: RDPoint) -> dict[FrameType, tuple[int, int, float]]:
    """Per frame type: (count, bits, mean PSNR over finite values)."""
    out = {}
    for ft in FrameType:
        fs = [f for f in point.frames if f.frame_type is ft]
        if fs:
            finite = [f.psnr for f in fs if math.isfinite(f.psnr)]
            out[ft] = (len(fs), sum(f.bits for f in fs),
                       float(np.mean(finite)) if finite else math.inf)
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CIVC_THREADS", "1")))
    except ValueError:
        return 1


def _parallel_map(fn, items):
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
