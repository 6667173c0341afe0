import io
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from civc import CodecConfig, Frame, bd_rate, psnr
from civc.evaluation import (analyze_drift, analyze_skip, rd_sweep, write_drift_csv,
                             write_rd_csv, write_skip_csv)

from conftest import panning_clip, texture


def test_psnr_examples():
    zeros, ones = Frame(np.zeros((4, 4), np.uint8)), Frame(np.ones((4, 4), np.uint8))
    assert psnr(zeros, zeros) == math.inf
    assert psnr(zeros, ones) == pytest.approx(10 * math.log10(255 ** 2), abs=1e-12)
    assert psnr(zeros, ones) == pytest.approx(48.13, abs=5e-3)
    a, b = Frame(texture(8, 8, 1)), Frame(texture(8, 8, 2))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(zeros, Frame(np.zeros((4, 5), np.uint8)))


ANCHOR = [(0.1, 30.0), (0.2, 33.0), (0.4, 35.5), (0.8, 38.0), (1.6, 40.0)]


def numeric_bd(anchor, test):
    """Independent check: average log-rate gap by adaptive quadrature."""
    qa, la = zip(*[(p, math.log(r)) for r, p in anchor])
    qt, lt = zip(*[(p, math.log(r)) for r, p in test])
    fa, ft = PchipInterpolator(qa, la), PchipInterpolator(qt, lt)
    lo, hi = max(min(qa), min(qt)), min(max(qa), max(qt))
    gap, _ = quad(lambda q: float(ft(q) - fa(q)), lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return (math.exp(gap / (hi - lo)) - 1) * 100


def test_bd_rate_identity_and_half_rate():
    assert bd_rate(ANCHOR, ANCHOR) == 0.0
    half = [(r / 2, p) for r, p in ANCHOR]
    assert bd_rate(ANCHOR, half) == pytest.approx(-50.0, abs=0.05)
    assert bd_rate(ANCHOR, half) == pytest.approx(numeric_bd(ANCHOR, half), abs=1e-9)


def test_bd_rate_partial_overlap_matches_quadrature():
    test = [(0.12, 31.0), (0.22, 33.5), (0.5, 36.5), (1.1, 39.0), (2.0, 41.0)]
    assert bd_rate(ANCHOR, test) == pytest.approx(numeric_bd(ANCHOR, test), abs=1e-6)
    # unordered input is accepted
    assert bd_rate(ANCHOR[::-1], test) == pytest.approx(bd_rate(ANCHOR, test), abs=1e-12)


def test_bd_rate_errors():
    with pytest.raises(ValueError):
        bd_rate(ANCHOR, [(r, p + 100) for r, p in ANCHOR])
    with pytest.raises(ValueError):
        bd_rate(ANCHOR[:3], ANCHOR[:3])
    with pytest.raises(ValueError):
        bd_rate(ANCHOR, [(1, 30), (0.5, 31), (2, 32), (3, 33)])


def noisy_sequence(n=40, h=32, w=48, seed=0):
    """Each frame adds fresh noise to the previous one."""
    rng = np.random.default_rng(seed)
    img = texture(h, w, seed).astype(np.float64)
    frames = []
    for t in range(n):
        img = img + rng.normal(0, 3, img.shape)
        frames.append(Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8), t))
    return frames


def test_drift_csv_and_types():
    frames = noisy_sequence(20)
    cfg = replace(CodecConfig(), gop_size=10)
    report = analyze_drift(frames, cfg, "I+P+cI")
    buf = io.StringIO()
    write_drift_csv(report, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "frame_index,frame_type,bits,psnr"
    assert len(lines) == 1 + len(frames)
    assert lines[1].startswith("0,I,") and lines[11].startswith("10,cI,")
    with pytest.raises(ValueError):
        analyze_drift(frames[:19], cfg)
    assert analyze_drift(frames, cfg, "ci-only").frames[5].frame_type.label == "cI"


def test_ci_matches_standalone_and_p_only_trend():
    from civc import encode_i
    frames = noisy_sequence(40)
    cfg = replace(CodecConfig(), gop_size=20, tau_sigma=0.0)
    full = analyze_drift(frames, cfg, "I+P+cI")
    for i in (20,):
        _, recon, _ = encode_i(frames[i], cfg)
        assert abs(full.frames[i].psnr - psnr(frames[i], recon)) <= 0.01
    ponly = analyze_drift(frames, cfg, "I+P")
    values = np.array([f.psnr for f in ponly.frames])
    slope = np.polyfit(np.arange(len(values)), values, 1)[0]
    assert slope <= 0


def test_skip_disabled_gives_zero_ratios():
    frames = panning_clip(3, 32, 48)
    rows = analyze_skip(frames, replace(CodecConfig(), tau_sigma=0.0), (0, 5), timing=False)
    assert {r.stream for r in rows} == {"image", "motion", "residual"}
    assert all(r.skipped == 0 and r.skip_ratio == 0 for r in rows)


def test_static_scene_skips_motion_more_than_residual():
    plane = texture(48, 64, 9)
    frames = [Frame(plane, i) for i in range(4)]
    rows = analyze_skip(frames, CodecConfig(), range(6), timing=False)
    for q in range(6):
        ratio = {r.stream: r.skip_ratio for r in rows if r.quality == q}
        assert ratio["motion"] > ratio["residual"]


def test_skip_csv_columns():
    frames = panning_clip(2, 16, 16)
    rows = analyze_skip(frames, CodecConfig(), (2,), timing=True)
    buf = io.StringIO()
    write_skip_csv(rows, buf)
    head, *body = buf.getvalue().splitlines()
    assert head == "quality,stream,elements,skipped,skip_ratio,time_with_skip,time_without"
    assert len(body) == len(rows) == 3
    assert all(r.time_with_skip >= 0 and r.time_without >= 0 for r in rows)


def test_rd_sweep_feeds_bd_rate(monkeypatch):
    monkeypatch.setenv("CIVC_THREADS", "2")
    frames = panning_clip(3, 32, 48)
    points = rd_sweep(frames, CodecConfig())
    assert [p.quality_index for p in points] == list(range(6))
    curve = [(p.bpp, p.psnr) for p in points]
    assert bd_rate(curve, curve) == 0.0
    buf = io.StringIO()
    write_rd_csv(points, buf)
    assert len(buf.getvalue().splitlines()) == 7
