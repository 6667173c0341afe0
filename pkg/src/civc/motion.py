"""Pixel-to-feature motion prediction and feature-space alignment.

Motion convention: a vector (dx, dy) says the current sample at (x, y) is
predicted by the reference at (x + dx, y + dy).
"""

from __future__ import annotations

import numpy as np

from .core import FeatureTensor, Frame, MotionField

PIXEL_BLOCK = 8


def _search_order(radius: int):
    """Integer displacements sorted by the tie-break rule: |dx|+|dy|, then dy, then dx."""
    r = range(-radius, radius + 1)
    return sorted(((dx, dy) for dy in r for dx in r), key=lambda d: (abs(d[0]) + abs(d[1]), d[1], d[0]))


def _argmin_over(candidates, cost_fn, shape):
    best = np.full(shape, np.inf)
    best_dx = np.zeros(shape, np.float32)
    best_dy = np.zeros(shape, np.float32)
    for dx, dy in candidates:
        cost = cost_fn(dx, dy)
        better = cost < best
        best = np.where(better, cost, best)
        best_dx[better] = dx
        best_dy[better] = dy
    return best_dx, best_dy, best


def _tile_sum(a: np.ndarray, by: int, bx: int) -> np.ndarray:
    """Sum over (by, bx) tiles of the last two axes (edge tiles may be partial)."""
    ys = np.arange(0, a.shape[-2], by)
    xs = np.arange(0, a.shape[-1], bx)
    s = np.add.reduceat(np.add.reduceat(a, ys, axis=-2), xs, axis=-1)
    return s.reshape(-1, len(ys), len(xs)).sum(axis=0)


def estimate_pixel_flow(ref: Frame, cur: Frame, search_radius: int = 16) -> MotionField:
    """Exhaustive integer SAD block matching on 8x8 pixel blocks.

    The reference is edge-replicated outside the picture. Among equal costs
    the smallest |dx|+|dy| wins, then the smallest dy, then the smallest dx,
    so zero motion wins every all-tie block.
    """
    if ref.geometry != cur.geometry:
        raise ValueError("frames must share one geometry")
    h, w = cur.geometry
    r = search_radius
    c = cur.plane.astype(np.int32)
    refp = np.pad(ref.plane.astype(np.int32), r, mode="edge")
    rows, cols = -(-h // PIXEL_BLOCK), -(-w // PIXEL_BLOCK)

    def sad(dx, dy):
        shifted = refp[r + dy:r + dy + h, r + dx:r + dx + w]
        return _tile_sum(np.abs(c - shifted), PIXEL_BLOCK, PIXEL_BLOCK)

    dx, dy, _ = _argmin_over(_search_order(r), sad, (rows, cols))
    return MotionField(np.stack([dx, dy]), PIXEL_BLOCK)


def init_feature_motion(pixel_flow: MotionField, scale: int, cell_size: int,
                        feature_shape: tuple[int, int]) -> MotionField:
    """Average-pool pixel vectors onto feature cells and convert to feature units.

    Each feature cell covers ``cell_size * scale`` pixels per side; the vector
    of every pixel in it (its block's vector, edge-replicated beyond the
    flow grid) contributes equally.
    """
    hf, wf = feature_shape
    side = cell_size * scale
    rows, cols = -(-hf // cell_size), -(-wf // cell_size)
    hp, wp = rows * side, cols * side
    b = pixel_flow.cell_size
    per_pixel = np.repeat(np.repeat(pixel_flow.vectors.astype(np.float64), b, axis=1), b, axis=2)
    ph, pw = max(0, hp - per_pixel.shape[1]), max(0, wp - per_pixel.shape[2])
    per_pixel = np.pad(per_pixel, ((0, 0), (0, ph), (0, pw)), mode="edge")[:, :hp, :wp]
    pooled = per_pixel.reshape(2, rows, side, cols, side).mean(axis=(2, 4))
    return MotionField((pooled / scale).astype(np.float32), cell_size)


def _per_sample(motion: MotionField, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    b = motion.cell_size
    v = np.repeat(np.repeat(motion.vectors, b, axis=1), b, axis=2)[:, :shape[0], :shape[1]]
    return v[0].astype(np.float64), v[1].astype(np.float64)


def warp(data: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Bilinear gather of ``data[..., y + dy, x + dx]`` with edge-clamped coordinates."""
    h, w = data.shape[-2:]
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    sx = np.clip(xx + dx, 0, w - 1)
    sy = np.clip(yy + dy, 0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    d = np.asarray(data, dtype=np.float64)
    top = d[..., y0, x0] * (1 - fx) + d[..., y0, x1] * fx
    bot = d[..., y1, x0] * (1 - fx) + d[..., y1, x1] * fx
    return top * (1 - fy) + bot * fy


def align(ref_feat: FeatureTensor, motion: MotionField) -> FeatureTensor:
    """Warp every channel of the reference by its cell's motion vector."""
    dx, dy = _per_sample(motion, ref_feat.data.shape[1:])
    return FeatureTensor(warp(ref_feat.data, dx, dy).astype(np.float32), ref_feat.scale)


def cell_sad(a: FeatureTensor, b: FeatureTensor, cell_size: int) -> np.ndarray:
    """Per-cell sum of absolute differences over all channels."""
    diff = np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))
    return _tile_sum(diff, cell_size, cell_size)


def refine_motion(init: MotionField, ref_feat: FeatureTensor, cur_feat: FeatureTensor,
                  refine_radius: int = 2) -> MotionField:
    """Local integer refinement of ``init`` by alignment feedback.

    For each cell, try ``init + delta`` for integer deltas within the radius
    and keep the delta whose aligned reference best matches ``cur_feat`` over
    that cell. delta = 0 wins ties, so the result never matches worse than
    ``init``.
    """
    b = init.cell_size

    def cost(dx, dy):
        moved = MotionField(init.vectors + np.array([dx, dy], np.float32)[:, None, None], b)
        return cell_sad(align(ref_feat, moved), cur_feat, b)

    ddx, ddy, _ = _argmin_over(_search_order(refine_radius), cost, init.shape)
    return MotionField(init.vectors + np.stack([ddx, ddy]), b)


def predict_motion(ref: Frame, cur: Frame, ref_feat: FeatureTensor, cur_feat: FeatureTensor,
                   search_radius: int = 16, refine_radius: int = 2, cell_size: int = 4) -> MotionField:
    """Full pixel-to-feature pipeline: block matching, lift to features, refine."""
    flow = estimate_pixel_flow(ref, cur, search_radius)
    init = init_feature_motion(flow, ref_feat.scale, cell_size, ref_feat.data.shape[1:])
    return refine_motion(init, ref_feat, cur_feat, refine_radius)
