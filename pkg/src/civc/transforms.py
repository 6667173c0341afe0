"""Fixed analysis/synthesis transforms and the Gaussian prior predictors.

The learned auto-encoders are replaced by an orthonormal 8x8 block DCT with
uniform quantization. Edge blocks narrower than 8 use the orthonormal DCT of
their own length, so a transform never changes the tensor shape.

Prior predictors use only data the decoder has at the same point of the
decode order. The structure term is the local standard deviation of the
structure source expressed on the latent scale of a DC coefficient, i.e.
``8 * std / qstep`` with std and qstep both in feature units.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .core import (SAMPLE_MAX, FeatureTensor, Frame, PriorCoefficients,
                   round_half_away)
from .entropy import GaussianModel

BLOCK = 8
MOTION_DECAY = 2


def extract_features(frame: Frame, scale: int = 2) -> FeatureTensor:
    """Space-to-depth by ``scale`` on the edge-padded plane, rescaled to [0, 1].

    The plane is padded to a multiple of ``2 * scale`` so every feature grid
    has even dimensions. Channel ``dy * scale + dx`` holds the samples at
    pixel offset (dy, dx) within each scale x scale cell.
    """
    h, w = frame.geometry
    m = 2 * scale
    ph, pw = -h % m, -w % m
    plane = np.pad(frame.plane, ((0, ph), (0, pw)), mode="edge")
    hf, wf = plane.shape[0] // scale, plane.shape[1] // scale
    cells = plane.reshape(hf, scale, wf, scale).transpose(1, 3, 0, 2)
    data = cells.reshape(scale * scale, hf, wf).astype(np.float32) / np.float32(SAMPLE_MAX)
    return FeatureTensor(data, scale)


def synthesize_frame(feat: FeatureTensor, geometry: tuple[int, int], frame_index: int = 0) -> Frame:
    """Depth-to-space inverse of :func:`extract_features`, cropped, clamped and rounded."""
    s = feat.scale
    h, w = geometry
    c, hf, wf = feat.data.shape
    if c != s * s or hf * s < h or wf * s < w or hf * s - h >= 2 * s or wf * s - w >= 2 * s:
        raise ValueError(f"feature shape {feat.data.shape} does not fit geometry {geometry}")
    plane = feat.data.reshape(s, s, hf, wf).transpose(2, 0, 3, 1).reshape(hf * s, wf * s)
    samples = np.clip(plane[:h, :w].astype(np.float64) * SAMPLE_MAX, 0, SAMPLE_MAX)
    return Frame(round_half_away(samples).astype(np.uint8), frame_index)


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix of size n (rows are basis vectors)."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    d[0] /= np.sqrt(2.0)
    return d


def _segments(n: int):
    full = n // BLOCK * BLOCK
    segs = []
    if full:
        segs.append((0, full, BLOCK))
    if n > full:
        segs.append((full, n, n - full))
    return segs


def _block_transform(x: np.ndarray, inverse: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    c, h, w = x.shape
    out = np.empty_like(x)
    for y0, y1, bh in _segments(h):
        dy = dct_matrix(bh)
        for x0, x1, bw in _segments(w):
            dx = dct_matrix(bw)
            blocks = x[:, y0:y1, x0:x1].reshape(c, (y1 - y0) // bh, bh, (x1 - x0) // bw, bw)
            if inverse:
                res = np.einsum("ui,cyuxv->cyixv", dy, blocks)
                res = np.einsum("cyixv,vj->cyixj", res, dx)
            else:
                res = np.einsum("ui,cyixj->cyuxj", dy, blocks)
                res = np.einsum("cyuxj,vj->cyuxv", res, dx)
            out[:, y0:y1, x0:x1] = res.reshape(c, y1 - y0, x1 - x0)
    return out


def analysis(x, qstep: float) -> np.ndarray:
    """Per-channel 8x8 block DCT-II (orthonormal) divided by ``qstep``."""
    data = x.data if isinstance(x, FeatureTensor) else np.asarray(x)
    return (_block_transform(data, inverse=False) / qstep).astype(np.float32)


def synthesis(latents: np.ndarray, qstep: float, scale: int = 2) -> FeatureTensor:
    """Scale by ``qstep`` and invert the block DCT."""
    lat = np.asarray(latents, dtype=np.float64) * qstep
    return FeatureTensor(_block_transform(lat, inverse=True).astype(np.float32), scale)


def _block_std(x: np.ndarray, by: int, bx: int) -> np.ndarray:
    """Standard deviation over each (by x bx) tile of the trailing two axes.

    Leading axes are reduced too; edge tiles use the samples they have.
    Returns one value per tile.
    """
    x = np.asarray(x, dtype=np.float64)
    x = x.reshape(-1, *x.shape[-2:])
    h, w = x.shape[1:]
    ys, xs = np.arange(0, h, by), np.arange(0, w, bx)

    def tile_sum(a):
        a = np.add.reduceat(np.add.reduceat(a, ys, axis=1), xs, axis=2)
        return a.sum(axis=0)

    count = tile_sum(np.ones_like(x))
    mean = tile_sum(x) / count
    var = tile_sum(x * x) / count - mean * mean
    return np.sqrt(np.maximum(var, 0.0))


def _expand(tiles: np.ndarray, by: int, bx: int, shape: tuple[int, int]) -> np.ndarray:
    return np.repeat(np.repeat(tiles, by, axis=-2), bx, axis=-1)[..., :shape[0], :shape[1]]


def _sigma(coef: PriorCoefficients, structure: np.ndarray, temporal: np.ndarray | None) -> np.ndarray:
    # float32, evaluated as (beta0 + beta1*s) + beta2*|p|
    s = np.float32(coef.beta0) + np.float32(coef.beta1) * structure.astype(np.float32)
    if temporal is not None:
        s = s + np.float32(coef.beta2) * np.abs(temporal.astype(np.float32))
    return np.clip(s, np.float32(coef.sigma_min), np.float32(coef.sigma_max)).astype(np.float32)


def _temporal(prev, shape) -> np.ndarray | None:
    if prev is None:
        return None
    prev = np.asarray(prev, dtype=np.float32)
    if prev.shape != tuple(shape):
        raise ValueError(f"previous latents shape {prev.shape} != {tuple(shape)}")
    return prev


def _frequency_weight(shape: tuple[int, int]) -> np.ndarray:
    """1 + u + v for the DCT frequency (u, v) of every latent position."""
    u = np.arange(shape[0]) % BLOCK
    v = np.arange(shape[1]) % BLOCK
    return (1 + u[:, None] + v[None, :]).astype(np.float64)


def motion_latent_shape(feat_shape: tuple[int, int], cell_size: int) -> tuple[int, int, int]:
    hf, wf = feat_shape
    return 2, -(-hf // cell_size), -(-wf // cell_size)


def predict_motion_prior(ref_feat: FeatureTensor, prev_motion_latents, cell_size: int,
                         qstep: float, coef: PriorCoefficients = PriorCoefficients()) -> GaussianModel:
    """Prior for motion latents from the reference features and previous motion latents.

    The structure term of each motion latent is the standard deviation of the
    reference over that latent's cell, pooled across channels
    (cell_size**2 * channels samples; 64 with the defaults), divided by
    ``(1 + u + v) ** MOTION_DECAY`` for the latent's DCT frequency (u, v):
    motion fields are piecewise smooth, so their energy sits near DC.
    ``qstep`` is the image quantizer step in feature units.
    """
    shape = motion_latent_shape(ref_feat.data.shape[1:], cell_size)
    p = _temporal(prev_motion_latents, shape)
    sbar = _block_std(ref_feat.data, cell_size, cell_size) * (BLOCK / qstep)
    sbar = np.broadcast_to(sbar / _frequency_weight(shape[1:]) ** MOTION_DECAY, shape)
    mu = np.zeros(shape, np.float32) if p is None else (np.float32(coef.alpha) * p).astype(np.float32)
    return GaussianModel(mu, _sigma(coef, sbar, p))


def _per_channel_block_std(feat: np.ndarray, qstep: float) -> np.ndarray:
    c, h, w = feat.shape
    tiles = np.stack([_block_std(feat[i], BLOCK, BLOCK) for i in range(c)])
    return _expand(tiles, BLOCK, BLOCK, (h, w)) * (BLOCK / qstep)


def predict_residual_prior(pred_feat: FeatureTensor, prev_residual_latents, qstep: float,
                           coef: PriorCoefficients = PriorCoefficients()) -> GaussianModel:
    """Prior for residual latents from the prediction and previous residual latents.

    ``qstep`` is the quantizer step in feature units.
    """
    shape = pred_feat.data.shape
    p = _temporal(prev_residual_latents, shape)
    sbar = _per_channel_block_std(pred_feat.data, qstep)
    mu = np.zeros(shape, np.float32) if p is None else (np.float32(coef.alpha) * p).astype(np.float32)
    return GaussianModel(mu, _sigma(coef, sbar, p))


def predict_ci_prior(aligned_ref: FeatureTensor, qstep: float,
                     coef: PriorCoefficients = PriorCoefficients()) -> GaussianModel:
    """Prior for cI image latents: the aligned reference in latent space is the mode."""
    mu = analysis(aligned_ref, qstep)
    sbar = _per_channel_block_std(aligned_ref.data, qstep)
    return GaussianModel(mu, _sigma(coef, sbar, None))


def predict_intra_prior(shape: tuple[int, int, int], qstep: float,
                        coef: PriorCoefficients = PriorCoefficients()) -> GaussianModel:
    """Fixed I-frame prior: zero mean, sigma falling as (1 + u + v) ** -2 with DCT frequency.

    ``qstep`` is in sample units.
    """
    freq = _frequency_weight(shape[1:]) ** 2
    s = np.float32(coef.beta0) + np.float32(coef.intra_scale) / (np.float32(qstep) * freq.astype(np.float32))
    s = np.clip(s, np.float32(coef.sigma_min), np.float32(coef.sigma_max)).astype(np.float32)
    return GaussianModel(np.zeros(shape, np.float32), np.broadcast_to(s, shape).copy())
