"""Discretized Gaussian entropy model, range coder and probability-based skipping.

Payload format
--------------
A payload is the big-endian output of a 64-bit carry-propagating range coder
followed by a 4-byte flush tail. Only non-skipped elements are coded, in
row-major order. The decoder reads zero bytes past the end of the payload.
An empty payload means nothing was coded.

Symbol alphabet
---------------
For an element with model N(mu, sigma), let ``c = round_half_away(mu)``.
Values are saturated into the support ``[c - 255, c + 255]``. Inside the
support a core window ``[c - w, c + w]``, with ``w`` the smallest width whose
bins cover ``mu +- 8 sigma`` (at most 254), gets one bin per integer. A single
escape bin carries the mass outside the core; an escaped value is followed by
a uniform symbol over the ``2 * (255 - w)`` support values left (lower side
first, nearest the core first). Bin frequencies are 16-bit: for core bin
``j``, ``cum(j) = j + floor((Phi(e_j) - Phi(e_0)) * (2**16 - nbins))`` with
``e_j = c - w - 0.5 + j``, and the escape bin takes the rest, so every bin
keeps at least one count (probability floor 2**-16) and the counts sum to
2**16 exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import erf, erfc

from .core import BitstreamError, round_half_away

PRECISION = 16
TOTAL = 1 << PRECISION
SUPPORT = 255
PROB_FLOOR = 2.0 ** -PRECISION

_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)
_RANGE_BOTTOM = np.uint64(1 << 48)
_FLUSH_MASK = np.uint64(0xFFFFFFFF)
_U8 = np.uint64(8)
_U56 = np.uint64(56)
_U32 = np.uint64(32)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class GaussianModel:
    """Per-element mean and scale (float32 grids of identical shape)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float32)
        sigma = np.asarray(self.sigma, dtype=np.float32)
        if mu.shape != sigma.shape:
            raise ValueError(f"mu shape {mu.shape} != sigma shape {sigma.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("model parameters must be finite")
        if sigma.size and sigma.min() <= 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mu.shape


def mode_and_mass(mu: float, sigma: float) -> tuple[float, float]:
    """Mode of N(mu, sigma) and the probability mass within +-0.5 of it."""
    return float(mu), float(erf(1.0 / (2.0 * math.sqrt(2.0) * sigma)))


def skip_mask(sigma: np.ndarray, tau_sigma: float) -> np.ndarray:
    """Elements whose scale falls below the threshold; compared in float32."""
    return np.asarray(sigma, dtype=np.float32) < np.float32(tau_sigma)


def support_center(mu: np.ndarray) -> np.ndarray:
    return round_half_away(np.asarray(mu, dtype=np.float32))


def apply_skip(values: np.ndarray, model: GaussianModel, tau_sigma: float):
    """Quantize ``values`` under ``model``, skipping high-confidence elements.

    Returns ``(latents, mask)``. Skipped elements take ``mu`` exactly; the rest
    are rounded half away from zero and saturated into the coder support
    ``round(mu) +- 255`` so that what the encoder keeps is what the decoder
    gets back.
    """
    values = np.asarray(values)
    if values.shape != model.shape:
        raise ValueError(f"values shape {values.shape} != model shape {model.shape}")
    mask = skip_mask(model.sigma, tau_sigma)
    c = support_center(model.mu)
    coded = np.clip(round_half_away(values), c - SUPPORT, c + SUPPORT)
    latents = np.where(mask, model.mu, coded.astype(np.float32)).astype(np.float32)
    return latents, mask


@njit(cache=True)
def _round_half_away(x):
    if x >= 0.0:
        return math.floor(x + 0.5)
    return -math.floor(-x + 0.5)


@njit(cache=True)
def _core_width(mu, c, sigma):
    # smallest w whose bins [c-w-0.5, c+w+0.5] cover mu +- 8 sigma
    w = int(math.ceil(abs(mu - c) + 8.0 * sigma - 0.5))
    if w < 0:
        w = 0
    if w > SUPPORT - 1:
        w = SUPPORT - 1
    return w


@njit(cache=True)
def _phi(x, mu, k):
    return 0.5 * math.erfc((mu - x) * k)


@njit(cache=True)
def _cum(j, nbins, c, w, mu, k, base):
    # cumulative count at the lower edge of bin j; bins 0..2w are the core,
    # bin 2w+1 is the escape; k = 1 / (sigma sqrt 2), base = Phi(c - w - 0.5)
    if j <= 0:
        return 0
    if j >= nbins:
        return TOTAL
    mass = _phi(c - w - 0.5 + j, mu, k) - base
    if mass < 0.0:
        mass = 0.0
    return j + int(math.floor(mass * (TOTAL - nbins)))


@njit(cache=True)
def _emit(buf, pos, low):
    buf[pos] = np.uint8(low >> _U56)
    return pos + 1, low << _U8


@njit(cache=True)
def _carry(buf, pos):
    i = pos - 1
    while buf[i] == 255:
        buf[i] = 0
        i -= 1
    buf[i] += 1


@njit(cache=True)
def _enc_step(buf, pos, low, rng, start, size, total):
    r = rng // np.uint64(total)
    new_low = low + r * np.uint64(start)
    if new_low < low:
        _carry(buf, pos)
    low = new_low
    rng = r * np.uint64(size)
    while rng < _RANGE_BOTTOM:
        pos, low = _emit(buf, pos, low)
        rng = rng << _U8
    return pos, low, rng


@njit(cache=True)
def _encode_kernel(symbols, mu, sigma, buf):
    low = np.uint64(0)
    rng = _U64_MAX
    pos = 0
    for i in range(symbols.shape[0]):
        m = np.float64(mu[i])
        s = np.float64(sigma[i])
        k = _INV_SQRT2 / s
        c = int(_round_half_away(m))
        w = _core_width(m, c, s)
        nbins = 2 * w + 2
        base = _phi(c - w - 0.5, m, k)
        d = int(symbols[i]) - c
        if d < -SUPPORT:
            d = -SUPPORT
        elif d > SUPPORT:
            d = SUPPORT
        if d < -w:
            j = nbins - 1
            excess = -w - 1 - d
        elif d > w:
            j = nbins - 1
            excess = (SUPPORT - w) + d - w - 1
        else:
            j = d + w
            excess = -1
        lo = _cum(j, nbins, c, w, m, k, base)
        hi = _cum(j + 1, nbins, c, w, m, k, base)
        pos, low, rng = _enc_step(buf, pos, low, rng, lo, hi - lo, TOTAL)
        if excess >= 0:
            pos, low, rng = _enc_step(buf, pos, low, rng, excess, 1, 2 * (SUPPORT - w))
    # flush: smallest multiple of 2**32 inside [low, low + rng)
    v = low + _FLUSH_MASK
    if v < low:
        _carry(buf, pos)
    v = v & ~_FLUSH_MASK
    for _ in range(4):
        pos, v = _emit(buf, pos, v)
    return pos


@njit(cache=True)
def _next_byte(data, pos):
    if pos < data.shape[0]:
        return np.uint64(data[pos]), pos + 1
    return np.uint64(0), pos + 1


@njit(cache=True)
def _dec_renorm(data, pos, diff, rng):
    while rng < _RANGE_BOTTOM:
        b, pos = _next_byte(data, pos)
        diff = (diff << _U8) | b
        rng = rng << _U8
    return pos, diff, rng


@njit(cache=True)
def _decode_kernel(data, mu, sigma, out):
    diff = np.uint64(0)
    pos = 0
    for _ in range(8):
        b, pos = _next_byte(data, pos)
        diff = (diff << _U8) | b
    rng = _U64_MAX
    for i in range(out.shape[0]):
        m = np.float64(mu[i])
        s = np.float64(sigma[i])
        k = _INV_SQRT2 / s
        c = int(_round_half_away(m))
        w = _core_width(m, c, s)
        nbins = 2 * w + 2
        base = _phi(c - w - 0.5, m, k)
        r = rng // np.uint64(TOTAL)
        t = diff // r
        if t >= np.uint64(TOTAL):
            t = np.uint64(TOTAL - 1)
        target = int(t)
        lo_j = 0
        hi_j = nbins
        while hi_j - lo_j > 1:
            mid = (lo_j + hi_j) >> 1
            if _cum(mid, nbins, c, w, m, k, base) <= target:
                lo_j = mid
            else:
                hi_j = mid
        j = lo_j
        lo = _cum(j, nbins, c, w, m, k, base)
        hi = _cum(j + 1, nbins, c, w, m, k, base)
        diff -= r * np.uint64(lo)
        rng = r * np.uint64(hi - lo)
        pos, diff, rng = _dec_renorm(data, pos, diff, rng)
        if j == nbins - 1:
            side = SUPPORT - w
            r = rng // np.uint64(2 * side)
            t = diff // r
            if t >= np.uint64(2 * side):
                t = np.uint64(2 * side - 1)
            excess = int(t)
            diff -= r * t
            rng = r
            pos, diff, rng = _dec_renorm(data, pos, diff, rng)
            d = -w - 1 - excess if excess < side else w + 1 + excess - side
        else:
            d = j - w
        out[i] = c + d
    # the encoder flushes 4 bytes after the last renormalization
    return pos - 4


def _coded_arrays(latents, model, mask):
    idx = np.flatnonzero(~np.asarray(mask).ravel())
    mu = model.mu.ravel()[idx]
    sigma = model.sigma.ravel()[idx]
    return idx, mu, sigma


def encode_latents(latents: np.ndarray, model: GaussianModel, mask: np.ndarray) -> bytes:
    """Range-code the non-skipped elements of ``latents``.

    Coded values outside ``round(mu) +- 255`` are saturated; callers that
    need encoder/decoder parity should pass the output of :func:`apply_skip`.
    """
    latents = np.asarray(latents)
    mask = np.asarray(mask, dtype=bool)
    if latents.shape != model.shape or mask.shape != model.shape:
        raise ValueError("latents, mask and model must share one shape")
    idx, mu, sigma = _coded_arrays(latents, model, mask)
    if idx.size == 0:
        return b""
    vals = latents.ravel()[idx].astype(np.float64)
    symbols = np.rint(vals)
    if not np.array_equal(symbols, vals):
        raise ValueError("coded latents must be integers")
    buf = np.zeros(4 * idx.size + 16, dtype=np.uint8)
    n = _encode_kernel(symbols.astype(np.int64), mu, sigma, buf)
    return buf[:n].tobytes()


def decode_latents(payload: bytes, model: GaussianModel, tau_sigma: float,
                   shape=None, return_mask: bool = False):
    """Invert :func:`encode_latents`; the skip mask is recomputed from sigma."""
    if shape is not None and tuple(shape) != model.shape:
        raise ValueError(f"shape {tuple(shape)} does not match model {model.shape}")
    mask = skip_mask(model.sigma, tau_sigma)
    out = model.mu.astype(np.float32).copy()
    idx, mu, sigma = _coded_arrays(out, model, mask)
    if idx.size:
        if len(payload) < 4:
            raise BitstreamError("latent payload exhausted")
        data = np.frombuffer(payload, dtype=np.uint8)
        symbols = np.empty(idx.size, dtype=np.int64)
        consumed = _decode_kernel(data, mu, sigma, symbols)
        if consumed > len(payload):
            raise BitstreamError("latent payload exhausted")
        out.ravel()[idx] = symbols.astype(np.float32)
    elif payload:
        raise BitstreamError("payload present but every element is skipped")
    if return_mask:
        return out, mask
    return out


def bin_mass(values: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Mass of N(mu, sigma) on [v - 0.5, v + 0.5]; support edges absorb the tails."""
    v = np.asarray(values, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    k = _INV_SQRT2 / np.asarray(sigma, dtype=np.float64)
    c = round_half_away(mu)
    upper = np.where(v >= c + SUPPORT, 0.0, 0.5 * erfc((v + 0.5 - mu) * k))
    lower = np.where(v <= c - SUPPORT, 1.0, 0.5 * erfc((v - 0.5 - mu) * k))
    return lower - upper


def ideal_rate(latents: np.ndarray, model: GaussianModel, mask: np.ndarray) -> float:
    """Information content in bits of the non-skipped elements."""
    keep = ~np.asarray(mask, dtype=bool)
    if not keep.any():
        return 0.0
    p = bin_mass(np.asarray(latents)[keep], model.mu[keep], model.sigma[keep])
    return float(-np.log2(np.maximum(p, PROB_FLOOR)).sum())
