"""I / P / cI frame pipelines, decode-order contracts and GoP scheduling.

Every encoder reconstructs through the same functions the decoder calls, on
the same quantized latents, so encoder and decoder reconstructions agree bit
for bit. Decoders only touch the record, the previous reconstruction and the
latent memories held in :class:`CodecState`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import entropy, motion, transforms
from .core import (BitstreamError, CodecConfig, ConfigError, FeatureTensor, Frame, FrameType,
                   MotionField, validate_config)
from .entropy import GaussianModel
from .io import (STREAM_IMAGE, STREAM_MOTION, STREAM_RESIDUAL, FrameRecord,
                 SequenceHeader, check_record, read_container, write_container)

SCHEDULES = ("full", "p-only", "ci-only")


@dataclass(frozen=True)
class CodecState:
    recon: Optional[Frame] = None
    prev_motion: Optional[np.ndarray] = None
    prev_residual: Optional[np.ndarray] = None
    frame_counter: int = 0


@dataclass(frozen=True)
class StreamTrace:
    """Pre-quantization latents of one coded stream, kept for analysis."""

    frame_index: int
    frame_type: FrameType
    stream_id: int
    values: np.ndarray
    model: GaussianModel


@dataclass(frozen=True)
class EncodedFrame:
    frame_type: FrameType
    record: FrameRecord
    recon: Frame


def schedule(frame_index: int, gop_size: int, variant: str = "full") -> FrameType:
    """Frame type at ``frame_index``.

    ``full``: I first, cI at every later GoP head, P elsewhere.
    ``p-only``: I at every GoP head, P elsewhere.
    ``ci-only``: I first, cI everywhere else.
    """
    if frame_index < 0 or gop_size < 1:
        raise ValueError("frame_index must be >= 0 and gop_size >= 1")
    if frame_index == 0:
        return FrameType.I
    if variant == "full":
        return FrameType.CI if frame_index % gop_size == 0 else FrameType.P
    if variant == "p-only":
        return FrameType.I if frame_index % gop_size == 0 else FrameType.P
    if variant == "ci-only":
        return FrameType.CI
    raise ValueError(f"unknown schedule variant {variant!r}")


def _tau(cfg: CodecConfig) -> float:
    # the container stores tau as f32; both sides must threshold on that value
    return float(np.float32(cfg.tau_sigma))


def _code(values, model, cfg, quantize, trace, tag):
    if trace is not None:
        trace.append(StreamTrace(*tag, values=np.asarray(values, np.float32), model=model))
    if not quantize:
        return np.asarray(values, np.float32), b""
    latents, mask = entropy.apply_skip(values, model, _tau(cfg))
    return latents, entropy.encode_latents(latents, model, mask)


def _decode(payload, model, cfg):
    return entropy.decode_latents(payload, model, _tau(cfg), model.shape)


def _motion_model(ref_feat, state, cfg):
    return transforms.predict_motion_prior(ref_feat, state.prev_motion, cfg.cell_size,
                                           cfg.feature_qstep, cfg.prior)


def _motion_from_latents(latents, cfg) -> MotionField:
    return MotionField(transforms.synthesis(latents, cfg.motion_qstep).data, cfg.cell_size)


def _require_reference(state: CodecState):
    if state is None or state.recon is None:
        raise ValueError("inter frame requires a reconstructed reference in the codec state")


def _encode_motion(frame, state, cfg, quantize, trace, ftype):
    """Predict, code and reconstruct motion. Returns (F_ref, F_cur, m_hat, M_hat, payload)."""
    s = cfg.feature_scale
    ref_feat = transforms.extract_features(state.recon, s)
    cur_feat = transforms.extract_features(frame, s)
    m = motion.predict_motion(state.recon, frame, ref_feat, cur_feat,
                              cfg.search_radius, cfg.refine_radius, cfg.cell_size)
    values = transforms.analysis(m.vectors, cfg.motion_qstep)
    model = _motion_model(ref_feat, state, cfg)
    m_hat, payload = _code(values, model, cfg, quantize, trace,
                           (frame.frame_index, ftype, STREAM_MOTION))
    return ref_feat, cur_feat, m_hat, _motion_from_latents(m_hat, cfg), payload


def _decode_motion(record, state, cfg):
    ref_feat = transforms.extract_features(state.recon, cfg.feature_scale)
    model = _motion_model(ref_feat, state, cfg)
    m_hat = _decode(record.stream(STREAM_MOTION), model, cfg)
    return ref_feat, m_hat, _motion_from_latents(m_hat, cfg)


# -- I ------------------------------------------------------------------------

def _intra_model(shape, cfg):
    return transforms.predict_intra_prior(shape, cfg.qstep, cfg.prior)


def _intra_recon(latents, cfg, geometry, index):
    feat = transforms.synthesis(latents, cfg.feature_qstep, cfg.feature_scale)
    return transforms.synthesize_frame(feat, geometry, index)


def encode_i(frame: Frame, cfg: CodecConfig, trace=None):
    """Code ``frame`` with no reference. Returns (record, reconstruction, new state)."""
    feat = transforms.extract_features(frame, cfg.feature_scale)
    values = transforms.analysis(feat, cfg.feature_qstep)
    model = _intra_model(values.shape, cfg)
    y_hat, payload = _code(values, model, cfg, True, trace,
                           (frame.frame_index, FrameType.I, STREAM_IMAGE))
    recon = _intra_recon(y_hat, cfg, frame.geometry, frame.frame_index)
    record = FrameRecord(FrameType.I, ((STREAM_IMAGE, payload),))
    return record, recon, CodecState(recon, None, None, frame.frame_index + 1)


def decode_i(record: FrameRecord, cfg: CodecConfig, geometry: tuple[int, int], frame_index: int = 0):
    _check_type(record, FrameType.I)
    h, w = geometry
    s = cfg.feature_scale
    hf, wf = -(-h // (2 * s)) * 2, -(-w // (2 * s)) * 2
    model = _intra_model((s * s, hf, wf), cfg)
    y_hat = _decode(record.stream(STREAM_IMAGE), model, cfg)
    recon = _intra_recon(y_hat, cfg, geometry, frame_index)
    return recon, CodecState(recon, None, None, frame_index + 1)


# -- P ------------------------------------------------------------------------

def _residual_model(pred, state, cfg):
    return transforms.predict_residual_prior(pred, state.prev_residual, cfg.feature_qstep, cfg.prior)


def _p_recon(r_hat, pred, cfg, geometry, index):
    feat = transforms.synthesis(r_hat, cfg.feature_qstep, cfg.feature_scale)
    rec_feat = feat.data + pred.data
    return transforms.synthesize_frame(
        FeatureTensor(rec_feat, cfg.feature_scale), geometry, index), rec_feat


def encode_p(frame: Frame, state: CodecState, cfg: CodecConfig, quantize: bool = True,
             trace=None, return_features: bool = False):
    """Code ``frame`` as motion plus feature-space residual against ``state.recon``.

    ``quantize=False`` is a test hook: latents pass through unrounded and the
    record payloads are empty. ``return_features`` appends (F, F_hat).
    """
    _require_reference(state)
    if frame.geometry != state.recon.geometry:
        raise ValueError("frame geometry differs from the reference")
    ref_feat, cur_feat, m_hat, m_rec, mpay = _encode_motion(
        frame, state, cfg, quantize, trace, FrameType.P)
    pred = motion.align(ref_feat, m_rec)
    residual = cur_feat.data - pred.data
    values = transforms.analysis(residual, cfg.feature_qstep)
    model = _residual_model(pred, state, cfg)
    r_hat, rpay = _code(values, model, cfg, quantize, trace,
                        (frame.frame_index, FrameType.P, STREAM_RESIDUAL))
    recon, rec_feat = _p_recon(r_hat, pred, cfg, frame.geometry, frame.frame_index)
    record = FrameRecord(FrameType.P, ((STREAM_MOTION, mpay), (STREAM_RESIDUAL, rpay)))
    new_state = CodecState(recon, m_hat, r_hat, frame.frame_index + 1)
    if return_features:
        return record, recon, new_state, cur_feat.data, rec_feat
    return record, recon, new_state


def decode_p(record: FrameRecord, state: CodecState, cfg: CodecConfig, frame_index: int = None):
    """Motion first (priors from F_ref, m_prev), then residual (priors from F_pred, r_prev)."""
    _check_type(record, FrameType.P)
    _require_reference(state)
    index = state.frame_counter if frame_index is None else frame_index
    ref_feat, m_hat, m_rec = _decode_motion(record, state, cfg)
    pred = motion.align(ref_feat, m_rec)
    model = _residual_model(pred, state, cfg)
    r_hat = _decode(record.stream(STREAM_RESIDUAL), model, cfg)
    recon, _ = _p_recon(r_hat, pred, cfg, state.recon.geometry, index)
    return recon, CodecState(recon, m_hat, r_hat, index + 1)


# -- cI -----------------------------------------------------------------------

def _fresh_chain(state: CodecState) -> CodecState:
    # a cI frame starts a new prediction chain: no temporal latent memory
    return replace(state, prev_motion=None, prev_residual=None)


def encode_ci(frame: Frame, state: CodecState, cfg: CodecConfig, trace=None):
    """Code ``frame`` alone; the aligned reference conditions only the entropy model."""
    _require_reference(state)
    if frame.geometry != state.recon.geometry:
        raise ValueError("frame geometry differs from the reference")
    state = _fresh_chain(state)
    ref_feat, cur_feat, m_hat, m_rec, mpay = _encode_motion(
        frame, state, cfg, True, trace, FrameType.CI)
    aligned = motion.align(ref_feat, m_rec)
    values = transforms.analysis(cur_feat, cfg.feature_qstep)
    model = transforms.predict_ci_prior(aligned, cfg.feature_qstep, cfg.prior)
    y_hat, ypay = _code(values, model, cfg, True, trace,
                        (frame.frame_index, FrameType.CI, STREAM_IMAGE))
    recon = _intra_recon(y_hat, cfg, frame.geometry, frame.frame_index)
    record = FrameRecord(FrameType.CI, ((STREAM_MOTION, mpay), (STREAM_IMAGE, ypay)))
    return record, recon, CodecState(recon, m_hat, None, frame.frame_index + 1)


def decode_ci(record: FrameRecord, state: CodecState, cfg: CodecConfig, frame_index: int = None):
    _check_type(record, FrameType.CI)
    _require_reference(state)
    index = state.frame_counter if frame_index is None else frame_index
    state = _fresh_chain(state)
    ref_feat, m_hat, m_rec = _decode_motion(record, state, cfg)
    aligned = motion.align(ref_feat, m_rec)
    model = transforms.predict_ci_prior(aligned, cfg.feature_qstep, cfg.prior)
    y_hat = _decode(record.stream(STREAM_IMAGE), model, cfg)
    recon = _intra_recon(y_hat, cfg, state.recon.geometry, index)
    return recon, CodecState(recon, m_hat, None, index + 1)


def _check_type(record: FrameRecord, expected: FrameType):
    if record.frame_type != expected:
        raise BitstreamError(f"expected a {expected.label}-frame record, got {record.frame_type.label}")
    check_record(record)


# -- sequences ----------------------------------------------------------------

def encode_frames(frames: Sequence[Frame], cfg: CodecConfig, variant: str = "full",
                  trace=None) -> list[EncodedFrame]:
    """Encode ``frames`` in order under the chosen schedule variant."""
    validate_config(cfg)
    if not frames:
        raise ValueError("nothing to encode")
    geometry = frames[0].geometry
    state = CodecState()
    out = []
    for i, frame in enumerate(frames):
        if frame.geometry != geometry:
            raise ValueError(f"frame {i} geometry {frame.geometry} != {geometry}")
        frame = replace(frame, frame_index=i) if frame.frame_index != i else frame
        ftype = schedule(i, cfg.gop_size, variant)
        if ftype is FrameType.I:
            record, recon, state = encode_i(frame, cfg, trace)
        elif ftype is FrameType.P:
            record, recon, state = encode_p(frame, state, cfg, trace=trace)
        else:
            record, recon, state = encode_ci(frame, state, cfg, trace)
        out.append(EncodedFrame(ftype, record, recon))
    return out


def sequence_header(frames: Sequence[Frame], cfg: CodecConfig) -> SequenceHeader:
    h, w = frames[0].geometry
    return SequenceHeader(w, h, len(frames), cfg.gop_size, cfg.quality_index,
                          _tau(cfg), frames[0].bitdepth)


def encode_sequence(frames: Sequence[Frame], cfg: CodecConfig = CodecConfig(),
                    variant: str = "full") -> bytes:
    encoded = encode_frames(frames, cfg, variant)
    return write_container(sequence_header(frames, cfg), [e.record for e in encoded])


def config_from_header(header: SequenceHeader, base: Optional[CodecConfig] = None) -> CodecConfig:
    """Decoder configuration: header fields override ``base`` (default config)."""
    cfg = replace(base or CodecConfig(), gop_size=header.gop_size,
                  quality_index=header.quality_index, tau_sigma=header.tau_sigma)
    try:
        return validate_config(cfg)
    except ConfigError as exc:
        raise BitstreamError(f"header carries an invalid configuration: {exc}") from None


def decode_records(header: SequenceHeader, records: Sequence[FrameRecord],
                   base: Optional[CodecConfig] = None) -> list[Frame]:
    cfg = config_from_header(header, base)
    geometry = (header.height, header.width)
    state = CodecState()
    frames = []
    for i, record in enumerate(records):
        if record.frame_type is FrameType.I:
            recon, state = decode_i(record, cfg, geometry, i)
        elif record.frame_type is FrameType.P:
            recon, state = decode_p(record, state, cfg, i)
        else:
            recon, state = decode_ci(record, state, cfg, i)
        frames.append(recon)
    return frames


def decode_sequence(data: bytes, base: Optional[CodecConfig] = None) -> list[Frame]:
    header, records = read_container(data)
    return decode_records(header, records, base)
