"""Conditional-I video codec with probability-based entropy skipping."""

from .codec import (CodecState, decode_ci, decode_i, decode_p, decode_sequence, encode_ci,
                    encode_frames, encode_i, encode_p, encode_sequence, schedule)
from .core import (QUANT_TABLE, BitstreamError, CodecConfig, CodecError, ConfigError,
                   FeatureTensor, Frame, FrameStat, FrameType, MotionField, PriorCoefficients,
                   RDPoint, validate_config)
from .entropy import GaussianModel, decode_latents, encode_latents, ideal_rate, skip_mask
from .evaluation import analyze_drift, analyze_skip, bd_rate, psnr, rd_sweep
from .io import SequenceHeader, Y4MError, read_container, read_y4m, write_container, write_y4m

__version__ = "0.1.0"

__all__ = [
    "BitstreamError", "CodecConfig", "CodecError", "CodecState", "ConfigError", "FeatureTensor",
    "Frame", "FrameStat", "FrameType", "GaussianModel", "MotionField", "PriorCoefficients",
    "QUANT_TABLE", "RDPoint", "SequenceHeader", "Y4MError", "analyze_drift", "analyze_skip",
    "bd_rate", "decode_ci", "decode_i", "decode_latents", "decode_p", "decode_sequence",
    "encode_ci", "encode_frames", "encode_i", "encode_latents", "encode_p", "encode_sequence",
    "ideal_rate", "psnr", "rd_sweep", "read_container", "read_y4m", "schedule", "skip_mask",
    "validate_config", "write_container", "write_y4m",
]
