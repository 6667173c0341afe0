"""Shared value types, configuration and arithmetic conventions.

All model-path arithmetic (prior prediction, mu, sigma) is carried out in
float32. Reductions that feed a float32 result (block statistics, the DCT)
are evaluated in float64 with a fixed order and rounded once to float32, so
an encoder and a decoder running the same code produce identical grids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SAMPLE_MAX = 255
QUANT_TABLE = (8.0, 12.0, 17.0, 24.0, 34.0, 48.0)


class CodecError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CodecError, ValueError):
    """A configuration value violates its invariant.

    ``field`` names the offending attribute.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class BitstreamError(CodecError):
    """Malformed, truncated or inconsistent compressed data."""


class FrameType(enum.IntEnum):
    I = 0
    P = 1
    CI = 2

    @property
    def label(self) -> str:
        return "cI" if self is FrameType.CI else self.name


def round_half_away(x):
    """Round to nearest integer, ties away from zero (float64 result)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Frame:
    plane: np.ndarray
    frame_index: int = 0
    bitdepth: int = 8

    def __post_init__(self):
        plane = np.asarray(self.plane)
        if plane.ndim != 2 or plane.shape[0] == 0 or plane.shape[1] == 0:
            raise ValueError(f"frame plane must be a non-empty 2-D array, got shape {plane.shape}")
        if not np.issubdtype(plane.dtype, np.integer):
            raise ValueError("frame samples must be integers")
        hi = (1 << self.bitdepth) - 1
        if plane.min() < 0 or plane.max() > hi:
            raise ValueError(f"samples outside [0, {hi}]")
        dtype = np.uint8 if self.bitdepth <= 8 else np.uint16
        object.__setattr__(self, "plane", _frozen(plane.astype(dtype)))

    @property
    def height(self) -> int:
        return self.plane.shape[0]

    @property
    def width(self) -> int:
        return self.plane.shape[1]

    @property
    def geometry(self) -> tuple[int, int]:
        return self.height, self.width


@dataclass(frozen=True)
class FeatureTensor:
    """(channels, height_f, width_f) float32 samples at 1/scale resolution."""

    data: np.ndarray
    scale: int = 2

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"feature data must be 3-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature tensor contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height_f(self) -> int:
        return self.data.shape[1]

    @property
    def width_f(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class MotionField:
    """One (dx, dy) vector per cell; ``vectors`` has shape (2, rows, cols).

    A vector (dx, dy) at a cell means the samples of that cell are predicted
    from the reference at (x + dx, y + dy).
    """

    vectors: np.ndarray
    cell_size: int

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 3 or v.shape[0] != 2:
            raise ValueError(f"motion vectors must have shape (2, rows, cols), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("motion field contains non-finite values")
        object.__setattr__(self, "vectors", _frozen(v))

    @property
    def dx(self) -> np.ndarray:
        return self.vectors[0]

    @property
    def dy(self) -> np.ndarray:
        return self.vectors[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[1], self.vectors.shape[2]


@dataclass(frozen=True)
class PriorCoefficients:
    alpha: float = 0.75
    beta0: float = 0.10
    beta1: float = 0.05
    beta2: float = 0.20
    sigma_min: float = 0.01
    sigma_max: float = 64.0
    # I-frames have no decoder-side context: sigma falls with DCT frequency.
    intra_scale: float = 1024.0


@dataclass(frozen=True)
class CodecConfig:
    gop_size: int = 20
    quality_index: int = 2
    tau_sigma: float = 0.16
    search_radius: int = 16
    refine_radius: int = 2
    feature_scale: int = 2
    cell_size: int = 4
    motion_qstep: float = 0.25
    prior: PriorCoefficients = field(default_factory=PriorCoefficients)

    @property
    def qstep(self) -> float:
        """Quantizer step in sample units for the current quality index."""
        return QUANT_TABLE[self.quality_index]

    @property
    def feature_qstep(self) -> float:
        """The same step expressed in feature units (samples / SAMPLE_MAX)."""
        return self.qstep / SAMPLE_MAX

    @property
    def skip_enabled(self) -> bool:
        return self.tau_sigma > 0


def validate_config(cfg: CodecConfig) -> CodecConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError.

    ``tau_sigma == 0`` is accepted and means "skip disabled".
    """
    p = cfg.prior
    checks = [
        ("gop_size", 1 <= cfg.gop_size <= 255, "must be in [1, 255]"),
        ("quality_index", 0 <= cfg.quality_index < len(QUANT_TABLE),
         f"must be in [0, {len(QUANT_TABLE) - 1}]"),
        ("sigma_min", p.sigma_min > 0, "must be > 0"),
        ("sigma_max", p.sigma_max > p.sigma_min, "must exceed sigma_min"),
        ("tau_sigma", np.isfinite(cfg.tau_sigma) and 0 <= cfg.tau_sigma < p.sigma_max,
         "must be in [0, sigma_max)"),
        ("search_radius", cfg.search_radius >= 0, "must be >= 0"),
        ("refine_radius", cfg.refine_radius >= 0, "must be >= 0"),
        ("feature_scale", cfg.feature_scale >= 1, "must be >= 1"),
        ("cell_size", cfg.cell_size >= 1, "must be >= 1"),
        ("motion_qstep", cfg.motion_qstep > 0, "must be > 0"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise ConfigError(name, msg)
    return cfg


@dataclass(frozen=True)
class FrameStat:
    frame_index: int
    frame_type: FrameType
    bits: int
    psnr: float


@dataclass(frozen=True)
class RDPoint:
    width: int
    height: int
    frames: tuple[FrameStat, ...]
    quality_index: Optional[int] = None

    @property
    def bits_total(self) -> int:
        return sum(f.bits for f in self.frames)

    @property
    def bpp(self) -> float:
        return self.bits_total / (len(self.frames) * self.width * self.height)

    @property
    def psnr(self) -> float:
        """Mean per-frame PSNR (infinite frames excluded unless all are)."""
        vals = [f.psnr for f in self.frames if np.isfinite(f.psnr)]
        if not vals:
            return float("inf")
        return float(np.mean(vals))
