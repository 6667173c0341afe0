"""Y4M ingestion and the ``.civ`` container.

Container layout (all multi-byte fields little-endian)::

    SequenceHeader (20 bytes)
        magic        4s   b"CIV1"
        version      u8   1
        width        u16
        height       u16
        bitdepth     u8
        gop_size     u8
        quality      u8
        tau_sigma    f32
        frame_count  u32
    FrameRecord * frame_count
        frame_type     u8   0=I 1=P 2=cI
        payload_count  u8
        payload * payload_count
            stream_id  u8   0=image 1=motion 2=residual
            length     u32
            bytes      length
"""

from __future__ import annotations

import struct
from io import BytesIO
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .core import BitstreamError, Frame, FrameType

MAGIC = b"CIV1"
VERSION = 1
HEADER = struct.Struct("<4sBHHBBBfI")
PAYLOAD_HEAD = struct.Struct("<BI")

STREAM_IMAGE = 0
STREAM_MOTION = 1
STREAM_RESIDUAL = 2

# required stream order per frame type: motion always precedes residual/image
STREAMS = {
    FrameType.I: (STREAM_IMAGE,),
    FrameType.P: (STREAM_MOTION, STREAM_RESIDUAL),
    FrameType.CI: (STREAM_MOTION, STREAM_IMAGE),
}


class Y4MError(ValueError):
    """Malformed or unsupported YUV4MPEG2 input."""


@dataclass(frozen=True)
class SequenceHeader:
    width: int
    height: int
    frame_count: int
    gop_size: int = 20
    quality_index: int = 2
    tau_sigma: float = 0.16
    bitdepth: int = 8
    version: int = VERSION

    def __post_init__(self):
        # stored as f32 on disk; keep the in-memory value identical
        object.__setattr__(self, "tau_sigma", float(np.float32(self.tau_sigma)))


@dataclass(frozen=True)
class FrameRecord:
    frame_type: FrameType
    payloads: tuple[tuple[int, bytes], ...]

    def stream(self, stream_id: int) -> bytes:
        for sid, data in self.payloads:
            if sid == stream_id:
                return data
        raise BitstreamError(f"stream {stream_id} missing from {self.frame_type.label}-frame")

    @property
    def nbytes(self) -> int:
        return sum(len(d) for _, d in self.payloads)


def check_record(record: FrameRecord) -> None:
    """Raise BitstreamError unless the record carries exactly its type's streams, in order."""
    try:
        ftype = FrameType(record.frame_type)
    except ValueError:
        raise BitstreamError(f"unknown frame_type {record.frame_type}") from None
    ids = tuple(sid for sid, _ in record.payloads)
    if ids != STREAMS[ftype]:
        raise BitstreamError(
            f"{ftype.label}-frame must carry streams {STREAMS[ftype]} in order, got {ids}")


# -- container ---------------------------------------------------------------

def write_container(header: SequenceHeader, records: Iterable[FrameRecord]) -> bytes:
    records = list(records)
    if header.width <= 0 or header.height <= 0:
        raise BitstreamError("width and height must be nonzero")
    if len(records) != header.frame_count:
        raise BitstreamError(f"header announces {header.frame_count} frames, got {len(records)}")
    out = bytearray(HEADER.pack(MAGIC, header.version, header.width, header.height,
                                header.bitdepth, header.gop_size, header.quality_index,
                                header.tau_sigma, header.frame_count))
    for rec in records:
        check_record(rec)
        out += struct.pack("<BB", int(rec.frame_type), len(rec.payloads))
        for sid, data in rec.payloads:
            out += PAYLOAD_HEAD.pack(sid, len(data))
            out += data
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise BitstreamError(f"truncated {what}")
        chunk = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return chunk


def read_container(source) -> tuple[SequenceHeader, list[FrameRecord]]:
    data = source if isinstance(source, (bytes, bytearray, memoryview)) else source.read()
    rd = _Reader(bytes(data))
    fields = HEADER.unpack(rd.take(HEADER.size, "header"))
    magic, version, width, height, bitdepth, gop, quality, tau, count = fields
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    if width == 0 or height == 0:
        raise BitstreamError("width and height must be nonzero")
    header = SequenceHeader(width, height, count, gop, quality, tau, bitdepth, version)
    records = []
    for _ in range(count):
        ftype, npay = rd.take(2, "frame record")
        try:
            ftype = FrameType(ftype)
        except ValueError:
            raise BitstreamError(f"unknown frame_type {ftype}") from None
        payloads = []
        for _ in range(npay):
            sid, length = PAYLOAD_HEAD.unpack(rd.take(PAYLOAD_HEAD.size, "payload header"))
            payloads.append((sid, rd.take(length, "payload")))
        rec = FrameRecord(ftype, tuple(payloads))
        check_record(rec)
        records.append(rec)
    if rd.pos != len(rd.data):
        raise BitstreamError(f"{len(rd.data) - rd.pos} trailing bytes after last frame")
    return header, records


# -- Y4M ---------------------------------------------------------------------

def _parse_params(tokens: list[bytes]) -> dict[str, str]:
    params = {}
    for tok in tokens:
        if tok:
            params[chr(tok[0])] = tok[1:].decode("ascii", "replace")
    return params


def _chroma_size(colorspace: str, w: int, h: int) -> int:
    if colorspace.startswith("420"):
        return 2 * ((w + 1) // 2) * ((h + 1) // 2)
    if colorspace.startswith("mono"):
        return 0
    raise Y4MError(f"unsupported colorspace C{colorspace}")


def _y4m_header(stream: BinaryIO) -> tuple[int, int, int]:
    line = stream.readline()
    if not line.startswith(b"YUV4MPEG2") or not line.endswith(b"\n"):
        raise Y4MError("missing YUV4MPEG2 signature")
    params = _parse_params(line.strip().split(b" ")[1:])
    try:
        w, h = int(params["W"]), int(params["H"])
    except (KeyError, ValueError):
        raise Y4MError("header lacks valid W/H") from None
    if w <= 0 or h <= 0:
        raise Y4MError(f"invalid geometry {w}x{h}")
    return h, w, _chroma_size(params.get("C", "420"), w, h)


def _y4m_frames(stream: BinaryIO, h: int, w: int, chroma: int) -> Iterator[Frame]:
    index = 0
    while True:
        tag = stream.readline()
        if not tag:
            return
        if not tag.startswith(b"FRAME"):
            raise Y4MError(f"expected FRAME marker at frame {index}")
        luma = stream.read(w * h)
        rest = stream.read(chroma) if chroma else b""
        if len(luma) != w * h or len(rest) != chroma:
            raise Y4MError(f"truncated payload in frame {index}")
        yield Frame(np.frombuffer(luma, np.uint8).reshape(h, w), index)
        index += 1


def iter_y4m(stream: BinaryIO) -> Iterator[Frame]:
    """Yield luma frames from a YUV4MPEG2 stream (C420* or Cmono, 8-bit)."""
    h, w, chroma = _y4m_header(stream)
    yield from _y4m_frames(stream, h, w, chroma)


def read_y4m(source, with_geometry: bool = False):
    """All luma frames of a Y4M file or byte string.

    With ``with_geometry`` returns ``(frames, (height, width))``, which also
    covers files holding no frames.
    """
    if isinstance(source, (bytes, bytearray)):
        source = BytesIO(source)
    h, w, chroma = _y4m_header(source)
    frames = list(_y4m_frames(source, h, w, chroma))
    return (frames, (h, w)) if with_geometry else frames


def write_y4m(frames: Iterable[Frame], stream: BinaryIO, fps: str = "30:1",
              geometry: tuple[int, int] | None = None) -> None:
    """Write luma-only frames as ``Cmono`` Y4M.

    ``geometry`` (height, width) is needed only when ``frames`` is empty.
    """
    frames = list(frames)
    if frames:
        geometry = frames[0].geometry
    if geometry is None:
        raise Y4MError("geometry required for an empty sequence")
    h, w = geometry
    stream.write(f"YUV4MPEG2 W{w} H{h} F{fps} Ip A1:1 Cmono\n".encode("ascii"))
    for f in frames:
        if f.geometry != (h, w):
            raise Y4MError("frames must share one geometry")
        stream.write(b"FRAME\n")
        stream.write(np.ascontiguousarray(f.plane, dtype=np.uint8).tobytes())
