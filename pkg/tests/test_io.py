import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from civc import BitstreamError, Frame, FrameType, SequenceHeader, Y4MError
from civc.io import (HEADER, STREAMS, FrameRecord, read_container, read_y4m, write_container,
                     write_y4m)


def header_width():
    # magic, version, width, height, bitdepth, gop, quality, tau, frame_count
    widths = [4, 1, 2, 2, 1, 1, 1, 4, 4]
    return sum(widths)


def test_empty_container_is_header_only():
    data = write_container(SequenceHeader(16, 8, 0), [])
    assert len(data) == header_width() == HEADER.size == 20
    header, records = read_container(data)
    assert records == [] and header.width == 16 and header.height == 8


def _record(ftype, rng_bytes):
    return FrameRecord(ftype, tuple((sid, rng_bytes) for sid in STREAMS[ftype]))


records_st = st.lists(
    st.tuples(st.sampled_from(list(FrameType)), st.lists(st.binary(max_size=40), min_size=2, max_size=2)),
    max_size=6,
).map(lambda items: [FrameRecord(t, tuple(zip(STREAMS[t], blobs))) for t, blobs in items])


@settings(max_examples=60, deadline=None)
@given(records=records_st,
       width=st.integers(1, 65535), height=st.integers(1, 65535),
       gop=st.integers(1, 255), quality=st.integers(0, 5),
       tau=st.floats(0, 63, allow_nan=False, width=32))
def test_container_round_trip(records, width, height, gop, quality, tau):
    header = SequenceHeader(width, height, len(records), gop, quality, tau)
    data = write_container(header, records)
    h2, r2 = read_container(data)
    assert h2 == header
    assert r2 == records
    assert len(data) == HEADER.size + sum(2 + 5 * len(r.payloads) + r.nbytes for r in records)


def test_tau_is_stored_as_float32():
    h = SequenceHeader(4, 4, 0, tau_sigma=0.16)
    assert h.tau_sigma == float(np.float32(0.16))
    assert read_container(write_container(h, []))[0].tau_sigma == h.tau_sigma


def _valid():
    recs = [_record(FrameType.I, b"ab"), _record(FrameType.P, b"c"), _record(FrameType.CI, b"")]
    return write_container(SequenceHeader(8, 8, 3), recs)


def test_three_frame_structure():
    header, recs = read_container(_valid())
    assert [r.frame_type for r in recs] == [FrameType.I, FrameType.P, FrameType.CI]
    assert recs[1].stream(2) == b"c"


@pytest.mark.parametrize("mutate, message", [
    (lambda d: b"XXXX" + d[4:], "magic"),
    (lambda d: d[:4] + b"\x02" + d[5:], "version"),
    (lambda d: d[:5] + b"\x00\x00" + d[7:], "width"),
    (lambda d: d[:-1], "truncated"),
    (lambda d: d + b"\x00", "trailing"),
    (lambda d: d[:20] + b"\x07" + d[21:], "frame_type"),
])
def test_corrupt_containers(mutate, message):
    with pytest.raises(BitstreamError, match=message):
        read_container(mutate(_valid()))


def test_stream_invariants():
    with pytest.raises(BitstreamError):
        write_container(SequenceHeader(8, 8, 1), [FrameRecord(FrameType.P, ((1, b""),))])
    with pytest.raises(BitstreamError):
        write_container(SequenceHeader(8, 8, 1), [FrameRecord(FrameType.CI, ((0, b""), (1, b"")))])
    with pytest.raises(BitstreamError):
        write_container(SequenceHeader(0, 8, 0), [])
    with pytest.raises(BitstreamError):
        write_container(SequenceHeader(8, 8, 2), [_record(FrameType.I, b"")])
    # reordered P streams on the wire
    bad = HEADER.pack(b"CIV1", 1, 8, 8, 8, 20, 2, 0.16, 1) + bytes([1, 2, 2, 0, 0, 0, 0, 1, 0, 0, 0, 0])
    with pytest.raises(BitstreamError, match="order"):
        read_container(bad)


def _y4m(w, h, frames, colorspace="mono", extra=0):
    out = f"YUV4MPEG2 W{w} H{h} F30:1 Ip C{colorspace}\n".encode()
    for f in frames:
        out += b"FRAME\n" + f.tobytes() + bytes(extra)
    return out


def test_mono_y4m():
    planes = [np.arange(16, dtype=np.uint8).reshape(4, 4), np.full((4, 4), 9, np.uint8)]
    frames = read_y4m(_y4m(4, 4, planes))
    assert len(frames) == 2 and all(f.plane.size == 16 for f in frames)
    assert np.array_equal(frames[0].plane, planes[0])
    assert frames[1].frame_index == 1


def test_420_chroma_ignored():
    plane = np.arange(15, dtype=np.uint8).reshape(3, 5)
    chroma = 2 * 3 * 2  # ceil(5/2) * ceil(3/2) per plane
    raw = _y4m(5, 3, [plane, plane], "420jpeg", extra=chroma)
    frames = read_y4m(raw)
    assert len(frames) == 2 and np.array_equal(frames[1].plane, plane)
    # no C tag defaults to 420
    raw = raw.replace(b" C420jpeg", b"")
    assert len(read_y4m(raw)) == 2


@pytest.mark.parametrize("raw", [
    b"NOTY4M W4 H4\n",
    b"YUV4MPEG2 W0 H4\n",
    b"YUV4MPEG2 H4\n",
    b"YUV4MPEG2 W4 H4 C444\nFRAME\n" + bytes(48),
    b"YUV4MPEG2 W4 H4 Cmono\nFRAME\n" + bytes(10),
    b"YUV4MPEG2 W4 H4 Cmono\nFRAMX\n" + bytes(16),
])
def test_bad_y4m(raw):
    with pytest.raises(Y4MError):
        read_y4m(raw)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_y4m_round_trip(w, h, n, seed):
    rng = np.random.default_rng(seed)
    frames = [Frame(rng.integers(0, 256, (h, w)), i) for i in range(n)]
    buf = io.BytesIO()
    write_y4m(frames, buf, geometry=(h, w))
    back, geometry = read_y4m(buf.getvalue(), with_geometry=True)
    assert geometry == (h, w)
    assert [f.plane.tolist() for f in back] == [f.plane.tolist() for f in frames]


def test_write_y4m_needs_geometry_when_empty():
    with pytest.raises(Y4MError):
        write_y4m([], io.BytesIO())
