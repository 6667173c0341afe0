"""``civc`` command line: encode, decode and analyze.

Exit codes: 0 success, 2 usage, 3 I/O (including malformed Y4M), 4 bitstream.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import evaluation
from .codec import SCHEDULES, decode_sequence, encode_frames, sequence_header
from .core import (QUANT_TABLE, BitstreamError, CodecConfig, ConfigError, FrameStat, RDPoint,
                   validate_config)
from .io import SequenceHeader, Y4MError, read_container, read_y4m, write_container, write_y4m

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_BITSTREAM = 0, 2, 3, 4

_VARIANT_NAMES = {"full": "I+P+cI", "p-only": "I+P", "ci-only": "I+cI"}


class _UsageError(Exception):
    pass


def _quality(text: str) -> int:
    try:
        q = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= q < len(QUANT_TABLE):
        raise argparse.ArgumentTypeError(f"quality must be in 0..{len(QUANT_TABLE) - 1}")
    return q


def _qualities(text: str) -> list[int]:
    return [_quality(t) for t in text.split(",") if t.strip()]


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--quality", type=_quality, default=CodecConfig.quality_index,
                   help="index into the quantizer table (default %(default)s)")
    p.add_argument("--gop", type=int, default=CodecConfig.gop_size, help="GoP size (default %(default)s)")
    skip = p.add_mutually_exclusive_group()
    skip.add_argument("--tau-sigma", type=float, default=None,
                      help=f"skip threshold on sigma (default {CodecConfig.tau_sigma})")
    skip.add_argument("--no-skip", action="store_true", help="disable skipping (tau_sigma = 0)")
    p.add_argument("--schedule", choices=SCHEDULES, default="full")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="civc", description="Conditional-I video codec")
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="Y4M -> .civ")
    enc.add_argument("input")
    enc.add_argument("output")
    _add_codec_flags(enc)

    dec = sub.add_parser("decode", help=".civ -> Y4M (luma only)")
    dec.add_argument("input")
    dec.add_argument("output")

    ana = sub.add_parser("analyze", help="drift / skip / rd reports as CSV")
    ana.add_argument("input")
    ana.add_argument("--mode", choices=("drift", "skip", "rd"), required=True)
    ana.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    _add_codec_flags(ana)
    ana.add_argument("--qualities", type=_qualities, default=None,
                     help="comma-separated quality sweep for skip/rd (default: all)")
    ana.add_argument("--no-timing", action="store_true", help="skip mode: leave timing columns as nan")
    return parser


def _config(args) -> CodecConfig:
    tau = 0.0 if args.no_skip else (CodecConfig.tau_sigma if args.tau_sigma is None else args.tau_sigma)
    cfg = replace(CodecConfig(), quality_index=args.quality, gop_size=args.gop, tau_sigma=tau)
    try:
        return validate_config(cfg)
    except ConfigError as exc:
        raise _UsageError(str(exc)) from None


def _read_frames(path: str):
    with open(path, "rb") as fh:
        return read_y4m(fh, with_geometry=True)


def _summary(frames, encoded, out=None) -> None:
    out = out or sys.stderr
    if not frames:
        print("0 frames", file=out)
        return
    h, w = frames[0].geometry
    stats = [(e.frame_type, 8 * e.record.nbytes, evaluation.psnr(f, e.recon))
             for f, e in zip(frames, encoded)]
    total = sum(b for _, b, _ in stats)
    point = RDPoint(w, h, tuple(FrameStat(i, t, b, p) for i, (t, b, p) in enumerate(stats)), 0)
    for ft, (n, bits, ps) in evaluation.frame_type_summary(point).items():
        print(f"{ft.label:>2}: {n:4d} frames  {bits:10d} bits  {bits / (n * w * h):.4f} bpp  "
              f"{ps:.3f} dB", file=out)
    print(f"all: {len(frames):4d} frames  {total:10d} bits  {point.bpp:.4f} bpp  "
          f"{point.psnr:.3f} dB", file=out)


def cmd_encode(args) -> int:
    cfg = _config(args)
    frames, (h, w) = _read_frames(args.input)
    if frames:
        encoded = encode_frames(frames, cfg, args.schedule)
        data = write_container(sequence_header(frames, cfg), [e.record for e in encoded])
    else:
        encoded = []
        data = write_container(SequenceHeader(w, h, 0, cfg.gop_size, cfg.quality_index,
                                              cfg.tau_sigma), [])
    with open(args.output, "wb") as fh:
        fh.write(data)
    _summary(frames, encoded)
    return EXIT_OK


def cmd_decode(args) -> int:
    with open(args.input, "rb") as fh:
        data = fh.read()
    header, _ = read_container(data)
    frames = decode_sequence(data)
    with open(args.output, "wb") as fh:
        write_y4m(frames, fh, geometry=(header.height, header.width))
    print(f"decoded {len(frames)} frames {header.width}x{header.height}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    frames, _ = _read_frames(args.input)
    if not frames:
        raise _UsageError("analysis needs at least one frame")
    qualities = args.qualities or list(range(len(QUANT_TABLE)))
    try:
        if args.mode == "drift":
            report = evaluation.analyze_drift(frames, cfg, _VARIANT_NAMES[args.schedule])
            writer = lambda fh: evaluation.write_drift_csv(report, fh)
        elif args.mode == "skip":
            rows = evaluation.analyze_skip(frames, cfg, qualities, args.schedule,
                                           timing=not args.no_timing)
            writer = lambda fh: evaluation.write_skip_csv(rows, fh)
        else:
            points = evaluation.rd_sweep(frames, cfg, qualities, args.schedule)
            writer = lambda fh: evaluation.write_rd_csv(points, fh)
    except ValueError as exc:
        # too few frames for drift, etc.
        raise _UsageError(str(exc)) from None
    if args.out == "-":
        writer(sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            writer(fh)
    return EXIT_OK


COMMANDS = {"encode": cmd_encode, "decode": cmd_decode, "analyze": cmd_analyze}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"civc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BitstreamError as exc:
        print(f"civc: bitstream error: {exc}", file=sys.stderr)
        return EXIT_BITSTREAM
    except (OSError, Y4MError) as exc:
        print(f"civc: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
