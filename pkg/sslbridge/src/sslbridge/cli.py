"""Command line: export features (and optionally x-vectors) for an audio list."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export_features, export_xvectors, read_audio_list
from .models import SUPPORTED_MODELS, ModelUnavailableError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sslbridge",
                                     description="Export pretrained speech features")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="run a pretrained model over an audio list")
    p.add_argument("--model", required=True,
                   help="one of: " + ", ".join(SUPPORTED_MODELS))
    p.add_argument("--audio", required=True,
                   help="list file: utterance_id<TAB>subject_id<TAB>wav_path")
    p.add_argument("--out", required=True)
    p.add_argument("--xvectors", action="store_true",
                   help="also export per-utterance and per-subject x-vectors")
    p.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        items = read_audio_list(args.audio)
        job = ExportJob(args.model, items, args.out, args.device)
        written = export_features(job)
        if args.xvectors:
            written += export_xvectors(job)
    except ModelUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
