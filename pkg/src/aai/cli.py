"""Command-line entry point.

Subcommands: preprocess, mfcc, synth, train, evaluate, adapt, report.
Exit codes: 0 success, 1 configuration/usage error, 2 data or format
error. Timestamps only ever go to the log file (AAI_LOG environment
variable), so outputs are byte-reproducible under a fixed --seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import artic, dsp, eval as evalmod, featio, net, synth, train
from .errors import (CheckpointMismatchError, ConfigError, EmptyResultError,
                     FormatError)

log = logging.getLogger("aai")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2


def _setup_logging(verbose: bool) -> None:
    handlers = []
    log_path = os.environ.get("AAI_LOG")
    if log_path:
        handlers.append(logging.FileHandler(log_path))
    if verbose:
        handlers.append(logging.StreamHandler(sys.stderr))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers or [logging.NullHandler()],
        force=True,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aai",
        description="Acoustic-to-articulatory inversion toolkit",
    )
    parser.add_argument("--seed", type=int, default=None, help="override every seeded step")
    parser.add_argument("--jobs", type=int, default=1, help="parallel independent runs")
    parser.add_argument("--verbose", action="store_true", help="log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="downsample/filter raw trajectories, augment to 24-d")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mfcc", help="extract MFCCs from manifest audio")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="JSON synthesis settings")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="run a training scheme from a config file")
    p.add_argument("--config", required=True)

    p = sub.add_parser("evaluate", help="score a checkpoint over a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="eval_out")
    p.add_argument("--subject", default=None)
    p.add_argument("--split", default="test", choices=["test", "train", "all"])

    p = sub.add_parser("adapt", help="fine-tune a held-out-subject model on t%% of its data")
    p.add_argument("--config", required=True)
    p.add_argument("--t", type=float, required=True)

    p = sub.add_parser("report", help="render tables or plot data from run records")
    p.add_argument("--runs", required=True)
    p.add_argument("--kind", required=True,
                   choices=["tables", "adaptation_curve", "articulator_box"])
    p.add_argument("--out", default=None)
    return parser


def cmd_preprocess(args) -> int:
    manifest = featio.load_manifest(args.manifest)
    out_dir = Path(args.out)
    (out_dir / "artic24").mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in manifest.entries:
        seq = featio.read_feature_file(manifest.resolve(entry.articulatory_path))
        if seq.dim != artic.NUM_CHANNELS or seq.frame_rate_hz != 200.0:
            raise FormatError(f"{entry.articulatory_path}: expected 12-d 200 Hz trajectories")
        augmented = artic.augment_kinematics(artic.preprocess_trajectory(seq.frames))
        rel = f"artic24/{entry.utterance_id}.aaif"
        featio.write_feature_file(out_dir / rel,
                                  featio.FeatureSequence(augmented.frames, 100.0, "ema24"))
        entries.append(featio.ManifestEntry(
            entry.utterance_id, entry.subject_id, entry.group,
            entry.acoustic_path if Path(entry.acoustic_path).is_absolute()
            else str(manifest.resolve(entry.acoustic_path)),
            rel,
            entry.embedding_path if Path(entry.embedding_path).is_absolute()
            else str(manifest.resolve(entry.embedding_path)),
            entry.split, entry.fold))
        log.info("preprocessed %s (%d frames)", entry.utterance_id, augmented.num_frames)
    featio.save_manifest(featio.CorpusManifest(entries, out_dir), out_dir / "manifest.tsv")
    print(f"wrote {len(entries)} trajectories to {out_dir}")
    return EXIT_OK


def cmd_mfcc(args) -> int:
    manifest = featio.load_manifest(args.manifest)
    out_dir = Path(args.out)
    (out_dir / "mfcc").mkdir(parents=True, exist_ok=True)
    cfg = dsp.MfccConfig()
    entries = []
    for entry in manifest.entries:
        wav = dsp.read_wav(manifest.resolve(entry.acoustic_path))
        wav = dsp.resample_to(wav, dsp.MFCC_SAMPLE_RATE_HZ)
        feats = dsp.mfcc(wav, cfg)
        rel = f"mfcc/{entry.utterance_id}.aaif"
        featio.write_feature_file(out_dir / rel, feats)
        entries.append(featio.ManifestEntry(
            entry.utterance_id, entry.subject_id, entry.group,
            rel,
            entry.articulatory_path if Path(entry.articulatory_path).is_absolute()
            else str(manifest.resolve(entry.articulatory_path)),
            entry.embedding_path if Path(entry.embedding_path).is_absolute()
            else str(manifest.resolve(entry.embedding_path)),
            entry.split, entry.fold))
        log.info("mfcc %s (%d frames)", entry.utterance_id, feats.num_frames)
    featio.save_manifest(featio.CorpusManifest(entries, out_dir), out_dir / "manifest.tsv")
    print(f"wrote {len(entries)} MFCC files to {out_dir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise ConfigError(f"synthesis spec not found: {spec_path}")
    raw = json.loads(spec_path.read_text(encoding="utf-8"))
    if args.seed is not None:
        raw["seed"] = args.seed
    if "duration_range_s" in raw:
        raw["duration_range_s"] = tuple(raw["duration_range_s"])
    spec = synth.SynthSpec(**raw)
    manifest = synth.generate_corpus(spec, args.out)
    print(f"generated {len(manifest.entries)} utterances for "
          f"{spec.n_subjects} subjects in {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = train.parse_config(args.config)
    if args.seed is not None:
        cfg.ctrl.seed = args.seed
        cfg.spec.seed = args.seed
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    records = train.dispatch(str(cfg.manifest_path), cfg.spec, cfg.ctrl, cfg.size,
                             cfg.out_dir, jobs=args.jobs)
    for r in records:
        log.info("run %s/%s fold %d: report %s", r.scheme, r.scope, r.fold, r.report_path)
    print(f"completed {len(records)} runs; registry at {cfg.out_dir / train.REGISTRY_NAME}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params = net.load_checkpoint(args.checkpoint)
    manifest = featio.load_manifest(args.manifest)
    feature_tag = params.config.source_tag
    data = train.CorpusData(manifest, feature_tag)
    if args.split == "all":
        entries = list(manifest.entries)
    elif args.split == "train":
        entries = manifest.train_entries(args.subject)
    else:
        entries = manifest.test_entries(args.subject)
    if args.subject:
        entries = [e for e in entries if e.subject_id == args.subject]
    if not entries:
        raise ConfigError("no utterances match the requested subject/split")
    scores = []
    for entry in sorted(entries, key=lambda e: e.utterance_id):
        u = data.load(entry.utterance_id)
        batch = net.make_batch([data.sample(entry.utterance_id)])
        pred = net.forward(params, batch)[0, :u.targets.shape[0]]
        scores.append(evalmod.UtteranceScore(
            u.utterance_id, u.subject_id, u.group,
            evalmod.score_utterance(pred, u.targets)))
    report = evalmod.EvalReport(scores, feature_tag=feature_tag, scheme="evaluate",
                                scope=params.scope or "all", fold=0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    evalmod.write_report(report, out_dir / "report.tsv", out_dir / "summary.json")
    agg = evalmod.aggregate([report], "group")
    for group, stats in agg["groups"].items():
        print(f"{group}: {evalmod.format_cell(stats['mean'], stats['std'])} over {stats['n']} utterances")
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg = train.parse_config(args.config)
    if args.seed is not None:
        cfg.ctrl.seed = args.seed
        cfg.spec.seed = args.seed
    spec = train.SchemeSpec(scheme="adapt", feature_tag=cfg.spec.feature_tag,
                            subjects=cfg.spec.subjects, t_percent=args.t,
                            seed=cfg.spec.seed, folds=cfg.spec.folds)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    records = train.run_adapt(str(cfg.manifest_path), spec, cfg.ctrl,
                              train.load_records(cfg.out_dir), cfg.size,
                              cfg.out_dir, jobs=args.jobs)
    print(f"completed {len(records)} adaptation runs at t={args.t:g}%")
    return EXIT_OK


def _render_tables(records, out_path) -> str:
    """Per-scheme tables of mean (std) cells by feature tag and group."""
    if not records:
        raise EmptyResultError("no run records found")
    reports: dict[tuple[str, str], list[evalmod.EvalReport]] = {}
    for rec in records:
        reports.setdefault((rec.scheme, rec.feature_tag), []).append(
            evalmod.read_report(rec.report_path))
    lines = []
    for (scheme, tag) in sorted(reports):
        agg = evalmod.aggregate(reports[(scheme, tag)], "group")
        lines.append(f"scheme: {scheme}  feature: {tag}")
        for group, stats in agg["groups"].items():
            lines.append(f"  {group:<16}{evalmod.format_cell(stats['mean'], stats['std'])}"
                         f"  n={stats['n']}")
        if agg["undefined_channels"]:
            lines.append(f"  undefined channels: {agg['undefined_channels']}")
    lines.append(f"# std convention: {evalmod.STD_CONVENTION}")
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    return text


def cmd_report(args) -> int:
    records = train.load_records(args.runs)
    if args.kind == "tables":
        text = _render_tables(records, args.out)
        print(text, end="")
        return EXIT_OK
    out_path = args.out or str(Path(args.runs) / f"{args.kind}.tsv")
    path = evalmod.emit_plot_data(records, args.kind, out_path)
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "mfcc": cmd_mfcc,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "adapt": cmd_adapt,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    _setup_logging(args.verbose)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, CheckpointMismatchError, EmptyResultError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
