"""Pearson-CC scoring, aggregation, and report emission.

Correlations are computed per position channel (the first 12 output
columns); kinematic columns are never scored. A channel whose prediction
or truth is (numerically) constant has no defined correlation: it is
flagged NaN, excluded from averages, and counted separately.

Std convention used by every aggregate: population standard deviation
across articulator-averaged per-utterance CCs pooled over folds. Each
report footer states this.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artic import CHANNELS, NUM_CHANNELS
from .errors import EmptyResultError

DEGENERATE_STD = 1e-12
STD_CONVENTION = ("population std across articulator-averaged "
                  "per-utterance CCs pooled over folds")


def pearson_cc(x, y) -> float:
    """Pearson correlation of two equal-length sequences.

    Returns NaN (the undefined flag) when either side has std <= 1e-12;
    undefined values are excluded from all aggregation.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError(f"need at least 2 samples, got {x.size}")
    xc = x - x.mean()
    yc = y - y.mean()
    var_x = np.mean(xc * xc)
    var_y = np.mean(yc * yc)
    if np.sqrt(var_x) <= DEGENERATE_STD or np.sqrt(var_y) <= DEGENERATE_STD:
        return float("nan")
    # single sqrt keeps cc(x, x) exactly 1
    cc = np.mean(xc * yc) / np.sqrt(var_x * var_y)
    return float(np.clip(cc, -1.0, 1.0))


def score_utterance(pred: np.ndarray, truth) -> np.ndarray:
    """Twelve per-channel CCs between prediction and truth positions.

    Accepts a T x 24 (or T x 12) truth matrix or anything with a .frames
    attribute; only the first 12 columns are scored.
    """
    truth_frames = np.asarray(getattr(truth, "frames", truth), dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape[0] != truth_frames.shape[0]:
        raise ValueError(f"frame count mismatch: {pred.shape[0]} vs {truth_frames.shape[0]}")
    return np.array([pearson_cc(pred[:, c], truth_frames[:, c]) for c in range(NUM_CHANNELS)])


def relative_improvement(candidate: float, baseline: float) -> float:
    """Percent change of candidate over baseline."""
    if baseline == 0:
        raise ValueError("baseline must be nonzero")
    return 100.0 * (candidate - baseline) / baseline


@dataclass
class UtteranceScore:
    utterance_id: str
    subject_id: str
    group: str
    cc: np.ndarray  # 12 values, NaN = undefined

    def mean_cc(self) -> float:
        defined = self.cc[~np.isnan(self.cc)]
        return float(defined.mean()) if defined.size else float("nan")


@dataclass
class EvalReport:
    """Per-utterance CC values for one run, with metadata."""

    scores: list[UtteranceScore]
    feature_tag: str = ""
    scheme: str = ""
    scope: str = ""
    fold: int = 0
    extra: dict = field(default_factory=dict)


def format_cell(mean: float, std: float) -> str:
    """Render an aggregate as e.g. '0.7493 (0.0480)'."""
    return f"{mean:.4f} ({std:.4f})"


def _summarize(values: list[float]) -> dict:
    arr = np.array([v for v in values if not np.isnan(v)], dtype=np.float64)
    if arr.size == 0:
        return {"mean": float("nan"), "std": float("nan"), "n": 0}
    return {"mean": float(arr.mean()), "std": float(arr.std()), "n": int(arr.size)}


def aggregate(reports: list[EvalReport], grouping: str = "group") -> dict:
    """Pool per-utterance scores over folds and summarize.

    grouping "group" keys by healthy/patient, "subject" by subject_id.
    Also returns per-articulator mean CCs and the undefined-channel count.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    if grouping not in ("group", "subject"):
        raise ValueError(f"unknown grouping {grouping!r}")
    buckets: dict[str, list[float]] = {}
    per_channel: dict[str, list[float]] = {name: [] for name in CHANNELS}
    undefined = 0
    for report in reports:
        for score in report.scores:
            key = score.group if grouping == "group" else score.subject_id
            buckets.setdefault(key, []).append(score.mean_cc())
            for c, name in enumerate(CHANNELS):
                if np.isnan(score.cc[c]):
                    undefined += 1
                else:
                    per_channel[name].append(float(score.cc[c]))
    summary = {key: _summarize(vals) for key, vals in sorted(buckets.items())}
    articulators = {name: _summarize(vals) for name, vals in per_channel.items()}
    return {
        "grouping": grouping,
        "groups": summary,
        "per_articulator": {k: v["mean"] for k, v in articulators.items()},
        "undefined_channels": undefined,
        "std_convention": STD_CONVENTION,
    }


# ---------------------------------------------------------------------------
# report files

def _cc_str(v: float) -> str:
    # 17 significant digits round-trips doubles exactly
    return "NA" if np.isnan(v) else f"{v:.17g}"


def write_report(report: EvalReport, tsv_path, summary_path) -> None:
    """Write the per-utterance TSV and the structured JSON summary."""
    lines = [
        f"# scheme={report.scheme}\tscope={report.scope}\tfold={report.fold}\tfeature={report.feature_tag}",
        "utterance_id\tsubject_id\tgroup\t" + "\t".join(f"cc_{c}" for c in CHANNELS) + "\tmean_cc",
    ]
    for s in sorted(report.scores, key=lambda s: s.utterance_id):
        cells = [s.utterance_id, s.subject_id, s.group]
        cells += [_cc_str(v) for v in s.cc]
        cells.append(_cc_str(s.mean_cc()))
        lines.append("\t".join(cells))
    lines.append(f"# std convention: {STD_CONVENTION}")
    Path(tsv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary = {
        "scheme": report.scheme,
        "scope": report.scope,
        "fold": report.fold,
        "feature_tag": report.feature_tag,
        "by_group": aggregate([report], "group"),
        "by_subject": aggregate([report], "subject"),
    }
    summary.update(report.extra)
    Path(summary_path).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n",
                                  encoding="utf-8")


def read_report(tsv_path) -> EvalReport:
    """Parse a per-utterance TSV written by write_report."""
    scores = []
    meta = {"scheme": "", "scope": "", "fold": 0, "feature": ""}
    for raw in Path(tsv_path).read_text(encoding="utf-8").splitlines():
        if raw.startswith("# scheme="):
            for part in raw[2:].split("\t"):
                key, _, value = part.partition("=")
                meta[key] = value
            continue
        if raw.startswith("#") or raw.startswith("utterance_id") or not raw.strip():
            continue
        fields = raw.split("\t")
        cc = np.array([float("nan") if v == "NA" else float(v) for v in fields[3:3 + NUM_CHANNELS]])
        scores.append(UtteranceScore(fields[0], fields[1], fields[2], cc))
    return EvalReport(scores, feature_tag=meta["feature"], scheme=meta["scheme"],
                      scope=meta["scope"], fold=int(meta["fold"]))


def emit_plot_data(run_records, kind: str, out_path) -> Path:
    """Write plot-ready tabular text for downstream tools.

    adaptation_curve: one row per (subject, feature, t) with mean/std CC.
    articulator_box: one row per (channel, feature, utterance) CC.
    """
    records = list(run_records)
    out_path = Path(out_path)
    if kind == "adaptation_curve":
        rows = []
        for rec in records:
            if rec.scheme != "adapt" or rec.t_percent is None:
                continue
            report = read_report(rec.report_path)
            vals = [s.mean_cc() for s in report.scores]
            stats = _summarize(vals)
            rows.append((rec.scope, report.feature_tag, rec.t_percent,
                         stats["mean"], stats["std"]))
        if not rows:
            raise EmptyResultError("no adaptation run records")
        rows.sort()
        lines = ["subject\tfeature\tt_percent\tmean_cc\tstd"]
        lines += [f"{s}\t{f}\t{t:g}\t{m:.10f}\t{sd:.10f}" for s, f, t, m, sd in rows]
        out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return out_path
    if kind == "articulator_box":
        lines = ["channel\tfeature\tscheme\tgroup\tutterance_id\tcc"]
        count = 0
        for rec in records:
            report = read_report(rec.report_path)
            for s in sorted(report.scores, key=lambda s: s.utterance_id):
                for c, name in enumerate(CHANNELS):
                    lines.append(f"{name}\t{report.feature_tag}\t{report.scheme}"
                                 f"\t{s.group}\t{s.utterance_id}\t{_cc_str(s.cc[c])}")
                    count += 1
        if count == 0:
            raise EmptyResultError("no run records with scores")
        out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return out_path
    raise ValueError(f"unknown plot kind {kind!r}")
