"""Experiment protocols.

Five schemes over a split, folded corpus manifest:

  subject_specific  one model per subject per fold
  pooled            one model per fold over all subjects' training data
  fine_tuned        pooled checkpoint continued on each subject's data
  unseen_loso       leave-one-subject-out; evaluated on the entire
                    held-out subject
  adapt             fine-tune a LOSO checkpoint on the first t% of the
                    held-out subject's training utterances (t = 0 skips
                    fine-tuning and just evaluates the LOSO checkpoint)

Every run audits that train/validation/evaluation utterance sets are
pairwise disjoint, saves a checkpoint and an evaluation report, and
appends one record to the run registry (runs.tsv) in the output
directory.
"""

from __future__ import annotations

import configparser
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import eval as evalmod
from . import net
from .artic import NUM_AUGMENTED, NUM_CHANNELS, augment_kinematics, preprocess_trajectory
from .artic import ArticulatoryTrajectory
from .errors import ConfigError
from .featio import (CorpusManifest, FeatureSequence, align_frame_rate, load_manifest,
                     mvn_utterance, read_embedding_file, read_feature_file, stable_seed)

SCHEMES = ("subject_specific", "pooled", "fine_tuned", "unseen_loso", "adapt")
REGISTRY_NAME = "runs.tsv"
REGISTRY_HEADER = ("scheme\tscope\tfold\tfeature_tag\tcheckpoint_path\treport_path"
                   "\tseed\tt_percent\tdisjoint\twall_clock_s")


@dataclass
class SchemeSpec:
    scheme: str
    feature_tag: str
    subjects: list[str] | None = None
    t_percent: float | None = None
    seed: int = 0
    folds: list[int] | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.scheme == "adapt":
            if self.t_percent is None:
                raise ConfigError("adapt scheme requires t_percent")
            if not 0.0 <= self.t_percent <= 100.0:
                raise ValueError(f"t_percent must be in [0, 100], got {self.t_percent}")


@dataclass(frozen=True)
class ModelSize:
    """Network width settings; corpus dimensions come from the data."""

    acoustic_units: int = 200
    speaker_units: int = 32
    hidden_units: int = 256
    num_layers: int = 3


@dataclass
class RunRecord:
    scheme: str
    scope: str
    fold: int
    feature_tag: str
    checkpoint_path: str
    report_path: str
    seed: int
    t_percent: float | None = None
    disjoint: bool = True
    wall_clock_s: float = 0.0


def append_records(out_dir, records: list[RunRecord]) -> None:
    path = Path(out_dir) / REGISTRY_NAME
    lines = [] if path.exists() else [REGISTRY_HEADER]
    for r in records:
        t = "-" if r.t_percent is None else f"{r.t_percent:g}"
        lines.append(f"{r.scheme}\t{r.scope}\t{r.fold}\t{r.feature_tag}\t{r.checkpoint_path}"
                     f"\t{r.report_path}\t{r.seed}\t{t}\t{int(r.disjoint)}\t{r.wall_clock_s:.3f}")
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_records(out_dir) -> list[RunRecord]:
    path = Path(out_dir) / REGISTRY_NAME
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("scheme\t"):
            continue
        f = line.split("\t")
        records.append(RunRecord(
            scheme=f[0], scope=f[1], fold=int(f[2]), feature_tag=f[3],
            checkpoint_path=f[4], report_path=f[5], seed=int(f[6]),
            t_percent=None if f[7] == "-" else float(f[7]),
            disjoint=bool(int(f[8])), wall_clock_s=float(f[9]),
        ))
    return records


# ---------------------------------------------------------------------------
# corpus loading

@dataclass
class LoadedUtterance:
    utterance_id: str
    subject_id: str
    group: str
    inputs: np.ndarray    # T x D, normalized, aligned to targets
    embedding: np.ndarray
    targets: np.ndarray   # T x 24, normalized augmented trajectory


class CorpusData:
    """Loads and caches the network-ready view of manifest utterances."""

    def __init__(self, manifest: CorpusManifest, feature_tag: str):
        self.manifest = manifest
        self.feature_tag = feature_tag
        self._cache: dict[str, LoadedUtterance] = {}

    def load(self, utterance_id: str) -> LoadedUtterance:
        if utterance_id in self._cache:
            return self._cache[utterance_id]
        entry = self.manifest.entry(utterance_id)
        acoustic = read_feature_file(self.manifest.resolve(entry.acoustic_path))
        if acoustic.source_tag != self.feature_tag:
            raise ConfigError(
                f"{entry.acoustic_path}: feature tag {acoustic.source_tag!r} "
                f"does not match requested {self.feature_tag!r}")
        artic = read_feature_file(self.manifest.resolve(entry.articulatory_path))
        targets = self._prepare_targets(artic)
        inputs = mvn_utterance(acoustic)
        inputs = align_frame_rate(inputs, 100.0, targets.shape[0])
        emb = read_embedding_file(self.manifest.resolve(entry.embedding_path))
        loaded = LoadedUtterance(entry.utterance_id, entry.subject_id, entry.group,
                                 inputs.frames, emb.values, targets)
        self._cache[utterance_id] = loaded
        return loaded

    @staticmethod
    def _prepare_targets(artic) -> np.ndarray:
        """Accept raw 200 Hz positions, 100 Hz positions, or 24-d augmented."""
        if artic.dim == NUM_CHANNELS and artic.frame_rate_hz == 200.0:
            augmented = augment_kinematics(preprocess_trajectory(artic.frames))
        elif artic.dim == NUM_CHANNELS:
            augmented = augment_kinematics(ArticulatoryTrajectory(artic.frames))
        elif artic.dim == NUM_AUGMENTED:
            augmented = None
        else:
            raise ConfigError(f"articulatory file has {artic.dim} columns; expected 12 or 24")
        frames = artic.frames if augmented is None else augmented.frames
        return mvn_utterance(FeatureSequence(frames, 100.0, "ema")).frames

    def sample(self, utterance_id: str):
        u = self.load(utterance_id)
        return (u.inputs, u.embedding, u.targets, u.utterance_id)

    def dims(self, any_utterance_id: str) -> tuple[int, int]:
        u = self.load(any_utterance_id)
        return u.inputs.shape[1], u.embedding.shape[0]


# ---------------------------------------------------------------------------
# single run execution

@dataclass
class RunTask:
    scheme: str
    scope: str
    fold: int
    train_ids: list[str]
    val_ids: list[str]
    eval_ids: list[str]
    seed: int
    init_checkpoint: str | None = None
    t_percent: float | None = None
    skip_training: bool = False


def _model_config(size: ModelSize, input_dim: int, embedding_dim: int,
                  feature_tag: str) -> net.ModelConfig:
    return net.ModelConfig(
        input_dim=input_dim, embedding_dim=embedding_dim,
        acoustic_units=size.acoustic_units, speaker_units=size.speaker_units,
        hidden_units=size.hidden_units, num_layers=size.num_layers,
        output_dim=NUM_AUGMENTED, source_tag=feature_tag)


def _audit_disjoint(task: RunTask) -> bool:
    train, val, ev = set(task.train_ids), set(task.val_ids), set(task.eval_ids)
    return not (train & val or train & ev or val & ev)


def execute_task(manifest_path, feature_tag: str, ctrl: net.TrainControl,
                 size: ModelSize, out_dir, task: RunTask) -> RunRecord:
    """Train (or warm-load), evaluate, and persist one (scheme, scope, fold) run."""
    started = time.perf_counter()
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out_dir / "reports").mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(manifest_path)
    data = CorpusData(manifest, feature_tag)

    disjoint = _audit_disjoint(task)
    if not disjoint and not (task.scheme == "adapt" and task.train_ids == task.val_ids):
        raise ConfigError(f"{task.scheme}/{task.scope}/fold{task.fold}: "
                          "train/validation/evaluation sets overlap")

    probe = (task.train_ids or task.eval_ids)[0]
    input_dim, embedding_dim = data.dims(probe)

    if task.init_checkpoint is not None:
        params = net.load_checkpoint_compatible(task.init_checkpoint, input_dim,
                                                embedding_dim, feature_tag)
    else:
        params = net.ModelParams.init(
            _model_config(size, input_dim, embedding_dim, feature_tag),
            seed=stable_seed(task.seed, "init", task.scheme, task.scope, task.fold))
    params.scope = task.scope

    if not task.skip_training:
        if not task.train_ids or not task.val_ids:
            raise ConfigError(f"{task.scheme}/{task.scope}: empty training or validation set")
        train_batches = net.make_batches([data.sample(u) for u in task.train_ids],
                                         ctrl.batch_size,
                                         seed=stable_seed(task.seed, "batches", task.scope, task.fold))
        val_batches = [net.make_batch([data.sample(u)]) for u in sorted(task.val_ids)]
        params, _history = net.fit(params, train_batches, val_batches, ctrl)

    suffix = "" if task.t_percent is None else f"_t{task.t_percent:g}"
    stem = f"{task.scheme}_{task.scope}{suffix}_f{task.fold}"
    checkpoint_path = out_dir / "checkpoints" / f"{stem}.aaim"
    net.save_checkpoint(params, checkpoint_path)

    scores = []
    for utt_id in sorted(task.eval_ids):
        u = data.load(utt_id)
        batch = net.make_batch([data.sample(utt_id)])
        pred = net.forward(params, batch)[0, :u.targets.shape[0]]
        scores.append(evalmod.UtteranceScore(
            utt_id, u.subject_id, u.group, evalmod.score_utterance(pred, u.targets)))
    report = evalmod.EvalReport(
        scores, feature_tag=feature_tag, scheme=task.scheme, scope=task.scope,
        fold=task.fold,
        extra={"disjoint": disjoint, "n_train": len(task.train_ids),
               "n_val": len(task.val_ids),
               "t_percent": task.t_percent})
    report_path = out_dir / "reports" / f"{stem}.tsv"
    evalmod.write_report(report, report_path, out_dir / "reports" / f"{stem}.json")

    return RunRecord(
        scheme=task.scheme, scope=task.scope, fold=task.fold, feature_tag=feature_tag,
        checkpoint_path=str(checkpoint_path), report_path=str(report_path),
        seed=task.seed, t_percent=task.t_percent, disjoint=disjoint,
        wall_clock_s=time.perf_counter() - started)


def _execute_tasks(manifest_path, feature_tag, ctrl, size, out_dir, tasks,
                   jobs: int = 1) -> list[RunRecord]:
    if jobs <= 1:
        records = [execute_task(manifest_path, feature_tag, ctrl, size, out_dir, t)
                   for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(execute_task, manifest_path, feature_tag, ctrl,
                                   size, out_dir, t) for t in tasks]
            records = [f.result() for f in futures]
    append_records(out_dir, records)
    return records


# ---------------------------------------------------------------------------
# scheme runners

def _fold_ids(manifest: CorpusManifest, spec: SchemeSpec) -> list[int]:
    folds = sorted({e.fold for e in manifest.train_entries() if e.fold is not None})
    if not folds:
        raise ConfigError("manifest has no fold assignments; run assign_folds first")
    if spec.folds is not None:
        missing = set(spec.folds) - set(folds)
        if missing:
            raise ConfigError(f"requested folds {sorted(missing)} not present in manifest")
        folds = sorted(spec.folds)
    return folds


def _subjects(manifest: CorpusManifest, spec: SchemeSpec) -> list[str]:
    subjects = manifest.subjects()
    if spec.subjects:
        missing = set(spec.subjects) - set(subjects)
        if missing:
            raise ConfigError(f"unknown subjects {sorted(missing)}")
        subjects = sorted(spec.subjects)
    return subjects


def _check_seen_split(manifest: CorpusManifest, subjects: list[str]) -> None:
    for s in subjects:
        if not manifest.train_entries(s):
            raise ConfigError(f"subject {s} has no train utterances")
        if not manifest.test_entries(s):
            raise ConfigError(f"subject {s} has no test utterances")


def run_subject_specific(manifest_path, spec: SchemeSpec, ctrl: net.TrainControl,
                         size: ModelSize = ModelSize(), out_dir=".", jobs: int = 1):
    manifest = load_manifest(manifest_path)
    subjects = _subjects(manifest, spec)
    _check_seen_split(manifest, subjects)
    tasks = []
    for subject in subjects:
        train = manifest.train_entries(subject)
        for fold in _fold_ids(manifest, spec):
            tasks.append(RunTask(
                scheme="subject_specific", scope=subject, fold=fold,
                train_ids=[e.utterance_id for e in train if e.fold != fold],
                val_ids=[e.utterance_id for e in train if e.fold == fold],
                eval_ids=[e.utterance_id for e in manifest.test_entries(subject)],
                seed=spec.seed))
    return _execute_tasks(manifest_path, spec.feature_tag, ctrl, size, out_dir, tasks, jobs)


def run_pooled(manifest_path, spec: SchemeSpec, ctrl: net.TrainControl,
               size: ModelSize = ModelSize(), out_dir=".", jobs: int = 1):
    manifest = load_manifest(manifest_path)
    subjects = _subjects(manifest, spec)
    _check_seen_split(manifest, subjects)
    train = [e for s in subjects for e in manifest.train_entries(s)]
    eval_ids = [e.utterance_id for s in subjects for e in manifest.test_entries(s)]
    tasks = []
    for fold in _fold_ids(manifest, spec):
        tasks.append(RunTask(
            scheme="pooled", scope="pooled", fold=fold,
            train_ids=[e.utterance_id for e in train if e.fold != fold],
            val_ids=[e.utterance_id for e in train if e.fold == fold],
            eval_ids=eval_ids, seed=spec.seed))
    return _execute_tasks(manifest_path, spec.feature_tag, ctrl, size, out_dir, tasks, jobs)


def run_fine_tuned(manifest_path, spec: SchemeSpec, ctrl: net.TrainControl,
                   pooled_records: list[RunRecord],
                   size: ModelSize = ModelSize(), out_dir=".", jobs: int = 1):
    manifest = load_manifest(manifest_path)
    subjects = _subjects(manifest, spec)
    _check_seen_split(manifest, subjects)
    by_fold = {r.fold: r for r in pooled_records
               if r.scheme == "pooled" and r.feature_tag == spec.feature_tag}
    tasks = []
    for subject in subjects:
        train = manifest.train_entries(subject)
        for fold in _fold_ids(manifest, spec):
            if fold not in by_fold:
                raise ConfigError(f"no pooled checkpoint for fold {fold} "
                                  f"with feature tag {spec.feature_tag!r}")
            tasks.append(RunTask(
                scheme="fine_tuned", scope=subject, fold=fold,
                train_ids=[e.utterance_id for e in train if e.fold != fold],
                val_ids=[e.utterance_id for e in train if e.fold == fold],
                eval_ids=[e.utterance_id for e in manifest.test_entries(subject)],
                seed=spec.seed, init_checkpoint=by_fold[fold].checkpoint_path))
    return _execute_tasks(manifest_path, spec.feature_tag, ctrl, size, out_dir, tasks, jobs)


def run_unseen_loso(manifest_path, spec: SchemeSpec, ctrl: net.TrainControl,
                    size: ModelSize = ModelSize(), out_dir=".", jobs: int = 1):
    manifest = load_manifest(manifest_path)
    subjects = _subjects(manifest, spec)
    if len(manifest.subjects()) < 2:
        raise ConfigError("leave-one-subject-out needs at least 2 subjects")
    tasks = []
    for held_out in subjects:
        others = [s for s in manifest.subjects() if s != held_out]
        train = [e for s in others for e in manifest.train_entries(s)]
        # the held-out subject was never seen, so evaluate its entire corpus
        eval_ids = [e.utterance_id for e in manifest.for_subject(held_out)]
        for fold in _fold_ids(manifest, spec):
            tasks.append(RunTask(
                scheme="unseen_loso", scope=held_out, fold=fold,
                train_ids=[e.utterance_id for e in train if e.fold != fold],
                val_ids=[e.utterance_id for e in train if e.fold == fold],
                eval_ids=eval_ids, seed=spec.seed))
    return _execute_tasks(manifest_path, spec.feature_tag, ctrl, size, out_dir, tasks, jobs)


def adapt_selection(manifest: CorpusManifest, subject: str, t_percent: float,
                    seed: int) -> list[str]:
    """First t% of a seeded shuffle of the subject's training utterances.

    The shuffle is keyed by (seed, subject) only, so larger t values
    extend smaller ones. Count rounds to nearest, minimum 1 when t > 0.
    """
    if not 0.0 <= t_percent <= 100.0:
        raise ValueError(f"t_percent must be in [0, 100], got {t_percent}")
    ids = sorted(e.utterance_id for e in manifest.train_entries(subject))
    if not ids:
        raise ConfigError(f"subject {subject} has no train utterances")
    if t_percent == 0.0:
        return []
    rng = np.random.default_rng(stable_seed(seed, "adapt-select", subject))
    order = rng.permutation(len(ids))
    count = max(1, int(round(len(ids) * t_percent / 100.0)))
    return [ids[i] for i in order[:count]]


def run_adapt(manifest_path, spec: SchemeSpec, ctrl: net.TrainControl,
              loso_records: list[RunRecord],
              size: ModelSize = ModelSize(), out_dir=".", jobs: int = 1):
    manifest = load_manifest(manifest_path)
    subjects = _subjects(manifest, spec)
    t = spec.t_percent
    by_key = {(r.scope, r.fold): r for r in loso_records
              if r.scheme == "unseen_loso" and r.feature_tag == spec.feature_tag}
    tasks = []
    for subject in subjects:
        selection = adapt_selection(manifest, subject, t, spec.seed)
        if len(selection) >= 2:
            n_val = max(1, len(selection) // 5)
            train_ids, val_ids = selection[:-n_val], selection[-n_val:]
        else:
            # degenerate single-utterance selection: it must serve as both
            train_ids, val_ids = selection, selection
        eval_ids = [e.utterance_id for e in manifest.test_entries(subject)]
        if not eval_ids:
            raise ConfigError(f"subject {subject} has no test utterances")
        for fold in _fold_ids(manifest, spec):
            if (subject, fold) not in by_key:
                raise ConfigError(f"no unseen_loso checkpoint for subject {subject} "
                                  f"fold {fold} with feature tag {spec.feature_tag!r}")
            tasks.append(RunTask(
                scheme="adapt", scope=subject, fold=fold,
                train_ids=train_ids, val_ids=val_ids, eval_ids=eval_ids,
                seed=spec.seed, init_checkpoint=by_key[(subject, fold)].checkpoint_path,
                t_percent=t, skip_training=(t == 0.0)))
    return _execute_tasks(manifest_path, spec.feature_tag, ctrl, size, out_dir, tasks, jobs)


def dispatch(manifest_path, spec: SchemeSpec, ctrl: net.TrainControl,
             size: ModelSize = ModelSize(), out_dir=".", jobs: int = 1):
    """Run a scheme, resolving warm-start checkpoints from the registry."""
    if spec.scheme == "subject_specific":
        return run_subject_specific(manifest_path, spec, ctrl, size, out_dir, jobs)
    if spec.scheme == "pooled":
        return run_pooled(manifest_path, spec, ctrl, size, out_dir, jobs)
    if spec.scheme == "fine_tuned":
        return run_fine_tuned(manifest_path, spec, ctrl, load_records(out_dir),
                              size, out_dir, jobs)
    if spec.scheme == "unseen_loso":
        return run_unseen_loso(manifest_path, spec, ctrl, size, out_dir, jobs)
    if spec.scheme == "adapt":
        return run_adapt(manifest_path, spec, ctrl, load_records(out_dir),
                         size, out_dir, jobs)
    raise ConfigError(f"unknown scheme {spec.scheme!r}")


# ---------------------------------------------------------------------------
# experiment configuration files

_CONFIG_KEYS = {
    "corpus": {"manifest", "out_dir"},
    "features": {"tag"},
    "scheme": {"name", "subjects", "t_percent", "folds"},
    "control": {f.name for f in dataclass_fields(net.TrainControl)},
    "model": {f.name for f in dataclass_fields(ModelSize)},
}

_CONTROL_TYPES = {f.name: f.type for f in dataclass_fields(net.TrainControl)}


@dataclass
class ExperimentConfig:
    manifest_path: Path
    out_dir: Path
    spec: SchemeSpec
    ctrl: net.TrainControl
    size: ModelSize


def parse_config(path) -> ExperimentConfig:
    """Parse the key=value experiment file; unknown sections or keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in parser.sections():
        if section not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _CONFIG_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
    for required in ("corpus", "features", "scheme"):
        if required not in parser:
            raise ConfigError(f"{path}: missing section [{required}]")
    corpus = parser["corpus"]
    if "manifest" not in corpus or "out_dir" not in corpus:
        raise ConfigError(f"{path}: [corpus] needs manifest and out_dir")
    manifest_path = Path(corpus["manifest"])
    if not manifest_path.is_absolute():
        manifest_path = path.parent / manifest_path
    out_dir = Path(corpus["out_dir"])
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir

    scheme_sec = parser["scheme"]
    if "name" not in scheme_sec:
        raise ConfigError(f"{path}: [scheme] needs name")
    name = scheme_sec["name"].strip()
    if name == "adapt_t":
        name = "adapt"
    subjects = None
    if "subjects" in scheme_sec and scheme_sec["subjects"].strip():
        subjects = [s.strip() for s in scheme_sec["subjects"].split(",") if s.strip()]
    folds = None
    if "folds" in scheme_sec and scheme_sec["folds"].strip():
        folds = [int(s) for s in scheme_sec["folds"].split(",") if s.strip()]
    t_percent = float(scheme_sec["t_percent"]) if "t_percent" in scheme_sec else None

    ctrl_kwargs = {}
    if "control" in parser:
        for key, value in parser["control"].items():
            kind = _CONTROL_TYPES[key]
            ctrl_kwargs[key] = int(value) if kind == "int" else float(value)
    ctrl = net.TrainControl(**ctrl_kwargs)

    size_kwargs = {}
    if "model" in parser:
        size_kwargs = {k: int(v) for k, v in parser["model"].items()}
    size = ModelSize(**size_kwargs)

    spec = SchemeSpec(scheme=name, feature_tag=parser["features"]["tag"].strip(),
                      subjects=subjects, t_percent=t_percent, seed=ctrl.seed,
                      folds=folds)
    return ExperimentConfig(manifest_path, out_dir, spec, ctrl, size)
