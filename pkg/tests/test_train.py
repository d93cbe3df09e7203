import numpy as np
import pytest

from aai import eval as evalmod
from aai import net, synth, train
from aai.errors import CheckpointMismatchError, ConfigError

TINY_SIZE = train.ModelSize(acoustic_units=8, speaker_units=4, hidden_units=4, num_layers=1)


def tiny_ctrl(seed=0, epochs=1, lr=1e-3):
    return net.TrainControl(max_epochs=epochs, batch_size=5, seed=seed, lr=lr)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = synth.SynthSpec(n_subjects=3, n_utterances_per_subject=10,
                           duration_range_s=(1.2, 1.5), acoustic_dim=10,
                           noise_std=0.01, seed=21, severity=[0.0, 0.5, 0.0])
    synth.generate_corpus(spec, root, k_folds=2)
    return root


def manifest_path(corpus):
    return str(corpus / "manifest.tsv")


class TestCorpusData:
    def test_loads_aligned_normalized(self, corpus):
        man = train.load_manifest(manifest_path(corpus))
        data = train.CorpusData(man, "synth")
        utt = data.load(man.entries[0].utterance_id)
        assert utt.inputs.shape[0] == utt.targets.shape[0]
        assert utt.targets.shape[1] == 24
        assert np.allclose(utt.targets.mean(axis=0), 0.0, atol=1e-9)
        assert utt.embedding.shape == (synth.EMBEDDING_DIM,)

    def test_wrong_tag_rejected(self, corpus):
        man = train.load_manifest(manifest_path(corpus))
        data = train.CorpusData(man, "decoar")
        with pytest.raises(ConfigError, match="feature tag"):
            data.load(man.entries[0].utterance_id)


class TestSubjectSpecific(object):
    def test_model_count_and_records(self, corpus, tmp_path):
        spec = train.SchemeSpec(scheme="subject_specific", feature_tag="synth", seed=1)
        records = train.run_subject_specific(manifest_path(corpus), spec, tiny_ctrl(1),
                                             TINY_SIZE, tmp_path)
        assert len(records) == 3 * 2  # subjects x folds
        assert all(r.disjoint for r in records)
        loaded = train.load_records(tmp_path)
        assert len(loaded) == len(records)
        assert {(r.scheme, r.scope, r.fold) for r in loaded} == \
               {(r.scheme, r.scope, r.fold) for r in records}

    def test_round_robin_validation(self, corpus):
        man = train.load_manifest(manifest_path(corpus))
        spec = train.SchemeSpec(scheme="subject_specific", feature_tag="synth", seed=1)
        # reconstruct the fold logic: validation fold f, train folds != f
        for fold in (0, 1):
            entries = man.train_entries("S00")
            val = {e.utterance_id for e in entries if e.fold == fold}
            rest = {e.utterance_id for e in entries if e.fold != fold}
            assert val and rest and not val & rest


class TestPooled:
    def test_one_model_per_fold(self, corpus, tmp_path):
        spec = train.SchemeSpec(scheme="pooled", feature_tag="synth", seed=2)
        records = train.run_pooled(manifest_path(corpus), spec, tiny_ctrl(2),
                                   TINY_SIZE, tmp_path)
        assert len(records) == 2
        assert {r.scope for r in records} == {"pooled"}
        man = train.load_manifest(manifest_path(corpus))
        report = evalmod.read_report(records[0].report_path)
        assert len(report.scores) == len(man.test_entries())

    def test_groups_in_summary(self, corpus, tmp_path):
        spec = train.SchemeSpec(scheme="pooled", feature_tag="synth", seed=3, folds=[0])
        records = train.run_pooled(manifest_path(corpus), spec, tiny_ctrl(3),
                                   TINY_SIZE, tmp_path)
        report = evalmod.read_report(records[0].report_path)
        agg = evalmod.aggregate([report], "group")
        assert set(agg["groups"]) == {"healthy", "patient"}


class TestFineTuned:
    def test_warm_start_and_count(self, corpus, tmp_path):
        pooled_spec = train.SchemeSpec(scheme="pooled", feature_tag="synth", seed=4, folds=[0])
        pooled = train.run_pooled(manifest_path(corpus), pooled_spec, tiny_ctrl(4),
                                  TINY_SIZE, tmp_path)
        ft_spec = train.SchemeSpec(scheme="fine_tuned", feature_tag="synth", seed=4, folds=[0])
        records = train.run_fine_tuned(manifest_path(corpus), ft_spec, tiny_ctrl(4),
                                       pooled, TINY_SIZE, tmp_path)
        assert len(records) == 3  # subjects x 1 fold

    def test_zero_epoch_fine_tune_reproduces_source_eval(self, corpus, tmp_path):
        pooled_spec = train.SchemeSpec(scheme="pooled", feature_tag="synth", seed=9, folds=[0])
        pooled = train.run_pooled(manifest_path(corpus), pooled_spec, tiny_ctrl(9),
                                  TINY_SIZE, tmp_path)
        ft_spec = train.SchemeSpec(scheme="fine_tuned", feature_tag="synth", seed=9,
                                   folds=[0], subjects=["S01"])
        frozen = net.TrainControl(max_epochs=0, batch_size=5, seed=9)
        ft = train.run_fine_tuned(manifest_path(corpus), ft_spec, frozen, pooled,
                                  TINY_SIZE, tmp_path)
        pooled_cc = {s.utterance_id: s.cc
                     for s in evalmod.read_report(pooled[0].report_path).scores}
        for s in evalmod.read_report(ft[0].report_path).scores:
            assert np.array_equal(s.cc, pooled_cc[s.utterance_id], equal_nan=True)

    def test_missing_pooled_checkpoint(self, corpus, tmp_path):
        ft_spec = train.SchemeSpec(scheme="fine_tuned", feature_tag="synth", seed=5, folds=[0])
        with pytest.raises(ConfigError, match="pooled checkpoint"):
            train.run_fine_tuned(manifest_path(corpus), ft_spec, tiny_ctrl(5), [],
                                 TINY_SIZE, tmp_path)

    def test_incompatible_checkpoint_rejected(self, corpus, tmp_path):
        cfg = net.ModelConfig(input_dim=99, embedding_dim=16, acoustic_units=4,
                              speaker_units=2, hidden_units=4, num_layers=1,
                              output_dim=24, source_tag="synth")
        bad = tmp_path / "bad.aaim"
        net.save_checkpoint(net.ModelParams.init(cfg, seed=0), bad)
        fake = [train.RunRecord("pooled", "pooled", 0, "synth", str(bad), "", 0)]
        ft_spec = train.SchemeSpec(scheme="fine_tuned", feature_tag="synth", seed=6, folds=[0])
        with pytest.raises(CheckpointMismatchError):
            train.run_fine_tuned(manifest_path(corpus), ft_spec, tiny_ctrl(6), fake,
                                 TINY_SIZE, tmp_path)


class TestUnseenLoso:
    def test_heldout_never_trained_on(self, corpus, tmp_path):
        spec = train.SchemeSpec(scheme="unseen_loso", feature_tag="synth", seed=7,
                                folds=[0], subjects=["S01"])
        records = train.run_unseen_loso(manifest_path(corpus), spec, tiny_ctrl(7),
                                        TINY_SIZE, tmp_path)
        assert len(records) == 1
        report = evalmod.read_report(records[0].report_path)
        man = train.load_manifest(manifest_path(corpus))
        evaluated = {s.utterance_id for s in report.scores}
        assert evaluated == {e.utterance_id for e in man.for_subject("S01")}

    def test_single_subject_rejected(self, tmp_path):
        spec = synth.SynthSpec(n_subjects=1, n_utterances_per_subject=8,
                               duration_range_s=(1.2, 1.4), acoustic_dim=6,
                               noise_std=0.0, seed=8)
        synth.generate_corpus(spec, tmp_path / "one", k_folds=2)
        scheme = train.SchemeSpec(scheme="unseen_loso", feature_tag="synth", seed=8)
        with pytest.raises(ConfigError, match="at least 2"):
            train.run_unseen_loso(str(tmp_path / "one" / "manifest.tsv"), scheme,
                                  tiny_ctrl(8), TINY_SIZE, tmp_path / "runs")


class TestAdapt:
    def test_selection_deterministic_and_nested(self, corpus):
        man = train.load_manifest(manifest_path(corpus))
        s25a = train.adapt_selection(man, "S00", 25.0, seed=9)
        s25b = train.adapt_selection(man, "S00", 25.0, seed=9)
        s50 = train.adapt_selection(man, "S00", 50.0, seed=9)
        assert s25a == s25b
        assert set(s25a) <= set(s50)
        assert len(train.adapt_selection(man, "S00", 0.0, seed=9)) == 0
        assert len(train.adapt_selection(man, "S00", 1.0, seed=9)) == 1  # minimum 1
        assert len(train.adapt_selection(man, "S00", 100.0, seed=9)) == \
               len(man.train_entries("S00"))

    def test_out_of_range_rejected(self, corpus):
        man = train.load_manifest(manifest_path(corpus))
        with pytest.raises(ValueError):
            train.adapt_selection(man, "S00", 101.0, seed=0)
        with pytest.raises(ConfigError):
            train.SchemeSpec(scheme="adapt", feature_tag="synth")  # missing t

    def test_t_zero_matches_loso_bitwise(self, corpus, tmp_path):
        loso_spec = train.SchemeSpec(scheme="unseen_loso", feature_tag="synth", seed=10,
                                     folds=[0], subjects=["S02"])
        loso = train.run_unseen_loso(manifest_path(corpus), loso_spec, tiny_ctrl(10),
                                     TINY_SIZE, tmp_path)
        adapt_spec = train.SchemeSpec(scheme="adapt", feature_tag="synth", seed=10,
                                      folds=[0], subjects=["S02"], t_percent=0.0)
        adapted = train.run_adapt(manifest_path(corpus), adapt_spec, tiny_ctrl(10),
                                  loso, TINY_SIZE, tmp_path)
        loso_cc = {s.utterance_id: s.cc
                   for s in evalmod.read_report(loso[0].report_path).scores}
        t0 = evalmod.read_report(adapted[0].report_path)
        assert t0.scores  # the test split is non-empty
        for s in t0.scores:
            assert np.array_equal(s.cc, loso_cc[s.utterance_id], equal_nan=True)

    def test_missing_loso_checkpoint(self, corpus, tmp_path):
        adapt_spec = train.SchemeSpec(scheme="adapt", feature_tag="synth", seed=11,
                                      folds=[0], subjects=["S00"], t_percent=50.0)
        with pytest.raises(ConfigError, match="unseen_loso checkpoint"):
            train.run_adapt(manifest_path(corpus), adapt_spec, tiny_ctrl(11), [],
                            TINY_SIZE, tmp_path)


class TestParallelExecution:
    def test_jobs_two_matches_counts(self, corpus, tmp_path):
        spec = train.SchemeSpec(scheme="pooled", feature_tag="synth", seed=12)
        records = train.run_pooled(manifest_path(corpus), spec, tiny_ctrl(12),
                                   TINY_SIZE, tmp_path, jobs=2)
        assert len(records) == 2
        assert all((tmp_path / "reports").glob("pooled_*.tsv"))


class TestConfigParsing:
    def write(self, tmp_path, text):
        path = tmp_path / "exp.cfg"
        path.write_text(text)
        return path

    def test_full_config(self, tmp_path, corpus):
        path = self.write(tmp_path, f"""
[corpus]
manifest = {corpus / 'manifest.tsv'}
out_dir = {tmp_path / 'runs'}

[features]
tag = synth

[scheme]
name = pooled
folds = 0

[control]
max_epochs = 2
lr = 0.001
seed = 5

[model]
hidden_units = 4
""")
        cfg = train.parse_config(path)
        assert cfg.spec.scheme == "pooled"
        assert cfg.ctrl.max_epochs == 2
        assert cfg.ctrl.lr == 0.001
        assert cfg.size.hidden_units == 4
        assert cfg.spec.folds == [0]

    def test_unknown_key_rejected(self, tmp_path):
        path = self.write(tmp_path, "[corpus]\nmanifest = m\nout_dir = o\nbogus = 1\n"
                                    "[features]\ntag = t\n[scheme]\nname = pooled\n")
        with pytest.raises(ConfigError, match="bogus"):
            train.parse_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = self.write(tmp_path, "[corpus]\nmanifest = m\nout_dir = o\n"
                                    "[features]\ntag = t\n[scheme]\nname = pooled\n"
                                    "[mystery]\nx = 1\n")
        with pytest.raises(ConfigError, match="mystery"):
            train.parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            train.parse_config(tmp_path / "nope.cfg")

    def test_adapt_alias(self, tmp_path, corpus):
        path = self.write(tmp_path, f"[corpus]\nmanifest = {corpus / 'manifest.tsv'}\n"
                                    f"out_dir = {tmp_path / 'runs'}\n"
                                    "[features]\ntag = synth\n"
                                    "[scheme]\nname = adapt_t\nt_percent = 25\n")
        cfg = train.parse_config(path)
        assert cfg.spec.scheme == "adapt"
        assert cfg.spec.t_percent == 25.0
