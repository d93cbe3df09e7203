import numpy as np
import pytest

from aai import artic, featio, synth


def small_spec(**kw):
    base = dict(n_subjects=2, n_utterances_per_subject=10,
                duration_range_s=(1.2, 1.6), acoustic_dim=10,
                noise_std=0.01, seed=1)
    base.update(kw)
    return synth.SynthSpec(**base)


def corpus_bytes(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


class TestGenerateCorpus:
    def test_same_seed_byte_identical(self, tmp_path):
        synth.generate_corpus(small_spec(), tmp_path / "a")
        synth.generate_corpus(small_spec(), tmp_path / "b")
        a, b = corpus_bytes(tmp_path / "a"), corpus_bytes(tmp_path / "b")
        assert set(a) == set(b)
        for name in a:
            assert a[name] == b[name], name

    def test_different_seed_differs(self, tmp_path):
        synth.generate_corpus(small_spec(seed=1), tmp_path / "a")
        synth.generate_corpus(small_spec(seed=2), tmp_path / "b")
        a, b = corpus_bytes(tmp_path / "a"), corpus_bytes(tmp_path / "b")
        assert any(a[n] != b[n] for n in a if n.endswith(".aaif"))

    def test_files_pass_format_validators(self, tmp_path):
        man = synth.generate_corpus(small_spec(), tmp_path / "c")
        assert len(man.entries) == 20
        for entry in man.entries:
            acoustic = featio.read_feature_file(man.resolve(entry.acoustic_path))
            ema = featio.read_feature_file(man.resolve(entry.articulatory_path))
            emb = featio.read_embedding_file(man.resolve(entry.embedding_path))
            assert acoustic.frame_rate_hz == 100.0
            assert ema.frame_rate_hz == 200.0
            assert ema.dim == 12
            assert emb.dim == synth.EMBEDDING_DIM
            assert acoustic.num_frames == -(-ema.num_frames // 2)

    def test_manifest_split_and_folds(self, tmp_path):
        man = synth.generate_corpus(small_spec(), tmp_path / "d", k_folds=3)
        for sid in man.subjects():
            train = man.train_entries(sid)
            assert len(train) == 9
            assert len(man.test_entries(sid)) == 1
            assert {e.fold for e in train} == {0, 1, 2}

    def test_noiseless_map_is_deterministic(self):
        spec = small_spec(noise_std=0.0, severity=[0.0, 0.0])
        raw, acoustic = synth.utterance_signals(spec, 0, 0)
        w, b = synth._acoustic_map(spec)
        x100 = raw[::2]
        assert np.allclose(acoustic, np.tanh(x100 @ w.T + b), atol=1e-12)

    def test_band_limited_spectra(self):
        spec = small_spec(duration_range_s=(3.0, 4.0))
        raw, _ = synth.utterance_signals(spec, 0, 0)
        window = np.hanning(raw.shape[0])
        total_high = 0.0
        total = 0.0
        for c in range(12):
            x = (raw[:, c] - raw[:, c].mean()) * window
            spectrum = np.abs(np.fft.rfft(x)) ** 2
            freqs = np.fft.rfftfreq(x.size, 1.0 / 200.0)
            total += spectrum.sum()
            total_high += spectrum[freqs > 10.0].sum()
        assert total_high <= 0.01 * total

    def test_severity_slows_articulators(self):
        fast_spec = small_spec(severity=[0.0, 0.0], noise_std=0.0,
                               duration_range_s=(2.0, 2.0))
        slow_spec = small_spec(severity=[1.0, 1.0], noise_std=0.0,
                               duration_range_s=(2.0, 2.0))
        speeds = []
        for spec in (fast_spec, slow_spec):
            raw, _ = synth.utterance_signals(spec, 0, 0)
            augmented = artic.augment_kinematics(artic.preprocess_trajectory(raw))
            speeds.append(augmented.frames[:, 12:18].mean(axis=0))
        assert np.all(speeds[1] < speeds[0])


class TestOracleBound:
    # an invertible map needs acoustic_dim >= the 12 position channels

    def test_noiseless_near_perfect(self):
        assert synth.oracle_cc_bound(small_spec(noise_std=0.0, acoustic_dim=24)) >= 0.999

    def test_monotone_in_noise(self):
        bounds = [synth.oracle_cc_bound(small_spec(noise_std=s, acoustic_dim=24))
                  for s in (0.0, 0.02, 0.08, 0.2)]
        assert all(b1 > b2 for b1, b2 in zip(bounds, bounds[1:]))

    def test_within_unit_interval(self):
        for noise in (0.0, 0.05, 0.5):
            b = synth.oracle_cc_bound(small_spec(noise_std=noise, acoustic_dim=24))
            assert -1.0 <= b <= 1.0


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        small_spec(severity=[0.5])  # wrong length
    with pytest.raises(ValueError):
        small_spec(severity=[0.5, 1.5])
    with pytest.raises(ValueError):
        small_spec(noise_std=-0.1)
    with pytest.raises(ValueError):
        small_spec(duration_range_s=(2.0, 1.0))
