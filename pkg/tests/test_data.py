import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from ordreg import DataParseError, Dataset, SchemaError, SplitPlan, SynthConfig, generate, load, save, split
from ordreg.data import DEFAULT_FINDINGS, generate_with_latents
from ordreg.errors import ConfigError, DataError


def small_config(**kw):
    base = dict(n_patients=12, samples_per_patient=3, n_findings=3, K=5, feature_dim=6,
                feature_noise_sd=0.1, label_noise_prob=0.0, seed=1)
    base.update(kw)
    return SynthConfig(**base)


class TestGenerate:
    def test_shapes_and_ranges(self):
        ds = generate(small_config())
        assert len(ds) == 36 and ds.features.shape == (36, 6) and ds.labels.shape == (36, 3)
        assert ds.labels.min() >= 1 and ds.labels.max() <= 5
        assert len(ds.patients()) == 12

    def test_default_findings(self):
        assert SynthConfig().findings == DEFAULT_FINDINGS

    def test_deterministic_bytes(self, tmp_path):
        save(generate(small_config(seed=4)), tmp_path / "a.jsonl")
        save(generate(small_config(seed=4)), tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_seed_changes_data(self):
        assert generate(small_config(seed=1)) != generate(small_config(seed=2))

    def test_noiseless_labels_follow_latents(self):
        cfg = small_config(n_patients=40, feature_noise_sd=0.0, feature_dim=8)
        ds, latent = generate_with_latents(cfg)
        np.testing.assert_array_equal(ds.labels, np.minimum(1 + np.floor(latent * 5), 5))
        # a linear probe with intercept recovers the latents exactly
        design = np.hstack([ds.features, np.ones((len(ds), 1))])
        coef, *_ = np.linalg.lstsq(design, latent, rcond=None)
        np.testing.assert_allclose(design @ coef, latent, atol=1e-9)

    def test_full_label_noise_moves_every_label_by_one(self):
        clean = generate(small_config(n_patients=60, label_noise_prob=0.0))
        noisy = generate(small_config(n_patients=60, label_noise_prob=1.0))
        np.testing.assert_array_equal(clean.features, noisy.features)
        assert np.all(np.abs(noisy.labels - clean.labels) == 1)
        assert noisy.labels.min() >= 1 and noisy.labels.max() <= 5

    def test_partial_label_noise_rate(self):
        clean = generate(small_config(n_patients=300, label_noise_prob=0.0))
        noisy = generate(small_config(n_patients=300, label_noise_prob=0.3))
        rate = np.mean(clean.labels != noisy.labels)
        assert 0.27 < rate < 0.33

    @pytest.mark.parametrize("kw", [dict(n_patients=0), dict(label_noise_prob=1.5), dict(K=1),
                                    dict(feature_noise_sd=-1.0), dict(findings=("a",))])
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigError):
            small_config(**kw)


class TestPersistence:
    def test_empty_roundtrip(self, tmp_path):
        ds = Dataset(np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0)), ())
        save(ds, tmp_path / "e.jsonl")
        assert (tmp_path / "e.jsonl").read_text() == ""
        assert len(load(tmp_path / "e.jsonl")) == 0

    def test_single_sample_roundtrip(self, tmp_path):
        ds = Dataset([7], [[0.1 + 0.2, -1e-300, 3.0]], [[2, 5]], ("a", "b"))
        save(ds, tmp_path / "one.jsonl")
        assert load(tmp_path / "one.jsonl") == ds

    def test_line_schema(self, tmp_path):
        save(generate(small_config(n_patients=2, samples_per_patient=1)), tmp_path / "d.jsonl")
        rec = json.loads((tmp_path / "d.jsonl").read_text().splitlines()[0])
        assert set(rec) == {"patient_id", "features", "labels"}
        assert list(rec["labels"]) == list(small_config().findings)

    def test_large_reserialization_fixpoint(self, tmp_path):
        ds = generate(SynthConfig(n_patients=1000, samples_per_patient=10, seed=3))
        save(ds, tmp_path / "a.jsonl")
        loaded = load(tmp_path / "a.jsonl")
        assert loaded == ds
        save(loaded, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_malformed_line_reports_number(self, tmp_path):
        save(generate(small_config(n_patients=2, samples_per_patient=1)), tmp_path / "d.jsonl")
        with open(tmp_path / "d.jsonl", "a") as fh:
            fh.write("{not json\n")
        with pytest.raises(DataParseError) as info:
            load(tmp_path / "d.jsonl")
        assert info.value.line_number == 3

    def test_missing_finding(self, tmp_path):
        lines = ['{"patient_id": 1, "features": [0.5], "labels": {"a": 1, "b": 2}}',
                 '{"patient_id": 2, "features": [0.5], "labels": {"a": 3}}']
        (tmp_path / "d.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match="line 2"):
            load(tmp_path / "d.jsonl")


class TestSplit:
    def test_ten_patients(self):
        ds = generate(small_config(n_patients=10))
        plan = split(ds, 0.2, 5, seed=0)
        assert len(plan.test_patient_ids) == 2
        assert sorted(len(f) for f in plan.folds) == [1, 1, 2, 2, 2]
        plan.validate(ds.patients())

    def test_minimum_one_test_patient(self):
        plan = split(generate(small_config(n_patients=6)), 0.1, 5, seed=0)
        assert len(plan.test_patient_ids) == 1

    def test_too_few_patients(self):
        with pytest.raises(DataError):
            split(generate(small_config(n_patients=5)), 0.2, 5)

    def test_seed_determinism(self):
        ds = generate(small_config(n_patients=50))
        assert split(ds, seed=3) == split(ds, seed=3)
        assert split(ds, seed=3) != split(ds, seed=4)

    def test_train_patients_excludes_fold_and_test(self):
        ds = generate(small_config(n_patients=30))
        plan = split(ds, seed=2)
        for k in range(5):
            tr = plan.train_patients(k)
            assert not tr & plan.folds[k] and not tr & plan.test_patient_ids
            assert len(tr) + len(plan.folds[k]) + len(plan.test_patient_ids) == 30

    def test_json_roundtrip(self):
        plan = split(generate(small_config(n_patients=20)), seed=5)
        assert SplitPlan.from_json(json.loads(json.dumps(plan.to_json()))) == plan

    def test_json_rejects_overlap(self):
        with pytest.raises(DataError):
            SplitPlan.from_json({"test_patient_ids": [1], "folds": [[1, 2], [3]]})


@settings(max_examples=40, deadline=None)
@given(n_patients=st.integers(6, 80), per_patient=st.integers(1, 4), seed=st.integers(0, 2**32 - 1),
       frac=st.floats(0.05, 0.5))
def test_split_properties(n_patients, per_patient, seed, frac):
    assume(n_patients - max(1, int(np.floor(frac * n_patients))) >= 5)
    ds = generate(small_config(n_patients=n_patients, samples_per_patient=per_patient, seed=seed % 1000))
    plan = split(ds, frac, 5, seed=seed)
    parts = [plan.test_patient_ids, *plan.folds]
    assert sum(len(p) for p in parts) == n_patients
    assert set().union(*parts) == set(ds.patients().tolist())
    sizes = [len(f) for f in plan.folds]
    assert max(sizes) - min(sizes) <= 1
    # every sample lands in exactly one partition
    membership = sum(np.isin(ds.patient_ids, list(p)).astype(int) for p in parts)
    assert np.all(membership == 1)
