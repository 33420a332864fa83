import shutil
from pathlib import Path

import numpy as np
import pytest

from mcmult.config import MODALITIES, Modality
from mcmult.data import (
    MultimodalSample,
    SyntheticSpec,
    batch_and_pad,
    class_to_score,
    collate,
    generate_synthetic,
    load_dataset,
    matched_filter_accuracy,
    save_dataset,
    score_to_class,
    split,
)
from mcmult.errors import ConfigError, ContractError, DatasetLoadError

FIXTURE = Path(__file__).parent / "fixtures" / "tiny"


def same(a, b):
    return all(np.array_equal(a[m].data, b[m].data) for m in MODALITIES) and a.label == b.label


def test_generation_is_deterministic():
    spec = SyntheticSpec(n_samples=25, seed=3)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert all(same(x, y) for x, y in zip(a, b))
    c = generate_synthetic(SyntheticSpec(n_samples=25, seed=4))
    assert not all(same(x, y) for x, y in zip(a, c))


def test_generated_samples_are_unaligned_and_in_range():
    spec = SyntheticSpec(n_samples=200, seed=1)
    samples = generate_synthetic(spec)
    lengths = np.array([s.lengths for s in samples])
    for k, (lo, hi) in enumerate(spec.lengths):
        assert lengths[:, k].min() >= lo and lengths[:, k].max() <= hi
    assert (lengths[:, 0] != lengths[:, 1]).mean() > 0.5
    assert {s.label for s in samples} == {0, 1}
    assert abs(np.mean([s.label for s in samples]) - 0.5) < 0.1


def test_score_labels_in_range():
    samples = generate_synthetic(SyntheticSpec(n_samples=30, num_classes=7, label_kind="score"))
    assert all(-3.0 <= s.label <= 3.0 for s in samples)
    assert np.array_equal(score_to_class(class_to_score(np.arange(7), 7), 7), np.arange(7))


def test_zero_snr_is_chance():
    spec = SyntheticSpec(n_samples=1000, snr=0.0, seed=5)
    acc = matched_filter_accuracy(generate_synthetic(spec), spec)
    assert abs(acc - 0.5) < 0.06


def test_matched_filter_separates_modalities():
    spec = SyntheticSpec(n_samples=600, seed=2)
    samples = generate_synthetic(spec)
    assert matched_filter_accuracy(samples, spec) >= 0.95
    for m in MODALITIES:
        assert matched_filter_accuracy(samples, spec, [m]) <= 0.75


@pytest.mark.parametrize(
    "changes",
    [dict(n_samples=0), dict(num_classes=1), dict(lengths=((0, 4), (8, 14), (10, 16))),
     dict(lengths=((6, 4), (8, 14), (10, 16))), dict(motif_width=9), dict(snr=-1.0), dict(label_kind="x")],
)
def test_invalid_spec_rejected(changes):
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticSpec(**changes))


def test_sample_contracts():
    with pytest.raises(ContractError):
        MultimodalSample.from_arrays(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2)), label=3.5)
    with pytest.raises(ContractError):
        MultimodalSample.from_arrays(np.ones((0, 2)), np.ones((2, 2)), np.ones((2, 2)), label=0)


# -- disk format ------------------------------------------------------------------


def test_round_trip_is_lossless(tmp_path):
    samples = generate_synthetic(SyntheticSpec(n_samples=7, seed=9))
    save_dataset(samples, tmp_path)
    loaded, manifest = load_dataset(tmp_path)
    assert manifest["samples"] == 7
    assert all(same(a, b) for a, b in zip(samples, loaded))


def test_round_trip_scores(tmp_path):
    samples = generate_synthetic(SyntheticSpec(n_samples=4, num_classes=7, label_kind="score"))
    save_dataset(samples, tmp_path, num_classes=7)
    loaded, manifest = load_dataset(tmp_path)
    assert manifest["label_kind"] == "score"
    assert all(same(a, b) for a, b in zip(samples, loaded))


def test_hand_written_fixture():
    samples, manifest = load_dataset(FIXTURE)
    assert len(samples) == 1 and manifest["num_classes"] == 2
    s = samples[0]
    assert s.lengths == (3, 5, 4)
    assert s[Modality.L].data[1, 0] == 1.25 and s[Modality.A].data[2, 0] == 1e-3
    assert s.label == 1


def test_manifest_count_mismatch(tmp_path):
    shutil.copytree(FIXTURE, tmp_path / "d")
    for m in "LVA":
        shutil.copy(tmp_path / "d" / f"0.{m}.csv", tmp_path / "d" / f"1.{m}.csv")
    with pytest.raises(DatasetLoadError, match="manifest lists 1"):
        load_dataset(tmp_path / "d")


def test_missing_manifest(tmp_path):
    with pytest.raises(DatasetLoadError, match="missing manifest"):
        load_dataset(tmp_path)


def test_extent_mismatch_and_non_finite(tmp_path):
    shutil.copytree(FIXTURE, tmp_path / "d")
    (tmp_path / "d" / "0.V.csv").write_text("1,2\n3,4\n")
    with pytest.raises(DatasetLoadError, match="columns"):
        load_dataset(tmp_path / "d")
    (tmp_path / "d" / "0.V.csv").write_text("1,2,nan\n")
    with pytest.raises(DatasetLoadError, match="non-finite"):
        load_dataset(tmp_path / "d")


# -- batching and splitting ---------------------------------------------------------


def fixed_length_sample(T, label=0):
    rng = np.random.default_rng(T)
    return MultimodalSample.from_arrays(*(rng.standard_normal((T, d)) for d in (2, 2, 2)), label=label)


def test_equal_lengths_give_full_masks():
    batch = collate([fixed_length_sample(4), fixed_length_sample(4)])
    assert all(batch.masks[m].all() for m in MODALITIES)


def test_padding_lengths_and_zeros():
    batch = collate([fixed_length_sample(2), fixed_length_sample(5)])
    m = Modality.V
    assert batch.data[m].shape == (2, 5, 2)
    assert list(batch.masks[m][0]) == [True, True, False, False, False]
    assert not batch.data[m][0, 2:].any()
    assert list(batch.lengths(m)) == [2, 5]


def test_batch_and_pad_covers_everything_once():
    samples = [fixed_length_sample(t % 5 + 1, label=t % 2) for t in range(23)]
    batches = batch_and_pad(samples, 5, seed=1)
    assert [len(b) for b in batches] == [5, 5, 5, 5, 3]
    assert sorted(np.concatenate([b.indices for b in batches])) == list(range(23))
    again = batch_and_pad(samples, 5, seed=1)
    assert all(np.array_equal(a.indices, b.indices) for a, b in zip(batches, again))


def test_batching_errors():
    with pytest.raises(ContractError):
        batch_and_pad([], 4)
    with pytest.raises(ContractError):
        batch_and_pad([fixed_length_sample(2)], 0)


def test_split_sizes_partition_and_determinism():
    samples = [fixed_length_sample(3, label=i % 2) for i in range(100)]
    parts = split(samples, (0.6, 0.2, 0.2), seed=4)
    assert [len(p) for p in parts] == [60, 20, 20]
    ids = [id(s) for p in parts for s in p]
    assert sorted(ids) == sorted(id(s) for s in samples) and len(set(ids)) == 100
    again = split(samples, (0.6, 0.2, 0.2), seed=4)
    assert all([id(s) for s in a] == [id(s) for s in b] for a, b in zip(parts, again))


@pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.0), (0.6, 0.2, 0.3), (1.0,)])
def test_split_rejects_degenerate_ratios(ratios):
    with pytest.raises(ConfigError):
        split([fixed_length_sample(3)], ratios)
