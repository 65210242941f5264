"""Synthetic dataset generation and the loading pipeline."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from mamlab.data import (
    SynthDatasetSpec,
    class_center_freq,
    generate_synth_dataset,
    load_dataset,
    load_manifest,
    split_indices,
    worker_count,
)
from mamlab.errors import ConfigError, InputError


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = SynthDatasetSpec(num_classes=4, clips_per_class=10, clip_seconds=1.0, seed=7)
    generate_synth_dataset(spec, out)
    return out


class TestGeneration:
    def test_counts_and_manifest(self, small_dataset):
        entries = load_manifest(small_dataset)
        assert len(entries) == 40
        wavs = sorted(small_dataset.glob("*.wav"))
        assert len(wavs) == 40

    def test_same_seed_bit_identical_files(self, tmp_path, small_dataset):
        spec = SynthDatasetSpec(num_classes=4, clips_per_class=10, clip_seconds=1.0, seed=7)
        other = tmp_path / "again"
        generate_synth_dataset(spec, other)
        for name in ("clip_00000.wav", "clip_00017.wav", "manifest.tsv"):
            assert _digest(other / name) == _digest(small_dataset / name)

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_synth_dataset(SynthDatasetSpec(clips_per_class=2, seed=1), a)
        generate_synth_dataset(SynthDatasetSpec(clips_per_class=2, seed=2), b)
        assert _digest(a / "clip_00000.wav") != _digest(b / "clip_00000.wav")

    def test_multi_label_manifest_lists_label_sets(self, tmp_path):
        out = tmp_path / "multi"
        generate_synth_dataset(SynthDatasetSpec(clips_per_class=5, label_mode="multi",
                                                seed=3), out)
        entries = load_manifest(out)
        assert any(len(labels) > 1 for _, labels in entries)
        assert all(len(labels) >= 1 for _, labels in entries)

    def test_center_freqs_are_distinct_and_ordered(self):
        freqs = [class_center_freq(c, 4) for c in range(4)]
        assert freqs == sorted(freqs)
        assert len(set(freqs)) == 4

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigError):
            SynthDatasetSpec(num_classes=1).validate()
        with pytest.raises(ConfigError):
            SynthDatasetSpec(label_mode="ranked").validate()


class TestLoading:
    def test_loaded_shapes_and_split(self, small_dataset):
        ds = load_dataset(small_dataset)
        assert ds.size == 40
        assert ds.num_classes == 4
        assert ds.grid.total == ds.grid.time_patches * 8
        assert len(ds.train_indices) + len(ds.eval_indices) == 40
        assert set(ds.train_indices) & set(ds.eval_indices) == set()

    def test_normalization_is_global_train_statistics(self, small_dataset):
        ds = load_dataset(small_dataset)
        train_values = np.stack([ds.specs[i] for i in ds.train_indices])
        # normalized train split has mean ~0 and std ~1
        assert abs(train_values.mean()) < 1e-10
        assert abs(train_values.std() - 1.0) < 1e-10

    def test_explicit_stats_are_reused(self, small_dataset):
        ds = load_dataset(small_dataset, norm_stats=(0.0, 1.0))
        assert ds.norm_mean == 0.0 and ds.norm_std == 1.0

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(InputError):
            load_manifest(tmp_path)

    def test_nearest_centroid_baseline_separates_classes(self, small_dataset):
        # spectral signatures must be separable: >90% with a trivial classifier
        ds = load_dataset(small_dataset)
        feats = np.stack([s.mean(axis=0) for s in ds.specs])
        labels = np.array([ls[0] for ls in ds.labels])
        centroids = np.stack([
            feats[ds.train_indices][labels[ds.train_indices] == c].mean(axis=0)
            for c in range(ds.num_classes)])
        dists = ((feats[ds.eval_indices][:, None, :] - centroids[None]) ** 2).sum(axis=2)
        acc = (dists.argmin(axis=1) == labels[ds.eval_indices]).mean()
        assert acc > 0.9

    def test_split_stride(self):
        train, eval_ = split_indices(10)
        np.testing.assert_array_equal(eval_, [0, 5])
        assert len(train) == 8


class TestWorkerCount:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("MAMLAB_THREADS", "2")
        assert worker_count() == 2

    def test_bad_env_rejected(self, monkeypatch):
        monkeypatch.setenv("MAMLAB_THREADS", "zero")
        with pytest.raises(ConfigError):
            worker_count()
        monkeypatch.setenv("MAMLAB_THREADS", "0")
        with pytest.raises(ConfigError):
            worker_count()

    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("MAMLAB_THREADS", raising=False)
        assert worker_count() >= 1
