"""Teacher contract: determinism, normalization, mask independence, files."""

import numpy as np
import pytest

from mamlab.dsp import MelSpectrogram
from mamlab.errors import ConfigError, FormatError
from mamlab.patching import PatchGrid, patchify, sample_unstructured_mask
from mamlab.teacher import (
    FrozenTeacher,
    TargetMap,
    TeacherSpec,
    load_precomputed_targets,
    save_precomputed_targets,
    teacher_targets,
)


def _spec_and_grid(frames=64, seed=0):
    grid = PatchGrid(time_patches=frames // 16)
    spec = MelSpectrogram(np.random.default_rng(seed).normal(size=(frames, 128)))
    return spec, grid


class TestFrozenTeacher:
    def test_same_input_same_seed_bit_identical(self):
        spec, grid = _spec_and_grid()
        ts = TeacherSpec(feature_dim=16, seed=3)
        a = FrozenTeacher(ts, grid).targets(spec)
        b = FrozenTeacher(ts, grid).targets(spec)
        assert (a.values == b.values).all()

    def test_normalized_rows_have_unit_norm(self):
        spec, grid = _spec_and_grid(seed=1)
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=0, normalize=True), grid)
        norms = np.linalg.norm(teacher.targets(spec).values, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_unnormalized_rows_are_not_unit(self):
        spec, grid = _spec_and_grid(seed=1)
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=0, normalize=False), grid)
        norms = np.linalg.norm(teacher.targets(spec).values, axis=1)
        assert np.abs(norms - 1.0).max() > 1e-3

    def test_one_row_per_patch(self):
        spec, grid = _spec_and_grid(frames=128)
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=0), grid)
        assert teacher.targets(spec).values.shape == (grid.total, 16)

    def test_single_patch_perturbation_changes_its_row(self):
        spec, grid = _spec_and_grid(seed=2)
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=5), grid)
        base = teacher.targets(spec).values
        bumped_values = spec.values.copy()
        bumped_values[0:16, 0:16] += 1.0  # patch index 0
        bumped = teacher.targets(MelSpectrogram(bumped_values)).values
        assert np.abs(bumped[0] - base[0]).max() > 0

    def test_targets_independent_of_mask_plan(self):
        # teacher sees the full spectrogram, so one map serves every plan
        spec, grid = _spec_and_grid(seed=4)
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=1), grid)
        full = teacher.targets(spec).values
        for seed in range(5):
            plan = sample_unstructured_mask(grid.total, 0.4, rng_seed=seed)
            again = teacher.targets(spec).values
            assert (again == full).all()
            assert (again[plan.masked] == full[plan.masked]).all()

    def test_parameters_never_require_grad(self):
        _, grid = _spec_and_grid()
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=0), grid)
        assert not any(t.requires_grad for t in teacher.params.values())

    def test_forward_builds_no_graph_inside_training_tape(self):
        from mamlab.tensor import GradTape
        spec, grid = _spec_and_grid()
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=0), grid)
        with GradTape() as tape:
            teacher.targets(spec)
            assert len(tape) == 0

    def test_dim_mismatch_with_grid_rejected(self):
        spec, _ = _spec_and_grid(frames=64)
        wrong_grid = PatchGrid(time_patches=8)
        teacher = FrozenTeacher(TeacherSpec(feature_dim=16, seed=0), wrong_grid)
        with pytest.raises(ConfigError):
            teacher.targets(spec)

    def test_bad_kind_rejected(self):
        with pytest.raises(ConfigError):
            TeacherSpec(kind="clap_live").validate()


class TestPrecomputedTargets:
    def test_round_trip_bit_exact(self, tmp_path):
        values = np.random.default_rng(0).normal(size=(512, 32))
        path = tmp_path / "targets.bin"
        save_precomputed_targets(path, TargetMap(values))
        loaded = load_precomputed_targets(path, 512, 32)
        assert (loaded.values == values).all()

    def test_truncated_file_rejected(self, tmp_path):
        values = np.random.default_rng(1).normal(size=(16, 8))
        path = tmp_path / "targets.bin"
        save_precomputed_targets(path, TargetMap(values))
        raw = path.read_bytes()
        path.write_bytes(raw[:-64])
        with pytest.raises(FormatError, match="truncated"):
            load_precomputed_targets(path, 16, 8)

    def test_shape_mismatch_names_expected_and_found(self, tmp_path):
        values = np.random.default_rng(2).normal(size=(16, 8))
        path = tmp_path / "targets.bin"
        save_precomputed_targets(path, TargetMap(values))
        with pytest.raises(FormatError, match=r"\(16, 8\).*|\(512, 32\).*"):
            load_precomputed_targets(path, 512, 32)

    def test_documented_layout_loads(self, tmp_path):
        values = np.random.default_rng(3).normal(size=(512, 32))
        path = tmp_path / "t512.bin"
        save_precomputed_targets(path, TargetMap(values))
        loaded = load_precomputed_targets(path, 512, 32)
        assert loaded.values.shape == (512, 32)

    def test_teacher_targets_dispatches_to_file(self, tmp_path):
        spec, grid = _spec_and_grid()
        values = np.random.default_rng(4).normal(size=(grid.total, 16))
        path = tmp_path / "file.bin"
        save_precomputed_targets(path, TargetMap(values))
        ts = TeacherSpec(kind="precomputed_file", feature_dim=16, path=str(path))
        loaded = teacher_targets(spec, ts, grid)
        assert (loaded.values == values).all()
