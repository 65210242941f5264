"""Frozen per-patch target providers.

The student's distillation targets come from a pluggable teacher that always
sees the full (unmasked) spectrogram and emits one feature vector per patch.
Two sources: a frozen randomly initialized two-block transformer, and a
precomputed file in the shared checkpoint container (so real cross-modal
features computed offline can be dropped in).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_blocks, save_blocks
from .dsp import MelSpectrogram
from .errors import ConfigError, FormatError
from .model import grid_coords, init_block, position_table, transformer_block, trunc_normal
from .patching import PATCH_VALUES, PatchGrid, patchify
from .tensor import Tensor, add, matmul, no_grad

TEACHER_BLOCKS = 2


@dataclass
class TeacherSpec:
    """How targets are produced: a frozen seeded network or a file."""
    kind: str = "frozen_random"  # or "precomputed_file"
    feature_dim: int = 32
    seed: int = 0
    normalize: bool = True
    path: str | None = None  # for precomputed_file

    def validate(self) -> None:
        if self.kind not in ("frozen_random", "precomputed_file"):
            raise ConfigError(f"unknown teacher kind {self.kind!r}")
        if self.kind == "precomputed_file" and not self.path:
            raise ConfigError("precomputed_file teacher needs a path")
        if self.feature_dim < 4 or self.feature_dim % 4 != 0:
            raise ConfigError(
                f"teacher feature_dim must be a positive multiple of 4, got {self.feature_dim}")


@dataclass
class TargetMap:
    """One target row per patch, aligned to patch-index order."""
    values: np.ndarray  # N x d

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise FormatError(f"target map must be 2-D, got shape {self.values.shape}")


def _teacher_heads(dim: int) -> int:
    for heads in (4, 2, 1):
        if dim % heads == 0:
            return heads
    return 1


class FrozenTeacher:
    """Seeded random transformer applied to the full patch sequence.

    Parameters are built once with requires_grad=False and never updated;
    forwards run with recording suppressed so no graph is ever built.
    """

    def __init__(self, spec: TeacherSpec, grid: PatchGrid):
        spec.validate()
        if spec.kind != "frozen_random":
            raise ConfigError(f"FrozenTeacher cannot serve kind {spec.kind!r}")
        self.spec = spec
        self.grid = grid
        dim = spec.feature_dim
        self.heads = _teacher_heads(dim)
        rng = np.random.default_rng(spec.seed)
        p: dict[str, Tensor] = {}
        p["embed.w"] = Tensor(trunc_normal(rng, (PATCH_VALUES, dim)))
        p["embed.b"] = Tensor(np.zeros(dim))
        for i in range(TEACHER_BLOCKS):
            init_block(rng, p, f"block.{i}", dim)
        p["out.w"] = Tensor(trunc_normal(rng, (dim, dim)))
        p["out.b"] = Tensor(np.zeros(dim))
        for t in p.values():
            t.requires_grad = False
        self.params = p
        self.pos = position_table(dim, grid_coords(grid))

    def targets(self, spec: MelSpectrogram) -> TargetMap:
        """Per-patch features for the full spectrogram; mask-independent."""
        seq = patchify(spec)
        if seq.grid != self.grid:
            raise ConfigError(
                f"spectrogram grid {seq.grid} does not match teacher grid {self.grid}")
        with no_grad():
            x = add(matmul(Tensor(seq.features), self.params["embed.w"]), self.params["embed.b"])
            x = add(x, Tensor(self.pos))
            for i in range(TEACHER_BLOCKS):
                x = transformer_block(self.params, f"block.{i}", x, self.heads)
            x = add(matmul(x, self.params["out.w"]), self.params["out.b"])
        values = x.data
        if self.spec.normalize:
            norms = np.linalg.norm(values, axis=1, keepdims=True)
            values = values / np.maximum(norms, 1e-30)
        return TargetMap(values)

    def parameter_snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}


def teacher_targets(spec: MelSpectrogram, ts: TeacherSpec, grid: PatchGrid) -> TargetMap:
    """Target map for one spectrogram under the given teacher spec."""
    ts.validate()
    if ts.kind == "frozen_random":
        return FrozenTeacher(ts, grid).targets(spec)
    return load_precomputed_targets(ts.path, grid.total, ts.feature_dim)


def save_precomputed_targets(path, targets: TargetMap) -> None:
    n, d = targets.values.shape
    save_blocks(path, {"targets.n": str(n), "targets.d": str(d)}, {"T": targets.values})


def load_precomputed_targets(path, expected_n: int, expected_d: int) -> TargetMap:
    header, blocks = load_blocks(path)
    if "T" not in blocks:
        raise FormatError(f"{path}: no 'T' block present")
    values = blocks["T"]
    if values.shape != (expected_n, expected_d):
        raise FormatError(
            f"{path}: target block is {values.shape}, expected ({expected_n}, {expected_d})")
    stated = (int(header.get("targets.n", -1)), int(header.get("targets.d", -1)))
    if stated != values.shape:
        raise FormatError(f"{path}: header says {stated}, block is {values.shape}")
    return TargetMap(values)
