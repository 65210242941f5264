"""Spectrogram patching and mask-plan sampling.

The padded frames x 128 grid tiles into 16x16 patches in time-major raster
order. Pretraining masks a floor(gamma*N)-sized uniform subset of patch
indices; fine-tuning masks whole patch-grid columns (time) and rows
(frequency). Partitioning and target splitting share the same index
semantics, so scattering the two halves back always reproduces the original.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import N_MELS, PATCH_EXTENT, MelSpectrogram
from .errors import ContractError, DimensionError, FormatError, ParameterError
from .tensor import Tensor, concat, gather_rows

PATCH_VALUES = PATCH_EXTENT * PATCH_EXTENT  # 256 values per patch
FREQ_PATCHES = N_MELS // PATCH_EXTENT       # 8


@dataclass(frozen=True)
class PatchGrid:
    """Arrangement of 16x16 patches tiling a padded spectrogram."""
    time_patches: int
    freq_patches: int = FREQ_PATCHES

    @property
    def total(self) -> int:
        return self.time_patches * self.freq_patches

    @classmethod
    def for_frames(cls, frames: int) -> "PatchGrid":
        if frames % PATCH_EXTENT != 0:
            raise DimensionError(f"frame count {frames} is not a multiple of {PATCH_EXTENT}")
        return cls(time_patches=frames // PATCH_EXTENT)


@dataclass
class PatchSequence:
    """Flattened patch features plus their (time, freq) grid coordinates."""
    features: np.ndarray  # N x 256, raster-flattened 16x16 blocks
    coords: np.ndarray    # N x 2 int (time_index, freq_index)
    grid: PatchGrid


@dataclass
class MaskPlan:
    """Disjoint visible/masked index sets over N patches."""
    visible: np.ndarray  # sorted
    masked: np.ndarray   # sorted
    total: int

    @property
    def gamma(self) -> float:
        return len(self.masked) / self.total

    def __post_init__(self):
        self.visible = np.asarray(self.visible, dtype=np.intp)
        self.masked = np.asarray(self.masked, dtype=np.intp)
        if len(self.visible) + len(self.masked) != self.total:
            raise ContractError(
                f"plan covers {len(self.visible)}+{len(self.masked)} of {self.total} indices")
        if np.intersect1d(self.visible, self.masked).size:
            raise ContractError("visible and masked sets overlap")


def patchify(spec: MelSpectrogram) -> PatchSequence:
    """Split frames x 128 into N patches of 256 values, time-major order."""
    values = spec.values
    frames, mels = values.shape
    if frames % PATCH_EXTENT != 0 or mels % PATCH_EXTENT != 0:
        raise DimensionError(
            f"spectrogram {frames}x{mels} does not tile into {PATCH_EXTENT}x{PATCH_EXTENT} patches")
    grid = PatchGrid(time_patches=frames // PATCH_EXTENT,
                     freq_patches=mels // PATCH_EXTENT)
    blocks = values.reshape(grid.time_patches, PATCH_EXTENT,
                            grid.freq_patches, PATCH_EXTENT)
    features = blocks.transpose(0, 2, 1, 3).reshape(grid.total, PATCH_VALUES)
    t_idx, f_idx = np.divmod(np.arange(grid.total), grid.freq_patches)
    coords = np.stack([t_idx, f_idx], axis=1)
    return PatchSequence(features=features.copy(), coords=coords, grid=grid)


def unpatchify(seq: PatchSequence) -> MelSpectrogram:
    """Inverse of patchify; bit-exact round trip."""
    grid = seq.grid
    blocks = seq.features.reshape(grid.time_patches, grid.freq_patches,
                                  PATCH_EXTENT, PATCH_EXTENT)
    values = blocks.transpose(0, 2, 1, 3).reshape(
        grid.time_patches * PATCH_EXTENT, grid.freq_patches * PATCH_EXTENT)
    return MelSpectrogram(values.copy())


def sample_unstructured_mask(total: int, gamma: float, rng_seed) -> MaskPlan:
    """Mask floor(gamma*N) indices drawn uniformly without replacement."""
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"mask ratio must be in [0, 1), got {gamma}")
    rng = np.random.default_rng(rng_seed)
    n_masked = int(np.floor(gamma * total))
    masked = np.sort(rng.choice(total, size=n_masked, replace=False))
    visible = np.setdiff1d(np.arange(total), masked, assume_unique=True)
    return MaskPlan(visible=visible, masked=masked, total=total)


def sample_structured_mask(grid: PatchGrid, time_ratio: float, freq_ratio: float,
                           rng_seed) -> MaskPlan:
    """Mask whole patch-grid time-columns and frequency-rows.

    floor(time_ratio * time_patches) columns and floor(freq_ratio * freq_patches)
    rows are chosen uniformly; the masked set is their union.
    """
    for name, ratio in (("time_ratio", time_ratio), ("freq_ratio", freq_ratio)):
        if not 0.0 <= ratio < 1.0:
            raise ParameterError(f"{name} must be in [0, 1), got {ratio}")
    rng = np.random.default_rng(rng_seed)
    n_cols = int(np.floor(time_ratio * grid.time_patches))
    n_rows = int(np.floor(freq_ratio * grid.freq_patches))
    cols = rng.choice(grid.time_patches, size=n_cols, replace=False)
    rows = rng.choice(grid.freq_patches, size=n_rows, replace=False)
    idx = np.arange(grid.total)
    in_col = np.isin(idx // grid.freq_patches, cols)
    in_row = np.isin(idx % grid.freq_patches, rows)
    masked = np.sort(idx[in_col | in_row])
    visible = np.setdiff1d(idx, masked, assume_unique=True)
    return MaskPlan(visible=visible, masked=masked, total=grid.total)


def _check_plan_rows(rows: int, plan: MaskPlan, what: str) -> None:
    if rows != plan.total:
        raise ContractError(f"{what} has {rows} rows but the plan covers {plan.total} patches")


def partition(seq: PatchSequence, plan: MaskPlan) -> tuple[np.ndarray, np.ndarray]:
    """Split patch features into (visible rows, masked rows), plan order."""
    _check_plan_rows(seq.features.shape[0], plan, "patch sequence")
    return seq.features[plan.visible], seq.features[plan.masked]


def split_targets(t: Tensor, plan: MaskPlan) -> tuple[Tensor, Tensor]:
    """Split an N x d tensor by plan indices; differentiable on both halves."""
    _check_plan_rows(t.shape[0], plan, "target tensor")
    return gather_rows(t, plan.visible), gather_rows(t, plan.masked)


def scatter_back(visible_rows: Tensor, masked_rows: Tensor, plan: MaskPlan) -> Tensor:
    """Inverse of split_targets: reassemble rows into patch-index order."""
    if visible_rows.shape[0] != len(plan.visible) or masked_rows.shape[0] != len(plan.masked):
        raise ContractError(
            f"row counts ({visible_rows.shape[0]}, {masked_rows.shape[0]}) do not match plan "
            f"({len(plan.visible)}, {len(plan.masked)})")
    perm = np.concatenate([plan.visible, plan.masked])
    inverse = np.empty(plan.total, dtype=np.intp)
    inverse[perm] = np.arange(plan.total)
    if len(plan.masked) == 0:
        return gather_rows(visible_rows, inverse)
    return gather_rows(concat([visible_rows, masked_rows], axis=0), inverse)


def serialize_plan(plan: MaskPlan) -> str:
    """Line-oriented text form: N, gamma, masked indices."""
    masked = " ".join(str(i) for i in plan.masked)
    return f"N={plan.total}\ngamma={plan.gamma!r}\nmasked={masked}\n"


def parse_plan(text: str) -> MaskPlan:
    fields = {}
    for line in text.strip().splitlines():
        if "=" not in line:
            raise FormatError(f"bad mask plan line: {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    for key in ("N", "gamma", "masked"):
        if key not in fields:
            raise FormatError(f"mask plan missing field {key!r}")
    total = int(fields["N"])
    masked = np.array([int(v) for v in fields["masked"].split()] if fields["masked"] else [],
                      dtype=np.intp)
    visible = np.setdiff1d(np.arange(total), masked, assume_unique=True)
    plan = MaskPlan(visible=visible, masked=np.sort(masked), total=total)
    stated = float(fields["gamma"])
    if abs(stated - plan.gamma) > 1e-12:
        raise FormatError(f"stated gamma {stated} does not match masked count {len(masked)}/{total}")
    return plan
