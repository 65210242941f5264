"""Experiment driver: run configuration, pretraining and fine-tuning loops,
evaluation, checkpoint/resume, and ablation sweeps.

Every stochastic choice (batch order, mask plans) is a pure function of the
run seed and the step index, so an interrupted run resumed from a checkpoint
retraces the exact parameter trajectory, and a repeated (config, seed) run
reproduces its metrics bit for bit. Wall-clock is logged for observability
but is the one inherently nondeterministic column.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_blocks
from .data import LoadedDataset, load_dataset
from .errors import ConfigError, NumericError
from .metrics import accuracy, mean_average_precision
from .model import Model, ModelConfig
from .objectives import (
    ALL_MODES,
    LossBreakdown,
    LossWeights,
    classification_loss,
    default_weights,
    reconstruction_loss,
    target_loss,
    total_loss,
)
from .optim import AdamW, cosine_warmup_lr
from .patching import MaskPlan, sample_structured_mask, sample_unstructured_mask
from .tensor import GradTape, Tensor, backward, gather_rows, no_grad
from .teacher import FrozenTeacher, TeacherSpec, load_precomputed_targets

log = logging.getLogger(__name__)

CSV_FIELDS = ["step", "mode", "target_term", "cls_term", "recon_term", "total",
              "acc", "map", "realized_gamma", "seconds"]
DEFAULT_MASK_RATIOS = {"mam": 0.8, "mam_clap": 0.2, "supmam": 0.4,
                       "supmam_clap": 0.4, "cls": 0.4}
# seed-stream tags so batch order and mask sampling never share a stream
_BATCH_TAG, _MASK_TAG = 101, 202


@dataclass
class RunConfig:
    mode: str = "mam"
    dataset_dir: str = ""
    out_dir: str = ""
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights | None = None
    mask_kind: str = "unstructured"
    mask_ratio: float | None = None
    time_ratio: float = 0.2
    freq_ratio: float = 0.2
    lr: float = 2e-4
    batch_size: int = 4
    steps: int = 300
    warmup_frac: float = 0.05
    weight_decay: float = 0.01
    teacher: TeacherSpec | None = None
    seed: int = 0
    eval_every: int = 0        # fine-tune: evaluate every N steps (0 = final only)
    checkpoint_every: int = 0  # save intermediate checkpoints every N steps

    def finalized(self) -> "RunConfig":
        """Fill mode-dependent defaults and validate the combination."""
        cfg = replace(self)
        cfg.mode = cfg.mode.replace("-", "_").lower()
        if cfg.mode not in ALL_MODES:
            raise ConfigError(f"unknown mode {cfg.mode!r}; expected one of {ALL_MODES}")
        if cfg.weights is None:
            cfg.weights = default_weights(cfg.mode)
        cfg.weights.validate()
        if cfg.weights.mode != cfg.mode:
            raise ConfigError(f"weights mode {cfg.weights.mode!r} != run mode {cfg.mode!r}")
        if cfg.mask_ratio is None:
            cfg.mask_ratio = DEFAULT_MASK_RATIOS[cfg.mode]
        if cfg.mode in ("mam_clap", "supmam_clap"):
            if cfg.teacher is None:
                raise ConfigError(f"mode {cfg.mode} distills from a teacher; pass one "
                                  "(e.g. --teacher frozen-random)")
            cfg.teacher.validate()
            if cfg.teacher.feature_dim != cfg.model.head_out_dim:
                raise ConfigError(
                    f"teacher feature_dim {cfg.teacher.feature_dim} != model head_out_dim "
                    f"{cfg.model.head_out_dim}")
        if cfg.batch_size < 1 or cfg.steps < 1:
            raise ConfigError("batch_size and steps must be positive")
        cfg.model.validate()
        return cfg

    def to_header(self) -> dict[str, str]:
        header = self.model.to_header()
        header.update({
            "run.mode": self.mode,
            "run.mask_kind": self.mask_kind,
            "run.mask_ratio": repr(self.mask_ratio),
            "run.time_ratio": repr(self.time_ratio),
            "run.freq_ratio": repr(self.freq_ratio),
            "run.lr": repr(self.lr),
            "run.batch_size": str(self.batch_size),
            "run.steps": str(self.steps),
            "run.warmup_frac": repr(self.warmup_frac),
            "run.weight_decay": repr(self.weight_decay),
            "run.seed": str(self.seed),
            "run.lambda_cls": repr(self.weights.lambda_cls),
            "run.tau": repr(self.weights.tau),
        })
        if self.teacher is not None:
            header.update({
                "teacher.kind": self.teacher.kind,
                "teacher.feature_dim": str(self.teacher.feature_dim),
                "teacher.seed": str(self.teacher.seed),
                "teacher.normalize": str(int(self.teacher.normalize)),
            })
            if self.teacher.path:
                header["teacher.path"] = self.teacher.path
        return header


@dataclass
class MetricsReport:
    rows: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    realized_gamma: float = 0.0

    @property
    def first_total(self) -> float:
        return float(self.rows[0]["total"])

    @property
    def last_total(self) -> float:
        return float(self.rows[-1]["total"])

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _format_cell(row.get(k)) for k in CSV_FIELDS})
        return path


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _batch_indices(train_idx: np.ndarray, batch_size: int, seed: int, step: int) -> np.ndarray:
    rng = np.random.default_rng([seed, _BATCH_TAG, step])
    replace_draw = batch_size > len(train_idx)
    return rng.choice(train_idx, size=batch_size, replace=replace_draw)


def _mask_plan(cfg: RunConfig, dataset: LoadedDataset, step: int, slot: int) -> MaskPlan:
    seed = [cfg.seed, _MASK_TAG, step, slot]
    if cfg.mask_kind == "structured":
        return sample_structured_mask(dataset.grid, cfg.time_ratio, cfg.freq_ratio, seed)
    return sample_unstructured_mask(dataset.grid.total, cfg.mask_ratio, seed)


class _TargetCache:
    """Per-clip teacher targets; the teacher never sees a mask plan."""

    def __init__(self, cfg: RunConfig, dataset: LoadedDataset):
        self.values: dict[int, np.ndarray] = {}
        self.teacher = None
        self.file_targets = None
        if cfg.teacher is None:
            return
        if cfg.teacher.kind == "frozen_random":
            self.teacher = FrozenTeacher(cfg.teacher, dataset.grid)
            self.dataset = dataset
        else:
            loaded = load_precomputed_targets(cfg.teacher.path, dataset.grid.total,
                                              cfg.teacher.feature_dim)
            self.file_targets = loaded.values

    def get(self, clip: int) -> np.ndarray:
        if self.file_targets is not None:
            return self.file_targets
        if clip not in self.values:
            from .dsp import MelSpectrogram
            self.values[clip] = self.teacher.targets(
                MelSpectrogram(self.dataset.specs[clip])).values
        return self.values[clip]


def _clip_labels(dataset: LoadedDataset, batch: np.ndarray):
    if dataset.label_mode == "single":
        return dataset.single_labels(batch)
    return dataset.label_matrix(batch)


def _pretrain_step(cfg: RunConfig, model: Model, dataset: LoadedDataset,
                   targets: _TargetCache, step: int) -> tuple[LossBreakdown, float]:
    """One optimization step over a batch encoded as a single token sequence.

    All clips in a step share the mask ratio, so visible/masked counts match
    and the batched losses equal the mean of the per-clip losses exactly.
    """
    batch = _batch_indices(dataset.train_indices, cfg.batch_size, cfg.seed, step)
    mode = cfg.mode
    needs_target = mode in ("mam_clap", "supmam_clap")
    needs_recon = mode in ("mam", "supmam")
    needs_cls = mode in ("supmam", "supmam_clap", "cls")
    n = dataset.grid.total

    plans = [_mask_plan(cfg, dataset, step, slot) for slot in range(len(batch))]
    realized_gamma = plans[0].gamma
    with GradTape():
        z_all = model.encode_batch(
            [dataset.seqs[clip].features[plan.visible] for clip, plan in zip(batch, plans)],
            [plan.visible for plan in plans])

        components: dict[str, Tensor | None] = {}
        if needs_target or needs_recon:
            z = model.decode_batch(z_all, plans)
            vis_rows = np.concatenate([c * n + plan.visible for c, plan in enumerate(plans)])
            mask_rows = np.concatenate([c * n + plan.masked for c, plan in enumerate(plans)])
            if needs_target:
                t_maps = [targets.get(clip) for clip in batch]
                y = model.project_head(z)
                t_v = np.concatenate([t[plan.visible] for t, plan in zip(t_maps, plans)])
                t_m = np.concatenate([t[plan.masked] for t, plan in zip(t_maps, plans)])
                components["target"] = target_loss(
                    gather_rows(y, vis_rows), Tensor(t_v),
                    gather_rows(y, mask_rows), Tensor(t_m))
            if needs_recon:
                pred_m = gather_rows(model.recon_head(z), mask_rows)
                patches_m = np.concatenate(
                    [dataset.seqs[clip].features[plan.masked]
                     for clip, plan in zip(batch, plans)])
                components["recon"] = reconstruction_loss(pred_m, patches_m)
        if needs_cls:
            pooled = model.pool_segments(z_all, len(batch))
            logits = model.classify_pooled(pooled, training=True)
            components["cls"] = classification_loss(logits, cfg.weights.tau,
                                                    _clip_labels(dataset, batch))
        breakdown = total_loss(components, cfg.weights)
        if not np.isfinite(breakdown.total):
            raise NumericError(f"non-finite loss {breakdown.total} at step {step}")
        backward(breakdown.total_tensor)
    return breakdown, realized_gamma


def _optimizer_blocks(opt: AdamW) -> dict[str, np.ndarray]:
    blocks = {}
    for name in opt.state.m:
        blocks[f"opt.m.{name}"] = opt.state.m[name]
        blocks[f"opt.v.{name}"] = opt.state.v[name]
    return blocks


def _restore_optimizer(opt: AdamW, blocks: dict[str, np.ndarray], step: int) -> None:
    opt.state.step = step
    for name in opt.params:
        m_key, v_key = f"opt.m.{name}", f"opt.v.{name}"
        if m_key in blocks:
            opt.state.m[name] = blocks[m_key].copy()
            opt.state.v[name] = blocks[v_key].copy()


def _save_run_checkpoint(model: Model, cfg: RunConfig, dataset: LoadedDataset,
                         opt: AdamW, step: int, path) -> None:
    header = cfg.to_header()
    header.update({
        "run.step": str(step),
        "norm.mean": repr(dataset.norm_mean),
        "norm.std": repr(dataset.norm_std),
        "data.num_classes": str(dataset.num_classes),
        "data.label_mode": dataset.label_mode,
    })
    model.save(path, extra_header=header, extra_blocks=_optimizer_blocks(opt))


def pretrain(config: RunConfig, resume_from=None) -> tuple[Path, MetricsReport]:
    """Run one pretraining job; returns (checkpoint path, metrics)."""
    cfg = config.finalized()
    started = time.monotonic()
    dataset = load_dataset(cfg.dataset_dir)
    if cfg.model.num_classes != dataset.num_classes:
        cfg = replace(cfg, model=replace(cfg.model, num_classes=dataset.num_classes))
    model = Model(cfg.model, dataset.grid, rng_seed=cfg.seed)
    targets = _TargetCache(cfg, dataset)
    opt = AdamW(model.trainable_params(cfg.mode), lr=cfg.lr,
                weight_decay=cfg.weight_decay)

    start_step = 0
    if resume_from is not None:
        header, blocks = load_blocks(resume_from)
        if ModelConfig.from_header(header) != cfg.model:
            raise ConfigError("resume checkpoint model config does not match run config")
        model.load_state(blocks)
        start_step = int(header["run.step"])
        _restore_optimizer(opt, blocks, start_step)
        log.info("resuming from %s at step %d", resume_from, start_step)

    report = MetricsReport()
    out_dir = Path(cfg.out_dir)
    for step in range(start_step, cfg.steps):
        breakdown, gamma = _pretrain_step(cfg, model, dataset, targets, step)
        opt.step(lr=cosine_warmup_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac))
        opt.zero_grad()
        report.rows.append({
            "step": step, "mode": cfg.mode,
            "target_term": breakdown.target_term, "cls_term": breakdown.cls_term,
            "recon_term": breakdown.recon_term, "total": breakdown.total,
            "acc": None, "map": None, "realized_gamma": gamma,
            "seconds": time.monotonic() - started,
        })
        report.realized_gamma = gamma
        if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0 and step + 1 < cfg.steps:
            _save_run_checkpoint(model, cfg, dataset, opt, step + 1,
                                 out_dir / f"step_{step + 1:06d}.ckpt")
        if step == start_step or (step + 1) % 50 == 0:
            log.info("step %d/%d total %.6f", step + 1, cfg.steps, breakdown.total)

    ckpt_path = out_dir / "model.ckpt"
    _save_run_checkpoint(model, cfg, dataset, opt, cfg.steps, ckpt_path)
    report.wall_clock = time.monotonic() - started
    report.final = {"total": report.last_total, "mode": cfg.mode}
    report.write_csv(out_dir / "metrics.csv")
    return ckpt_path, report


def _evaluate_model(model: Model, dataset: LoadedDataset, indices: np.ndarray) -> dict:
    """Deterministic eval-mode scoring; never builds a graph."""
    if len(indices) == 0:
        raise ConfigError("evaluation split is empty")
    scores = np.zeros((len(indices), model.config.num_classes))
    with no_grad():
        for row, clip in enumerate(indices):
            logits = model.forward_finetune(dataset.seqs[clip], plan=None, training=False)
            scores[row] = logits.data[0]
    out = {}
    if dataset.label_mode == "single":
        out["acc"] = accuracy(scores, dataset.single_labels(indices))
        out["map"] = None
    else:
        out["acc"] = None
        out["map"] = mean_average_precision(scores, dataset.label_matrix(indices))
    return out


def finetune(config: RunConfig, init_checkpoint=None) -> tuple[Path, MetricsReport]:
    """Fine-tune the encoder with structured masking and a fresh task head.

    init_checkpoint None trains from random initialization (the scratch
    baseline). Only encoder weights transfer; decoder and pretrain heads are
    dropped and the classification head is re-initialized.
    """
    cfg = replace(config, mode="cls", weights=None, mask_kind="structured").finalized()
    cfg = replace(cfg, weights=LossWeights(lambda_cls=1.0, tau=config.weights.tau
                                           if config.weights else 1.0, mode="cls"))
    started = time.monotonic()
    norm_stats = None
    init_blocks = None
    if init_checkpoint is not None:
        header, init_blocks = load_blocks(init_checkpoint)
        init_model_cfg = ModelConfig.from_header(header)
        mismatches = [f"{name}: checkpoint {got} vs run {want}"
                      for name, got, want in (
                          ("embed_dim", init_model_cfg.embed_dim, cfg.model.embed_dim),
                          ("encoder_layers", init_model_cfg.encoder_layers, cfg.model.encoder_layers),
                          ("encoder_heads", init_model_cfg.encoder_heads, cfg.model.encoder_heads))
                      if got != want]
        if mismatches:
            raise ConfigError("checkpoint incompatible with fine-tune config: "
                              + "; ".join(mismatches))
        norm_stats = (float(header["norm.mean"]), float(header["norm.std"]))

    dataset = load_dataset(cfg.dataset_dir, norm_stats=norm_stats)
    if cfg.model.num_classes != dataset.num_classes:
        cfg = replace(cfg, model=replace(cfg.model, num_classes=dataset.num_classes))
    model = Model(cfg.model, dataset.grid, rng_seed=cfg.seed)
    if init_blocks is not None:
        model.load_state(init_blocks, names=model.encoder_param_names())

    opt = AdamW(model.trainable_params("finetune"), lr=cfg.lr, weight_decay=cfg.weight_decay)
    report = MetricsReport()
    out_dir = Path(cfg.out_dir)

    for step in range(cfg.steps):
        batch = _batch_indices(dataset.train_indices, cfg.batch_size, cfg.seed, step)
        seqs = [dataset.seqs[clip] for clip in batch]
        plans = [_mask_plan(cfg, dataset, step, slot) for slot in range(len(batch))]
        gamma = plans[0].gamma
        with GradTape():
            logits = model.finetune_batch(seqs, plans, training=True)
            loss = classification_loss(logits, cfg.weights.tau, _clip_labels(dataset, batch))
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss {value} at step {step}")
            backward(loss)
        opt.step(lr=cosine_warmup_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac))
        opt.zero_grad()
        row = {"step": step, "mode": "finetune", "target_term": 0.0, "cls_term": value,
               "recon_term": 0.0, "total": value, "acc": None, "map": None,
               "realized_gamma": gamma, "seconds": time.monotonic() - started}
        if cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            row.update(_evaluate_model(model, dataset, dataset.eval_indices))
        report.rows.append(row)
        report.realized_gamma = gamma

    final_eval = _evaluate_model(model, dataset, dataset.eval_indices)
    report.final = dict(final_eval)
    report.final["total"] = report.last_total
    report.rows.append({
        "step": cfg.steps, "mode": "eval", "target_term": None, "cls_term": None,
        "recon_term": None, "total": report.last_total,
        "acc": final_eval["acc"], "map": final_eval["map"],
        "realized_gamma": report.realized_gamma,
        "seconds": time.monotonic() - started,
    })
    ckpt_path = out_dir / "finetuned.ckpt"
    _save_run_checkpoint(model, cfg, dataset, opt, cfg.steps, ckpt_path)
    report.wall_clock = time.monotonic() - started
    report.write_csv(out_dir / "metrics.csv")
    return ckpt_path, report


def evaluate_checkpoint(ckpt_path, dataset_dir, split: str = "eval") -> MetricsReport:
    """Deterministic evaluation of a saved model on a dataset split."""
    model, header, _ = Model.from_checkpoint(ckpt_path)
    norm_stats = None
    if "norm.mean" in header:
        norm_stats = (float(header["norm.mean"]), float(header["norm.std"]))
    dataset = load_dataset(dataset_dir, norm_stats=norm_stats)
    indices = dataset.eval_indices if split == "eval" else dataset.train_indices
    started = time.monotonic()
    result = _evaluate_model(model, dataset, indices)
    report = MetricsReport(final=result, wall_clock=time.monotonic() - started)
    report.rows.append({
        "step": 0, "mode": "eval", "target_term": None, "cls_term": None,
        "recon_term": None, "total": None, "acc": result["acc"], "map": result["map"],
        "realized_gamma": None, "seconds": report.wall_clock,
    })
    return report


SWEEP_AXES = ("mask_ratio", "decoder_layers", "lambda_cls", "objectives")
_OBJECTIVE_MODES = {"rec": "mam", "cls": "cls", "rec+cls": "supmam"}


def _apply_axis(base: RunConfig, axis: str, value) -> RunConfig:
    if axis == "mask_ratio":
        return replace(base, mask_ratio=float(value))
    if axis == "decoder_layers":
        return replace(base, model=replace(base.model, decoder_layers=int(value)))
    if axis == "lambda_cls":
        if base.mode not in ("supmam", "supmam_clap"):
            raise ConfigError(f"lambda_cls sweeps need a supmam mode, not {base.mode}")
        weights = default_weights(base.mode)
        weights.lambda_cls = float(value)
        return replace(base, weights=weights)
    if axis == "objectives":
        if str(value) not in _OBJECTIVE_MODES:
            raise ConfigError(f"objectives axis takes rec|cls|rec+cls, got {value!r}")
        mode = _OBJECTIVE_MODES[str(value)]
        # keep the base mask ratio so the axis isolates the objective mix
        return replace(base, mode=mode, weights=None,
                       mask_ratio=base.mask_ratio or DEFAULT_MASK_RATIOS[base.mode])
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def run_ablation_sweep(base: RunConfig, axis: str, values) -> tuple[Path, list[MetricsReport]]:
    """One pretrain run per axis value, shared seed; emits a summary CSV."""
    base = base.finalized()
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out_dir = Path(base.out_dir)
    reports = []
    rows = []
    for value in values:
        run_cfg = _apply_axis(base, axis, value)
        run_cfg = replace(run_cfg, out_dir=str(out_dir / f"{axis}_{value}"))
        _, report = pretrain(run_cfg)
        reports.append(report)
        rows.append({
            "axis": axis, "value": value, "mode": run_cfg.finalized().mode,
            "target_term": report.rows[-1]["target_term"],
            "cls_term": report.rows[-1]["cls_term"],
            "recon_term": report.rows[-1]["recon_term"],
            "total": report.last_total,
            "realized_gamma": report.realized_gamma,
        })
    table_path = out_dir / "sweep.csv"
    table_path.parent.mkdir(parents=True, exist_ok=True)
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format_cell(v) for k, v in row.items()})
    return table_path, reports


# ---------------------------------------------------------------------------
# config file parsing (flat key = value lines, # comments)
# ---------------------------------------------------------------------------

def parse_config_file(path) -> dict[str, str]:
    values = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


_MODEL_FIELD_NAMES = {f.name for f in fields(ModelConfig)}
_RUN_SCALARS = {
    "mask_ratio": float, "time_ratio": float, "freq_ratio": float,
    "lr": float, "warmup_frac": float, "weight_decay": float,
    "batch_size": int, "steps": int, "seed": int,
    "eval_every": int, "checkpoint_every": int,
}


def build_run_config(options: dict[str, str]) -> RunConfig:
    """Assemble a RunConfig from flat string options (file and/or CLI)."""
    cfg = RunConfig()
    model_kwargs = {}
    lambda_cls = None
    tau = None
    teacher_kwargs: dict = {}
    for key, value in options.items():
        if key.startswith("model."):
            name = key[len("model."):]
            if name not in _MODEL_FIELD_NAMES:
                raise ConfigError(f"unknown model option {key!r}")
            model_kwargs[name] = int(value)
        elif key in _RUN_SCALARS:
            setattr(cfg, key, _RUN_SCALARS[key](value))
        elif key == "mode":
            cfg.mode = value
        elif key == "mask_kind":
            if value not in ("unstructured", "structured"):
                raise ConfigError(f"mask_kind must be unstructured|structured, got {value!r}")
            cfg.mask_kind = value
        elif key == "dataset":
            cfg.dataset_dir = value
        elif key == "out":
            cfg.out_dir = value
        elif key == "lambda_cls":
            lambda_cls = float(value)
        elif key == "tau":
            tau = float(value)
        elif key == "teacher":
            teacher_kwargs.update(_parse_teacher_option(value))
        elif key == "teacher.feature_dim":
            teacher_kwargs["feature_dim"] = int(value)
        elif key == "teacher.seed":
            teacher_kwargs["seed"] = int(value)
        elif key == "teacher.normalize":
            teacher_kwargs["normalize"] = bool(int(value))
        else:
            raise ConfigError(f"unknown config option {key!r}")
    if model_kwargs:
        cfg.model = ModelConfig(**{**{f.name: getattr(cfg.model, f.name)
                                      for f in fields(ModelConfig)}, **model_kwargs})
    if teacher_kwargs:
        spec = TeacherSpec(feature_dim=cfg.model.head_out_dim)
        for name, value in teacher_kwargs.items():
            setattr(spec, name, value)
        cfg.teacher = spec
    if lambda_cls is not None or tau is not None:
        mode = cfg.mode.replace("-", "_").lower()
        weights = default_weights(mode)
        if lambda_cls is not None:
            weights.lambda_cls = lambda_cls
        if tau is not None:
            weights.tau = tau
        cfg.weights = weights
    return cfg


def _parse_teacher_option(value: str) -> dict:
    if value in ("frozen-random", "frozen_random"):
        return {"kind": "frozen_random"}
    if value.startswith("file:"):
        return {"kind": "precomputed_file", "path": value[len("file:"):]}
    raise ConfigError(f"teacher must be 'frozen-random' or 'file:<path>', got {value!r}")
