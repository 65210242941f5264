"""Training objectives: dual-region target distillation, temperature-scaled
classification, masked-patch reconstruction, and their per-mode combination.

The target loss is squared Euclidean distance summed per token and
normalized by token count, applied to the visible and masked regions
separately. Classification divides logits by a temperature before
cross-entropy (single label) or binary cross-entropy (multi label).
Reconstruction compares decoder predictions against per-patch standardized
targets on the masked region only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, InputError, ParameterError
from .tensor import (
    Tensor,
    add,
    log,
    mul,
    reduce_mean,
    reduce_sum,
    reshape,
    scale,
    softmax,
    softplus,
    sub,
)

MODES = ("mam", "mam_clap", "supmam", "supmam_clap")
# "cls" is an internal extra used by the pretraining-objectives ablation axis
# (classification-only pretraining); it is not a public run mode.
ALL_MODES = MODES + ("cls",)

VARIANCE_FLOOR = 1e-6


@dataclass
class LossWeights:
    lambda_cls: float = 0.0
    tau: float = 10.0
    mode: str = "mam"

    def validate(self) -> None:
        if self.mode not in ALL_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {ALL_MODES}")
        if self.tau <= 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.lambda_cls < 0:
            raise ParameterError(f"lambda_cls must be nonnegative, got {self.lambda_cls}")
        if self.mode in ("mam", "mam_clap") and self.lambda_cls != 0.0:
            raise ConfigError(f"mode {self.mode} has no classification branch; lambda_cls must be 0")


def default_weights(mode: str) -> LossWeights:
    """Per-mode defaults: lambda_cls 0.01 for supmam, 1e-4 for supmam_clap."""
    lambdas = {"mam": 0.0, "mam_clap": 0.0, "supmam": 0.01, "supmam_clap": 1e-4, "cls": 1.0}
    if mode not in lambdas:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {ALL_MODES}")
    w = LossWeights(lambda_cls=lambdas[mode], tau=10.0, mode=mode)
    w.validate()
    return w


@dataclass
class LossBreakdown:
    """Scalar components for one batch plus the differentiable total."""
    target_term: float = 0.0
    cls_term: float = 0.0
    recon_term: float = 0.0
    total: float = 0.0
    total_tensor: Tensor | None = None

    def recombined(self, weights: LossWeights) -> float:
        base = {"mam": self.recon_term,
                "mam_clap": self.target_term,
                "supmam": self.recon_term + weights.lambda_cls * self.cls_term,
                "supmam_clap": self.target_term + weights.lambda_cls * self.cls_term,
                "cls": self.cls_term}
        return base[weights.mode]


def _region_term(pred: Tensor, target: Tensor, count: int, name: str) -> Tensor:
    if pred.shape != target.shape:
        raise ContractError(
            f"{name} prediction shape {pred.shape} does not match target {target.shape}")
    if pred.shape[0] != count:
        raise ContractError(f"{name} has {pred.shape[0]} rows, stated count is {count}")
    diff = sub(pred, target)
    return scale(reduce_sum(mul(diff, diff)), 1.0 / count)


def target_loss(y_v: Tensor, t_v: Tensor, y_m: Tensor, t_m: Tensor,
                l_v: int | None = None, l_m: int | None = None) -> Tensor:
    """Per-token squared L2 on both regions: sum_v/l_v + sum_m/l_m.

    The masked term is dropped when no patches are masked.
    """
    l_v = y_v.shape[0] if l_v is None else l_v
    l_m = y_m.shape[0] if l_m is None else l_m
    if l_v < 1:
        raise ContractError("target loss needs at least one visible token")
    visible = _region_term(y_v, t_v, l_v, "visible region")
    if l_m == 0:
        return visible
    return add(visible, _region_term(y_m, t_m, l_m, "masked region"))


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    eye = np.zeros((len(labels), num_classes))
    eye[np.arange(len(labels)), labels] = 1.0
    return eye


def classification_loss(logits: Tensor, tau: float, labels) -> Tensor:
    """Temperature-scaled cross-entropy.

    Integer labels give softmax CE of logits/tau; a binary matrix gives the
    mean per-class binary CE of sigmoid(logits/tau).
    """
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    if logits.ndim == 1:
        logits = reshape(logits, (1, logits.shape[0]))
    batch, num_classes = logits.shape
    z = scale(logits, 1.0 / tau)
    labels = np.asarray(labels)

    if labels.ndim <= 1 and np.issubdtype(labels.dtype, np.integer):
        labels = np.atleast_1d(labels)
        if len(labels) != batch:
            raise ContractError(f"{len(labels)} labels for {batch} logit rows")
        if labels.min() < 0 or labels.max() >= num_classes:
            raise InputError(
                f"label out of range: got {labels.min()}..{labels.max()} for {num_classes} classes")
        picked = mul(log(softmax(z)), Tensor(_one_hot(labels, num_classes)))
        return scale(reduce_sum(picked), -1.0 / batch)

    labels = np.atleast_2d(labels).astype(np.float64)
    if labels.shape != (batch, num_classes):
        raise ContractError(
            f"multi-label matrix {labels.shape} does not match logits {logits.shape}")
    if ((labels != 0.0) & (labels != 1.0)).any():
        raise InputError("multi-label targets must be binary")
    # y*softplus(-z) + (1-y)*softplus(z) == BCE of sigmoid(z), computed stably
    pos = mul(Tensor(labels), softplus(scale(z, -1.0)))
    neg = mul(Tensor(1.0 - labels), softplus(z))
    return reduce_mean(add(pos, neg))


def normalize_patch_targets(patches: np.ndarray) -> np.ndarray:
    """Standardize each patch row to zero mean / unit variance (floored)."""
    mean = patches.mean(axis=1, keepdims=True)
    var = patches.var(axis=1, keepdims=True)
    return (patches - mean) / np.sqrt(var + VARIANCE_FLOOR)


def reconstruction_loss(pred_m: Tensor, patches_m: np.ndarray) -> Tensor:
    """MSE against per-patch standardized targets, masked region only."""
    patches_m = np.asarray(patches_m, dtype=np.float64)
    if pred_m.shape[0] < 1:
        raise ContractError("reconstruction needs at least one masked patch (gamma > 0)")
    if pred_m.shape != patches_m.shape:
        raise ContractError(
            f"prediction shape {pred_m.shape} does not match patches {patches_m.shape}")
    target = Tensor(normalize_patch_targets(patches_m))
    diff = sub(pred_m, target)
    return reduce_mean(mul(diff, diff))


def total_loss(components: dict[str, Tensor | None], weights: LossWeights) -> LossBreakdown:
    """Combine per-mode components; missing required pieces are config errors."""
    weights.validate()
    required = {"mam": ("recon",), "mam_clap": ("target",),
                "supmam": ("recon", "cls"), "supmam_clap": ("target", "cls"),
                "cls": ("cls",)}[weights.mode]
    for name in required:
        if components.get(name) is None:
            raise ConfigError(f"mode {weights.mode} requires a '{name}' loss component")

    breakdown = LossBreakdown()
    target = components.get("target")
    cls = components.get("cls")
    recon = components.get("recon")
    if target is not None:
        breakdown.target_term = target.item()
    if cls is not None:
        breakdown.cls_term = cls.item()
    if recon is not None:
        breakdown.recon_term = recon.item()

    if weights.mode == "mam":
        total = recon
    elif weights.mode == "mam_clap":
        total = target
    elif weights.mode == "supmam":
        total = add(recon, scale(cls, weights.lambda_cls))
    elif weights.mode == "supmam_clap":
        total = add(target, scale(cls, weights.lambda_cls))
    else:  # cls
        total = cls
    breakdown.total = total.item()
    breakdown.total_tensor = total
    return breakdown
