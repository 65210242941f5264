"""Gradient verification suite: every primitive, every loss, and the full
distillation-plus-classification objective at a reduced configuration, all
against central finite differences.

Used by the `gradcheck` CLI command and by the acceptance tests.
"""

from __future__ import annotations

import numpy as np

from .gradcheck import check_gradient
from .model import Model, ModelConfig
from .objectives import (
    LossWeights,
    classification_loss,
    reconstruction_loss,
    target_loss,
    total_loss,
)
from .patching import PatchGrid, PatchSequence, sample_unstructured_mask
from .tensor import (
    BatchNormState,
    Tensor,
    add,
    batch_norm,
    concat,
    exp,
    gather_cols,
    gather_rows,
    gelu,
    layer_norm,
    log,
    matmul,
    mul,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scale,
    segmented_matmul,
    segmented_matmul_nt,
    sigmoid,
    softmax,
    softplus,
    sub,
    transpose,
)

PRIMITIVE_TOL = 1e-4
LOSS_TOL = 1e-4
END_TO_END_TOL = 1e-3

_LN_GAIN = np.array([1.2, 0.8, -0.5, 1.6])
_LN_BIAS = np.array([0.1, -0.3, 0.2, 0.0])
_WEIGHT = np.linspace(-1.0, 1.0, 12).reshape(3, 4)


def _primitive_cases():
    fixed = Tensor(np.linspace(0.2, 1.4, 12).reshape(3, 4))
    seg_b = Tensor(np.linspace(-1.0, 1.0, 18).reshape(6, 3))
    seg_w = Tensor(np.linspace(0.0, 1.0, 12).reshape(4, 3))
    seg_w2 = Tensor(np.linspace(0.0, 1.0, 8).reshape(4, 2))
    return [
        ("add", lambda x: reduce_sum(add(x, fixed)), (3, 4)),
        ("sub", lambda x: reduce_sum(sub(x, fixed)), (3, 4)),
        ("mul", lambda x: reduce_sum(mul(x, x)), (3, 4)),
        ("scale", lambda x: reduce_sum(scale(x, -3.5)), (3, 4)),
        ("matmul", lambda x: reduce_sum(matmul(x, transpose(x))), (3, 4)),
        ("transpose", lambda x: reduce_sum(mul(transpose(x), transpose(x))), (3, 4)),
        ("reshape", lambda x: reduce_sum(mul(reshape(x, (2, 6)), reshape(x, (2, 6)))), (3, 4)),
        ("concat", lambda x: reduce_sum(mul(concat([x, x]), concat([x, x]))), (3, 4)),
        ("gather_rows", lambda x: reduce_sum(mul(gather_rows(x, [2, 0, 2]),
                                                 gather_rows(x, [2, 0, 2]))), (3, 4)),
        ("gather_cols", lambda x: reduce_sum(mul(gather_cols(x, [3, 1, 3]),
                                                 gather_cols(x, [3, 1, 3]))), (3, 4)),
        ("segmented_matmul_nt",
         lambda x: reduce_sum(mul(segmented_matmul_nt(x, x, 2), seg_w2)), (4, 3)),
        ("segmented_matmul",
         lambda x: reduce_sum(mul(segmented_matmul(x, seg_b, 2), seg_w)), (4, 3)),
        ("reduce_sum", lambda x: reduce_sum(mul(x, x)), (3, 4)),
        ("reduce_mean", lambda x: reduce_mean(mul(x, x)), (3, 4)),
        ("mean_axis0", lambda x: reduce_sum(mul(reduce_mean(x, axis=0),
                                                reduce_mean(x, axis=0))), (3, 4)),
        ("relu", lambda x: reduce_sum(relu(x)), (3, 4)),
        ("gelu", lambda x: reduce_sum(gelu(x)), (3, 4)),
        ("exp", lambda x: reduce_sum(exp(x)), (3, 4)),
        ("log", lambda x: reduce_sum(log(add(mul(x, x), Tensor(np.full((3, 4), 0.5))))), (3, 4)),
        ("sigmoid", lambda x: reduce_sum(sigmoid(x)), (3, 4)),
        ("softplus", lambda x: reduce_sum(softplus(x)), (3, 4)),
        ("softmax", lambda x: reduce_sum(mul(softmax(x), Tensor(_WEIGHT))), (3, 4)),
        ("layer_norm", lambda x: reduce_sum(mul(
            layer_norm(x, Tensor(_LN_GAIN), Tensor(_LN_BIAS)), Tensor(_WEIGHT))), (3, 4)),
        ("batch_norm_train", lambda x: reduce_sum(mul(
            batch_norm(x, Tensor(_LN_GAIN), Tensor(_LN_BIAS), BatchNormState(4),
                       training=True), Tensor(_WEIGHT))), (3, 4)),
        ("batch_norm_eval", lambda x: reduce_sum(mul(
            batch_norm(x, Tensor(_LN_GAIN), Tensor(_LN_BIAS), BatchNormState(4),
                       training=False), Tensor(_WEIGHT))), (3, 4)),
    ]


def primitive_checks() -> list[tuple[str, float, float]]:
    """Max finite-difference error per primitive over 5 seeded points."""
    results = []
    for name, fn, shape in _primitive_cases():
        rng = np.random.default_rng(abs(hash(name)) % (2 ** 32))
        worst = max(check_gradient(fn, Tensor(rng.normal(size=shape))) for _ in range(5))
        results.append((f"primitive/{name}", worst, PRIMITIVE_TOL))
    return results


def loss_checks() -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(17)
    t_v = Tensor(rng.normal(size=(4, 3)))
    y_m = Tensor(rng.normal(size=(2, 3)))
    t_m = Tensor(rng.normal(size=(2, 3)))
    patches = rng.normal(size=(3, 256))
    single_labels = np.array([1, 0, 2])
    multi_labels = (rng.uniform(size=(3, 4)) > 0.5).astype(np.float64)

    cases = [
        ("loss/target", lambda x: target_loss(x, t_v, y_m, t_m), (4, 3)),
        ("loss/classification_single",
         lambda x: classification_loss(x, 10.0, single_labels), (3, 3)),
        ("loss/classification_multi",
         lambda x: classification_loss(x, 10.0, multi_labels), (3, 4)),
        ("loss/reconstruction", lambda x: reconstruction_loss(x, patches), (3, 256)),
    ]
    results = []
    for name, fn, shape in cases:
        worst = max(check_gradient(fn, Tensor(rng.normal(size=shape))) for _ in range(3))
        results.append((name, worst, LOSS_TOL))
    return results


def _tiny_setup():
    """Reduced configuration: 8-dim model, 2 heads, N=32 patches, 2 clips."""
    config = ModelConfig(embed_dim=8, encoder_layers=1, encoder_heads=2,
                         decoder_dim=8, decoder_layers=1, decoder_heads=2,
                         attention_window=8, attention_shift=4, head_out_dim=8,
                         num_classes=3, mlp_hidden=8)
    grid = PatchGrid(time_patches=4)  # 32 patches
    model = Model(config, grid, rng_seed=11)
    rng = np.random.default_rng(23)
    seqs = []
    for _ in range(2):
        feats = rng.normal(size=(grid.total, 256))
        t_idx, f_idx = np.divmod(np.arange(grid.total), grid.freq_patches)
        seqs.append(PatchSequence(features=feats, coords=np.stack([t_idx, f_idx], 1),
                                  grid=grid))
    plans = [sample_unstructured_mask(grid.total, 0.4, rng_seed=s) for s in (5, 6)]
    t_maps = [rng.normal(size=(grid.total, 8)) for _ in range(2)]
    labels = np.array([1, 2])
    weights = LossWeights(lambda_cls=1e-4, tau=10.0, mode="supmam_clap")
    return model, seqs, plans, t_maps, labels, weights


def _tiny_objective(model, seqs, plans, t_maps, labels, weights) -> Tensor:
    n = plans[0].total
    z_all = model.encode_batch([seq.features[plan.visible]
                                for seq, plan in zip(seqs, plans)],
                               [plan.visible for plan in plans])
    z = model.decode_batch(z_all, plans)
    y = model.project_head(z)
    vis = np.concatenate([c * n + plan.visible for c, plan in enumerate(plans)])
    msk = np.concatenate([c * n + plan.masked for c, plan in enumerate(plans)])
    t_v = np.concatenate([t[plan.visible] for t, plan in zip(t_maps, plans)])
    t_m = np.concatenate([t[plan.masked] for t, plan in zip(t_maps, plans)])
    target = target_loss(gather_rows(y, vis), Tensor(t_v), gather_rows(y, msk), Tensor(t_m))
    pooled = model.pool_segments(z_all, len(seqs))
    cls = classification_loss(model.classify_pooled(pooled, training=True),
                              weights.tau, labels)
    return total_loss({"target": target, "cls": cls}, weights).total_tensor


def end_to_end_checks() -> list[tuple[str, float, float]]:
    """Full distillation+classification gradient vs finite differences,
    parameter tensor by parameter tensor."""
    model, seqs, plans, t_maps, labels, weights = _tiny_setup()
    results = []
    for name in sorted(model.trainable_params("supmam_clap")):
        original = model.params[name]

        def fn(w, _name=name):
            model.params[_name] = w
            try:
                return _tiny_objective(model, seqs, plans, t_maps, labels, weights)
            finally:
                model.params[_name] = original

        err = check_gradient(fn, Tensor(original.data.copy()))
        results.append((f"end_to_end/{name}", err, END_TO_END_TOL))
    return results


def gradient_suite(deep: bool = False) -> list[tuple[str, float, float]]:
    """All checks; `deep` adds the per-parameter end-to-end composition."""
    results = primitive_checks() + loss_checks()
    if deep:
        results += end_to_end_checks()
    return results
