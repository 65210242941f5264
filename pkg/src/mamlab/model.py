"""Transformer encoder/decoder with mask tokens, plus projection and
classification heads.

The encoder embeds visible patches, adds a fixed 2-D sinusoidal position
table, and runs pre-norm blocks with global self-attention. The decoder
projects visible latents, fills masked positions with one shared learned
mask token, and runs blocks whose self-attention is restricted to contiguous
token windows; window boundaries are offset (with wrap-around) on
alternating blocks, starting with the shifted arrangement so a single-block
decoder is shifted. The classification branch mean-pools visible latents
through a two-layer MLP with batch norm and ReLU.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np

from .checkpoint import load_blocks, save_blocks
from .errors import ConfigError, ContractError, DimensionError
from .patching import MaskPlan, PatchGrid, PatchSequence, PATCH_VALUES, scatter_back
from .tensor import (
    BatchNormState,
    Tensor,
    add,
    batch_norm,
    concat,
    gather_cols,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    reduce_mean,
    relu,
    reshape,
    scale,
    segmented_matmul,
    segmented_matmul_nt,
    softmax,
    transpose,
)

log = logging.getLogger(__name__)

MLP_RATIO = 4
INIT_STD = 0.02


@dataclass
class ModelConfig:
    embed_dim: int = 64
    encoder_layers: int = 4
    encoder_heads: int = 4
    decoder_dim: int = 32
    decoder_layers: int = 1
    decoder_heads: int = 4
    attention_window: int = 32
    attention_shift: int = 16
    head_out_dim: int = 32
    num_classes: int = 4
    mlp_hidden: int = 64

    def validate(self) -> None:
        if self.embed_dim % self.encoder_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by encoder_heads {self.encoder_heads}")
        if self.decoder_dim % self.decoder_heads != 0:
            raise ConfigError(
                f"decoder_dim {self.decoder_dim} not divisible by decoder_heads {self.decoder_heads}")
        if self.decoder_layers < 1:
            raise ConfigError(f"decoder_layers must be >= 1, got {self.decoder_layers}")
        if self.encoder_layers < 0:
            raise ConfigError(f"encoder_layers must be >= 0, got {self.encoder_layers}")
        for dim, name in ((self.embed_dim, "embed_dim"), (self.decoder_dim, "decoder_dim")):
            if dim % 4 != 0:
                raise ConfigError(f"{name} must be a multiple of 4 for 2-D position tables, got {dim}")
        if self.attention_window < 1:
            raise ConfigError(f"attention_window must be >= 1, got {self.attention_window}")

    def to_header(self) -> dict[str, str]:
        return {f"model.{f.name}": str(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_header(cls, header: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            key = f"model.{f.name}"
            if key not in header:
                raise ConfigError(f"checkpoint header missing {key}")
            kwargs[f.name] = int(header[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def sincos_1d(dim: int, positions: np.ndarray) -> np.ndarray:
    """Standard sin/cos table; dim must be even."""
    half = dim // 2
    omega = 1.0 / (10000.0 ** (np.arange(half, dtype=np.float64) / half))
    args = np.outer(np.asarray(positions, dtype=np.float64), omega)
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def position_table(dim: int, coords: np.ndarray) -> np.ndarray:
    """Fixed 2-D table: first half encodes time index, second half frequency."""
    if dim % 4 != 0:
        raise ConfigError(f"position table dim must be a multiple of 4, got {dim}")
    half = dim // 2
    return np.concatenate([sincos_1d(half, coords[:, 0]),
                           sincos_1d(half, coords[:, 1])], axis=1)


def grid_coords(grid: PatchGrid) -> np.ndarray:
    t, f = np.divmod(np.arange(grid.total), grid.freq_patches)
    return np.stack([t, f], axis=1)


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD,
                 bound: float = 2.0) -> np.ndarray:
    """Normal draw with resampling outside +-bound standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > bound * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > bound * std
    return out


def window_attention_mask(n: int, window: int, shift: int) -> np.ndarray | None:
    """Additive mask restricting attention to contiguous windows.

    Token i belongs to window ((i - shift) mod n) // window; entries across
    windows get a large negative value that zeroes out after softmax. Returns
    None (global attention) when the window covers the whole sequence.
    """
    if window >= n:
        if window > n:
            log.info("attention window %d exceeds sequence length %d; using global attention",
                     window, n)
        return None
    membership = ((np.arange(n) - shift) % n) // window
    allowed = membership[:, None] == membership[None, :]
    return np.where(allowed, 0.0, -1e30)


# ---------------------------------------------------------------------------
# functional pieces shared with the frozen teacher
# ---------------------------------------------------------------------------

def init_attention(rng, params, prefix: str, dim: int) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        params[f"{prefix}.{name}"] = Tensor(trunc_normal(rng, (dim, dim)), requires_grad=True)
    for name in ("bq", "bk", "bv", "bo"):
        params[f"{prefix}.{name}"] = Tensor(np.zeros(dim), requires_grad=True)


def init_block(rng, params, prefix: str, dim: int) -> None:
    params[f"{prefix}.ln1.g"] = Tensor(np.ones(dim), requires_grad=True)
    params[f"{prefix}.ln1.b"] = Tensor(np.zeros(dim), requires_grad=True)
    init_attention(rng, params, f"{prefix}.attn", dim)
    params[f"{prefix}.ln2.g"] = Tensor(np.ones(dim), requires_grad=True)
    params[f"{prefix}.ln2.b"] = Tensor(np.zeros(dim), requires_grad=True)
    hidden = MLP_RATIO * dim
    params[f"{prefix}.mlp.w1"] = Tensor(trunc_normal(rng, (dim, hidden)), requires_grad=True)
    params[f"{prefix}.mlp.b1"] = Tensor(np.zeros(hidden), requires_grad=True)
    params[f"{prefix}.mlp.w2"] = Tensor(trunc_normal(rng, (hidden, dim)), requires_grad=True)
    params[f"{prefix}.mlp.b2"] = Tensor(np.zeros(dim), requires_grad=True)


def attention(params: dict, prefix: str, x: Tensor, heads: int,
              mask: np.ndarray | None = None, segments: int = 1) -> Tensor:
    """Multi-head self-attention over the rows of x (tokens x dim).

    With segments > 1, x holds that many equal-length clips stacked row-wise
    and attention never crosses a segment boundary (batched GEMM per head).
    The additive mask is (rows, rows/segments)-shaped in segmented mode and
    square otherwise.
    """
    dim = x.shape[1]
    head_dim = dim // heads
    q = add(matmul(x, params[f"{prefix}.wq"]), params[f"{prefix}.bq"])
    k = add(matmul(x, params[f"{prefix}.wk"]), params[f"{prefix}.bk"])
    v = add(matmul(x, params[f"{prefix}.wv"]), params[f"{prefix}.bv"])
    mask_t = Tensor(mask) if mask is not None else None
    outs = []
    for h in range(heads):
        cols = np.arange(h * head_dim, (h + 1) * head_dim)
        qh, kh, vh = gather_cols(q, cols), gather_cols(k, cols), gather_cols(v, cols)
        if segments == 1:
            scores = scale(matmul(qh, transpose(kh)), head_dim ** -0.5)
            if mask_t is not None:
                scores = add(scores, mask_t)
            outs.append(matmul(softmax(scores), vh))
        else:
            scores = scale(segmented_matmul_nt(qh, kh, segments), head_dim ** -0.5)
            if mask_t is not None:
                scores = add(scores, mask_t)
            outs.append(segmented_matmul(softmax(scores), vh, segments))
    merged = outs[0] if heads == 1 else concat(outs, axis=1)
    return add(matmul(merged, params[f"{prefix}.wo"]), params[f"{prefix}.bo"])


def transformer_block(params: dict, prefix: str, x: Tensor, heads: int,
                      mask: np.ndarray | None = None, segments: int = 1) -> Tensor:
    h = layer_norm(x, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    x = add(x, attention(params, f"{prefix}.attn", h, heads, mask, segments))
    h = layer_norm(x, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    h = add(matmul(h, params[f"{prefix}.mlp.w1"]), params[f"{prefix}.mlp.b1"])
    h = gelu(h)
    h = add(matmul(h, params[f"{prefix}.mlp.w2"]), params[f"{prefix}.mlp.b2"])
    return add(x, h)


def shifted_local_attention(params: dict, prefix: str, tokens: Tensor, heads: int,
                            window: int, shift: int) -> Tensor:
    """One block of windowed self-attention with optional boundary offset."""
    mask = window_attention_mask(tokens.shape[0], window, shift)
    return transformer_block(params, prefix, tokens, heads, mask)


class Model:
    """Full student model: parameters, position tables, and forward paths."""

    def __init__(self, config: ModelConfig, grid: PatchGrid, rng_seed: int = 0):
        config.validate()
        self.config = config
        self.grid = grid
        rng = np.random.default_rng(rng_seed)
        p: dict[str, Tensor] = {}
        cfg = config

        p["patch_embed.w"] = Tensor(trunc_normal(rng, (PATCH_VALUES, cfg.embed_dim)),
                                    requires_grad=True)
        p["patch_embed.b"] = Tensor(np.zeros(cfg.embed_dim), requires_grad=True)
        for i in range(cfg.encoder_layers):
            init_block(rng, p, f"enc.{i}", cfg.embed_dim)
        if cfg.encoder_layers > 0:
            p["enc.norm.g"] = Tensor(np.ones(cfg.embed_dim), requires_grad=True)
            p["enc.norm.b"] = Tensor(np.zeros(cfg.embed_dim), requires_grad=True)

        p["dec.proj.w"] = Tensor(trunc_normal(rng, (cfg.embed_dim, cfg.decoder_dim)),
                                 requires_grad=True)
        p["dec.proj.b"] = Tensor(np.zeros(cfg.decoder_dim), requires_grad=True)
        p["dec.mask_token"] = Tensor(rng.normal(0.0, INIT_STD, size=cfg.decoder_dim),
                                     requires_grad=True)
        for i in range(cfg.decoder_layers):
            init_block(rng, p, f"dec.{i}", cfg.decoder_dim)
        p["dec.norm.g"] = Tensor(np.ones(cfg.decoder_dim), requires_grad=True)
        p["dec.norm.b"] = Tensor(np.zeros(cfg.decoder_dim), requires_grad=True)

        p["head.target.w"] = Tensor(trunc_normal(rng, (cfg.decoder_dim, cfg.head_out_dim)),
                                    requires_grad=True)
        p["head.target.b"] = Tensor(np.zeros(cfg.head_out_dim), requires_grad=True)
        p["head.target.ln.g"] = Tensor(np.ones(cfg.head_out_dim), requires_grad=True)
        p["head.target.ln.b"] = Tensor(np.zeros(cfg.head_out_dim), requires_grad=True)
        p["head.recon.w"] = Tensor(trunc_normal(rng, (cfg.decoder_dim, PATCH_VALUES)),
                                   requires_grad=True)
        p["head.recon.b"] = Tensor(np.zeros(PATCH_VALUES), requires_grad=True)

        p["cls.fc1.w"] = Tensor(trunc_normal(rng, (cfg.embed_dim, cfg.mlp_hidden)),
                                requires_grad=True)
        p["cls.fc1.b"] = Tensor(np.zeros(cfg.mlp_hidden), requires_grad=True)
        p["cls.bn.g"] = Tensor(np.ones(cfg.mlp_hidden), requires_grad=True)
        p["cls.bn.b"] = Tensor(np.zeros(cfg.mlp_hidden), requires_grad=True)
        p["cls.fc2.w"] = Tensor(trunc_normal(rng, (cfg.mlp_hidden, cfg.num_classes)),
                                requires_grad=True)
        p["cls.fc2.b"] = Tensor(np.zeros(cfg.num_classes), requires_grad=True)

        self.params = p
        self.bn_state = BatchNormState(cfg.mlp_hidden)
        coords = grid_coords(grid)
        self.enc_pos = position_table(cfg.embed_dim, coords)
        self.dec_pos = position_table(cfg.decoder_dim, coords)
        self._mask_cache: dict[tuple[int, int, int], np.ndarray | None] = {}

    # -- forward paths ------------------------------------------------------

    def encode(self, visible_features: np.ndarray, visible_indices: np.ndarray) -> Tensor:
        """Map visible patch rows to latents; global attention over them."""
        if len(visible_indices) < 1:
            raise ContractError("encoder needs at least one visible patch (mask ratio < 1)")
        if visible_features.shape != (len(visible_indices), PATCH_VALUES):
            raise DimensionError(
                f"visible features {visible_features.shape} do not match "
                f"({len(visible_indices)}, {PATCH_VALUES})")
        x = add(matmul(Tensor(visible_features), self.params["patch_embed.w"]),
                self.params["patch_embed.b"])
        x = add(x, Tensor(self.enc_pos[np.asarray(visible_indices, dtype=np.intp)]))
        for i in range(self.config.encoder_layers):
            x = transformer_block(self.params, f"enc.{i}", x, self.config.encoder_heads)
        if self.config.encoder_layers > 0:
            x = layer_norm(x, self.params["enc.norm.g"], self.params["enc.norm.b"])
        return x

    def _window_mask(self, n: int, shift: int) -> np.ndarray | None:
        key = (n, self.config.attention_window, shift)
        if key not in self._mask_cache:
            self._mask_cache[key] = window_attention_mask(n, self.config.attention_window, shift)
        return self._mask_cache[key]

    def _tiled_window_mask(self, batch: int, n: int, shift: int) -> np.ndarray | None:
        """Within-clip window mask repeated per segment for batched attention."""
        if batch == 1:
            return self._window_mask(n, shift)
        key = ("tiledwin", batch, n, self.config.attention_window, shift)
        if key not in self._mask_cache:
            within = self._window_mask(n, shift)
            self._mask_cache[key] = None if within is None else np.tile(within, (batch, 1))
        return self._mask_cache[key]

    def _pool_matrix(self, batch: int, seg: int) -> np.ndarray:
        """Constant (batch x batch*seg) matrix averaging each clip's rows."""
        key = ("pool", batch, seg)
        if key not in self._mask_cache:
            self._mask_cache[key] = np.kron(np.eye(batch), np.full((1, seg), 1.0 / seg))
        return self._mask_cache[key]

    def decode(self, z_visible: Tensor, plan: MaskPlan) -> Tensor:
        """Predict latents at every patch position from visible latents.

        Visible latents are projected and scattered to their positions; all
        masked positions share the learned mask token. Blocks alternate
        between shifted and aligned windows, starting shifted.
        """
        if z_visible.shape[0] != len(plan.visible):
            raise ContractError(
                f"decoder got {z_visible.shape[0]} visible latents for a plan with "
                f"{len(plan.visible)}")
        cfg = self.config
        proj = add(matmul(z_visible, self.params["dec.proj.w"]), self.params["dec.proj.b"])
        n_masked = len(plan.masked)
        if n_masked:
            token_row = reshape(self.params["dec.mask_token"], (1, cfg.decoder_dim))
            mask_rows = matmul(Tensor(np.ones((n_masked, 1))), token_row)
            x = scatter_back(proj, mask_rows, plan)
        else:
            x = scatter_back(proj, Tensor(np.zeros((0, cfg.decoder_dim))), plan)
        x = add(x, Tensor(self.dec_pos))
        for i in range(cfg.decoder_layers):
            shift = cfg.attention_shift if i % 2 == 0 else 0
            mask = self._window_mask(plan.total, shift)
            x = transformer_block(self.params, f"dec.{i}", x, cfg.decoder_heads, mask)
        return layer_norm(x, self.params["dec.norm.g"], self.params["dec.norm.b"])

    def encode_batch(self, features_list: list[np.ndarray],
                     indices_list: list[np.ndarray]) -> Tensor:
        """Encode a batch of clips as one token sequence per step.

        Clips are concatenated row-wise; a block-diagonal attention mask keeps
        every token inside its own clip, so each row equals the single-clip
        encode of that clip. Requires equal visible counts (one mask ratio per
        step guarantees this).
        """
        if not features_list:
            raise ContractError("encode_batch needs at least one clip")
        seg_lengths = {len(idx) for idx in indices_list}
        if len(seg_lengths) != 1:
            raise ContractError(f"clips have unequal visible counts: {sorted(seg_lengths)}")
        seg = seg_lengths.pop()
        if seg < 1:
            raise ContractError("encoder needs at least one visible patch (mask ratio < 1)")
        batch = len(features_list)
        feats = features_list[0] if batch == 1 else np.concatenate(features_list, axis=0)
        pos = np.concatenate(
            [self.enc_pos[np.asarray(idx, dtype=np.intp)] for idx in indices_list], axis=0)
        x = add(matmul(Tensor(feats), self.params["patch_embed.w"]),
                self.params["patch_embed.b"])
        x = add(x, Tensor(pos))
        for i in range(self.config.encoder_layers):
            x = transformer_block(self.params, f"enc.{i}", x, self.config.encoder_heads,
                                  segments=batch)
        if self.config.encoder_layers > 0:
            x = layer_norm(x, self.params["enc.norm.g"], self.params["enc.norm.b"])
        return x

    def decode_batch(self, z_all: Tensor, plans: list[MaskPlan]) -> Tensor:
        """Batched decode: one (batch*N) x decoder_dim latent sequence."""
        batch = len(plans)
        n = plans[0].total
        l_v = len(plans[0].visible)
        l_m = len(plans[0].masked)
        if any(p.total != n or len(p.visible) != l_v for p in plans):
            raise ContractError("decode_batch needs plans of identical shape")
        if z_all.shape[0] != batch * l_v:
            raise ContractError(
                f"decoder got {z_all.shape[0]} visible latents for {batch} plans of {l_v}")
        cfg = self.config
        proj = add(matmul(z_all, self.params["dec.proj.w"]), self.params["dec.proj.b"])
        inverse = np.empty(batch * n, dtype=np.intp)
        for c, plan in enumerate(plans):
            inverse[c * n + plan.visible] = c * l_v + np.arange(l_v)
            inverse[c * n + plan.masked] = batch * l_v + c * l_m + np.arange(l_m)
        if l_m:
            token_row = reshape(self.params["dec.mask_token"], (1, cfg.decoder_dim))
            mask_rows = matmul(Tensor(np.ones((batch * l_m, 1))), token_row)
            x = gather_rows(concat([proj, mask_rows], axis=0), inverse)
        else:
            x = gather_rows(proj, inverse)
        x = add(x, Tensor(np.tile(self.dec_pos, (batch, 1))))
        for i in range(cfg.decoder_layers):
            shift = cfg.attention_shift if i % 2 == 0 else 0
            mask = self._tiled_window_mask(batch, n, shift)
            x = transformer_block(self.params, f"dec.{i}", x, cfg.decoder_heads, mask,
                                  segments=batch)
        return layer_norm(x, self.params["dec.norm.g"], self.params["dec.norm.b"])

    def pool_segments(self, z_all: Tensor, batch: int) -> Tensor:
        """Mean-pool each clip's rows of a batched latent sequence."""
        if z_all.shape[0] % batch != 0:
            raise ContractError(f"{z_all.shape[0]} rows do not split into {batch} clips")
        seg = z_all.shape[0] // batch
        return matmul(Tensor(self._pool_matrix(batch, seg)), z_all)

    def classify_pooled(self, pooled: Tensor, training: bool = False) -> Tensor:
        """Two-layer MLP head over already-pooled clip representations."""
        h = add(matmul(pooled, self.params["cls.fc1.w"]), self.params["cls.fc1.b"])
        h = batch_norm(h, self.params["cls.bn.g"], self.params["cls.bn.b"],
                       self.bn_state, training=training)
        h = relu(h)
        return add(matmul(h, self.params["cls.fc2.w"]), self.params["cls.fc2.b"])

    def project_head(self, z: Tensor) -> Tensor:
        """Affine map to the target feature dim followed by layer norm."""
        if z.shape[-1] != self.config.decoder_dim:
            raise ContractError(
                f"projection head expects trailing dim {self.config.decoder_dim}, got {z.shape}")
        y = add(matmul(z, self.params["head.target.w"]), self.params["head.target.b"])
        return layer_norm(y, self.params["head.target.ln.g"], self.params["head.target.ln.b"])

    def recon_head(self, z: Tensor) -> Tensor:
        """Plain affine map back to flattened patch values."""
        return add(matmul(z, self.params["head.recon.w"]), self.params["head.recon.b"])

    def classify_batch(self, latents: list[Tensor], training: bool = False) -> Tensor:
        """Pool each clip's visible latents and classify the pooled batch."""
        if not latents:
            raise ContractError("classification needs at least one clip")
        pooled = []
        for z in latents:
            if z.shape[0] < 1:
                raise ContractError("cannot pool an empty latent sequence")
            pooled.append(reshape(reduce_mean(z, axis=0), (1, self.config.embed_dim)))
        g = pooled[0] if len(pooled) == 1 else concat(pooled, axis=0)
        return self.classify_pooled(g, training=training)

    def classify(self, z_visible: Tensor, training: bool = False) -> Tensor:
        """Logits for one clip (1 x num_classes)."""
        return self.classify_batch([z_visible], training=training)

    def forward_finetune(self, seq: PatchSequence, plan: MaskPlan | None = None,
                         training: bool = False) -> Tensor:
        """Encode the full grid (masked patches zeroed, not dropped) and classify."""
        features = seq.features
        if plan is not None:
            features = features.copy()
            features[plan.masked] = 0.0
        z = self.encode(features, np.arange(seq.grid.total))
        return self.classify(z, training=training)

    def finetune_batch(self, seqs: list[PatchSequence], plans: list[MaskPlan | None],
                       training: bool = False) -> Tensor:
        features_list = []
        indices_list = []
        for seq, plan in zip(seqs, plans):
            features = seq.features
            if plan is not None:
                features = features.copy()
                features[plan.masked] = 0.0
            features_list.append(features)
            indices_list.append(np.arange(seq.grid.total))
        z_all = self.encode_batch(features_list, indices_list)
        pooled = self.pool_segments(z_all, len(seqs))
        return self.classify_pooled(pooled, training=training)

    # -- parameter bookkeeping ----------------------------------------------

    def encoder_param_names(self) -> list[str]:
        return [n for n in self.params if n.startswith(("patch_embed.", "enc."))]

    def trainable_params(self, mode: str) -> dict[str, Tensor]:
        """The parameter subset a training mode actually exercises."""
        def keep(name: str) -> bool:
            if name.startswith("cls."):
                return mode in ("supmam", "supmam_clap", "cls", "finetune")
            if name.startswith("head.target."):
                return mode in ("mam_clap", "supmam_clap")
            if name.startswith("head.recon."):
                return mode in ("mam", "supmam")
            if name.startswith("dec."):
                return mode != "finetune" and mode != "cls"
            return True
        return {n: p for n, p in self.params.items() if keep(n)}

    # -- persistence ----------------------------------------------------------

    def state_blocks(self) -> dict[str, np.ndarray]:
        blocks = {name: p.data for name, p in self.params.items()}
        blocks["state.cls.bn.running_mean"] = self.bn_state.mean
        blocks["state.cls.bn.running_var"] = self.bn_state.var
        return blocks

    def base_header(self) -> dict[str, str]:
        header = self.config.to_header()
        header["grid.time_patches"] = str(self.grid.time_patches)
        header["grid.freq_patches"] = str(self.grid.freq_patches)
        return header

    def save(self, path, extra_header: dict[str, str] | None = None,
             extra_blocks: dict[str, np.ndarray] | None = None) -> None:
        header = self.base_header()
        if extra_header:
            header.update(extra_header)
        blocks = self.state_blocks()
        if extra_blocks:
            blocks.update(extra_blocks)
        save_blocks(path, header, blocks)

    def load_state(self, blocks: dict[str, np.ndarray], names: list[str] | None = None) -> None:
        """Overwrite parameters (all, or the given subset) from blocks."""
        wanted = list(self.params) if names is None else names
        mismatches = []
        for name in wanted:
            if name not in blocks:
                mismatches.append(f"missing block '{name}'")
                continue
            if blocks[name].shape != self.params[name].shape:
                mismatches.append(
                    f"'{name}': checkpoint {blocks[name].shape} vs model {self.params[name].shape}")
        if mismatches:
            raise ConfigError("incompatible checkpoint: " + "; ".join(mismatches))
        for name in wanted:
            self.params[name].data = blocks[name].copy()
        if names is None:
            if "state.cls.bn.running_mean" in blocks:
                self.bn_state.mean = blocks["state.cls.bn.running_mean"].copy()
            if "state.cls.bn.running_var" in blocks:
                self.bn_state.var = blocks["state.cls.bn.running_var"].copy()

    @classmethod
    def from_checkpoint(cls, path) -> tuple["Model", dict[str, str], dict[str, np.ndarray]]:
        header, blocks = load_blocks(path)
        config = ModelConfig.from_header(header)
        grid = PatchGrid(time_patches=int(header["grid.time_patches"]),
                         freq_patches=int(header["grid.freq_patches"]))
        model = cls(config, grid, rng_seed=0)
        model.load_state(blocks)
        return model, header, blocks
