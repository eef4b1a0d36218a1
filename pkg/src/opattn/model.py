"""The restoration network.

Architecture: a feature-extraction front end (stem conv + residual blocks),
a stack of attention layers, and a 3x3 output conv. Each attention layer runs
a fixed bank of operations in parallel (separable convolutions of several
sizes, dilated variants, average pooling), multiplies every branch output by
a softmax weight derived from the layer input's channel means, concatenates
the weighted branches, and merges them back to C channels with a 1x1 conv
plus a skip connection from the layer input.

Weights for a group of ``group_size`` consecutive layers are all computed at
the group's first layer, from that layer's input, each target layer owning
its own pair of projection matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .tensor import (
    ParamStore, Tensor, add, avg_pool_same, concat_channels, conv2d,
    dense_nobias, depthwise_conv2d, global_channel_mean, relu, scale_channels,
    softmax, take_column, take_row,
)

OP_KINDS = ("separable_conv", "dilated_separable_conv", "avg_pool")
ATTENTION_MODES = ("learned", "none", "fixed")


@dataclass(frozen=True)
class OpSpec:
    """One candidate operation of the per-layer bank."""
    kind: str
    filter_size: int
    dilation: int = 1

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise ValueError(f"unknown op kind {self.kind!r}")
        if self.filter_size < 1 or self.filter_size % 2 == 0:
            raise ValueError(f"filter_size must be odd and positive, got {self.filter_size}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")

    def token(self) -> str:
        if self.kind == "avg_pool":
            return f"pool{self.filter_size}"
        if self.kind == "dilated_separable_conv":
            return f"dsep{self.filter_size}"
        return f"sep{self.filter_size}"


def op_spec_from_token(token: str) -> OpSpec:
    """Inverse of OpSpec.token: 'sep3', 'dsep5', 'pool3', ..."""
    for prefix, kind, dil in (("dsep", "dilated_separable_conv", 2),
                              ("sep", "separable_conv", 1),
                              ("pool", "avg_pool", 1)):
        if token.startswith(prefix) and token[len(prefix):].isdigit():
            return OpSpec(kind, int(token[len(prefix):]), dil)
    raise ValueError(f"cannot parse op token {token!r}")


DEFAULT_OPS = (
    OpSpec("separable_conv", 1),
    OpSpec("separable_conv", 3),
    OpSpec("separable_conv", 5),
    OpSpec("separable_conv", 7),
    OpSpec("dilated_separable_conv", 3, 2),
    OpSpec("dilated_separable_conv", 5, 2),
    OpSpec("dilated_separable_conv", 7, 2),
    OpSpec("avg_pool", 3),
)


@dataclass(frozen=True)
class ModelConfig:
    """Full architecture hyperparameters.

    num_layers may be 0 (degenerate: front end + output conv only); otherwise
    it must be divisible by group_size.
    """
    num_layers: int = 40
    group_size: int = 4
    channels: int = 16
    attn_hidden: int = 32
    num_res_blocks: int = 4
    in_channels: int = 3
    ops: tuple = DEFAULT_OPS
    attention_mode: str = "learned"

    def __post_init__(self):
        if self.num_layers < 0:
            raise ValueError(f"num_layers must be >= 0, got {self.num_layers}")
        if self.group_size < 1:
            raise ValueError(f"group_size must be positive, got {self.group_size}")
        if self.num_layers % self.group_size != 0:
            raise ValueError(
                f"num_layers ({self.num_layers}) must be divisible by group_size ({self.group_size})")
        for name in ("channels", "attn_hidden", "num_res_blocks", "in_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.ops:
            raise ValueError("ops must contain at least one operation")
        if self.attention_mode not in ATTENTION_MODES:
            raise ValueError(f"attention_mode must be one of {ATTENTION_MODES}, "
                             f"got {self.attention_mode!r}")
        object.__setattr__(self, "ops", tuple(self.ops))

    @property
    def num_groups(self) -> int:
        return self.num_layers // self.group_size

    @property
    def num_ops(self) -> int:
        return len(self.ops)

    def with_mode(self, mode: str) -> "ModelConfig":
        return replace(self, attention_mode=mode)


@dataclass
class AttentionRecord:
    """One attention weight, indexed by sample and 1-based (layer, op)."""
    sample_id: str
    layer: int
    op: int
    weight: float


def _he_normal(rng, shape, fan_in, dtype):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


def _glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape).astype(dtype)


class Model:
    """Network parameters bound to a config; all tensors live in one ParamStore."""

    def __init__(self, config: ModelConfig, params: ParamStore, dtype=np.float32):
        self.config = config
        self.params = params
        self.dtype = np.dtype(dtype)

    # -- construction ------------------------------------------------------

    @classmethod
    def build(cls, config: ModelConfig, seed: int, dtype=np.float32) -> "Model":
        """Deterministic initialization: same (config, seed, dtype) gives
        bit-identical parameters.

        Convolutions are He-normal with zero biases, except the per-layer 1x1
        merge convolutions, which start at zero: with the skip connection that
        makes every attention layer the identity at initialization. He-normal
        merges compound through the stack and blow the output scale up by
        orders of magnitude, which short training runs never recover from.
        """
        dtype = np.dtype(dtype)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        store = ParamStore()
        c = config.channels

        def conv_init(name, cout, cin, f, zero=False):
            if zero:
                weight = np.zeros((cout, cin, f, f), dtype=dtype)
            else:
                weight = _he_normal(rng, (cout, cin, f, f), cin * f * f, dtype)
            store.add(f"{name}.w", Tensor(weight))
            store.add(f"{name}.b", Tensor(np.zeros(cout, dtype=dtype)))

        conv_init("stem", c, config.in_channels, 3)
        for k in range(config.num_res_blocks):
            conv_init(f"res{k:02d}.c1", c, c, 3)
            conv_init(f"res{k:02d}.c2", c, c, 3)
        for l in range(config.num_layers):
            for o, op in enumerate(config.ops):
                if op.kind == "avg_pool":
                    continue
                if op.filter_size > 1:
                    store.add(f"layer{l:03d}.op{o}.dw",
                              Tensor(_he_normal(rng, (c, op.filter_size, op.filter_size),
                                                op.filter_size ** 2, dtype)))
                store.add(f"layer{l:03d}.op{o}.pw",
                          Tensor(_he_normal(rng, (c, c, 1, 1), c, dtype)))
                store.add(f"layer{l:03d}.op{o}.b", Tensor(np.zeros(c, dtype=dtype)))
            conv_init(f"layer{l:03d}.merge", c, c * config.num_ops, 1, zero=True)
        t = config.attn_hidden
        for l in range(config.num_layers):
            store.add(f"attn{l:03d}.w1",
                      Tensor(_glorot_uniform(rng, (t, c), c, t, dtype)))
            store.add(f"attn{l:03d}.w2",
                      Tensor(_glorot_uniform(rng, (config.num_ops, t), t, config.num_ops, dtype)))
        store.add("fixed_logits",
                  Tensor(np.zeros((config.num_layers, config.num_ops), dtype=dtype)))
        conv_init("out", config.in_channels, c, 3)
        return cls(config, store, dtype)

    def count_params(self) -> int:
        return self.params.total_size()

    def trainable_names(self) -> list[str]:
        """Parameters that receive gradients under the configured attention mode."""
        mode = self.config.attention_mode
        names = []
        for name in self.params.names():
            if name == "fixed_logits":
                if mode == "fixed":
                    names.append(name)
            elif name.startswith("attn"):
                if mode == "learned":
                    names.append(name)
            else:
                names.append(name)
        return names

    # -- forward pieces ----------------------------------------------------

    def feature_extract(self, image: Tensor) -> Tensor:
        """Stem conv (+ReLU) then the residual blocks; output is N x C x H x W."""
        p = self.params
        x = relu(conv2d(image, p["stem.w"], p["stem.b"]))
        for k in range(self.config.num_res_blocks):
            y = conv2d(x, p[f"res{k:02d}.c1.w"], p[f"res{k:02d}.c1.b"])
            y = conv2d(relu(y), p[f"res{k:02d}.c2.w"], p[f"res{k:02d}.c2.b"])
            x = add(y, x)
        return x

    def group_attention(self, x_head: Tensor, group_index: int) -> Optional[list[Tensor]]:
        """Weight vectors for every layer of a group, all computed from the
        input to the group's first layer.

        Returns one tensor per member layer: (N, |O|) rows summing to 1 in
        'learned' mode, (|O|,) in 'fixed' mode, or None in 'none' mode.
        """
        cfg = self.config
        if not 0 <= group_index < cfg.num_groups:
            raise ValueError(f"group index {group_index} out of range "
                             f"(expected 0..{cfg.num_groups - 1})")
        if cfg.attention_mode == "none":
            return None
        layers = range(group_index * cfg.group_size, (group_index + 1) * cfg.group_size)
        if cfg.attention_mode == "fixed":
            logits = self.params["fixed_logits"]
            return [softmax(take_row(logits, l)) for l in layers]
        z = global_channel_mean(x_head)
        out = []
        for l in layers:
            hidden = relu(dense_nobias(self.params[f"attn{l:03d}.w1"], z))
            out.append(softmax(dense_nobias(self.params[f"attn{l:03d}.w2"], hidden)))
        return out

    def op_layer_forward(self, layer: int, x: Tensor) -> list[Tensor]:
        """Run the operation bank in parallel: one output map per op."""
        p = self.params
        outs = []
        for o, op in enumerate(self.config.ops):
            if op.kind == "avg_pool":
                outs.append(avg_pool_same(x, op.filter_size))
                continue
            h = x
            if op.filter_size > 1:
                h = depthwise_conv2d(h, p[f"layer{layer:03d}.op{o}.dw"], op.dilation)
            h = conv2d(h, p[f"layer{layer:03d}.op{o}.pw"], p[f"layer{layer:03d}.op{o}.b"])
            outs.append(relu(h))
        return outs

    def attention_layer_forward(self, layer: int, weights: Optional[Tensor],
                                x_prev: Tensor) -> Tensor:
        """One full layer: weighted branch concat, 1x1 merge, skip connection.

        ``weights`` is (N, |O|) or (|O|,) softmax rows, or None to use the
        implicit all-ones weights of 'none' mode.
        """
        p = self.params
        hs = self.op_layer_forward(layer, x_prev)
        if weights is not None:
            if weights.ndim == 2:
                hs = [scale_channels(h, take_column(weights, o)) for o, h in enumerate(hs)]
            else:
                hs = [scale_channels(h, take_row(weights, o)) for o, h in enumerate(hs)]
        s = concat_channels(hs)
        merged = conv2d(s, p[f"layer{layer:03d}.merge.w"], p[f"layer{layer:03d}.merge.b"])
        return add(merged, x_prev)

    def forward(self, image: Tensor, collect_attention: bool = False,
                sample_ids: Optional[list] = None):
        """Full restoration pass.

        Returns (restored, records): restored has the input's shape and is NOT
        clamped (clamping belongs to evaluation/export, not the training
        loss); records is a list of AttentionRecord when requested (empty in
        'none' mode, which has no weights), else None.
        """
        cfg = self.config
        if image.ndim != 4 or image.shape[1] != cfg.in_channels:
            raise ValueError(f"expected (N,{cfg.in_channels},H,W) input, got {image.shape}")
        records = [] if collect_attention else None
        if sample_ids is None:
            sample_ids = [str(i) for i in range(image.shape[0])]
        x = self.feature_extract(image)
        for g in range(cfg.num_groups):
            ws = self.group_attention(x, g)
            for j in range(cfg.group_size):
                l = g * cfg.group_size + j
                w = ws[j] if ws is not None else None
                x = self.attention_layer_forward(l, w, x)
                if records is not None and w is not None:
                    rows = w.data if w.ndim == 2 else np.broadcast_to(
                        w.data, (image.shape[0], cfg.num_ops))
                    for n, sid in enumerate(sample_ids):
                        for o in range(cfg.num_ops):
                            records.append(AttentionRecord(sid, l + 1, o + 1, float(rows[n, o])))
        out = conv2d(x, self.params["out.w"], self.params["out.b"])
        return out, records
