"""Building blocks: low-level embedding, crossmodal attention, MACT and CT layers.

All functions accept unbatched ``[T, d]`` or batched ``[N, T, d]`` tensors.
Source masks are boolean with True on real positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .params import Scope, glorot, ones, zeros
from .tensor import (
    Tensor,
    conv1d_same,
    dropout,
    layer_norm,
    matmul,
    relu,
    reshape,
    scale,
    softmax_rows,
    stack,
    transpose,
)


@dataclass
class Mode:
    """Forward-pass switches; dropout only fires when ``training`` is set."""

    training: bool = False
    rng: np.random.Generator | None = None
    attn_dropout: float = 0.2
    fc_dropout: float = 0.1

    def attn(self, x: Tensor) -> Tensor:
        return dropout(x, self.attn_dropout, self.training, self.rng)

    def fc(self, x: Tensor) -> Tensor:
        return dropout(x, self.fc_dropout, self.training, self.rng)


EVAL = Mode()


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal table of shape [length, dim]."""
    if dim % 2:
        raise ConfigError(f"positional encoding needs an even dim, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = np.power(10000.0, -np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)
    return pe


def embed_low_level(x: Tensor, kernel: Tensor, bias: Tensor, positional: bool = True) -> Tensor:
    """Temporal convolution to the common dim plus sinusoidal positions."""
    if x.shape[-1] != kernel.shape[-2]:
        raise ConfigError(f"modality dim {x.shape[-1]} != configured {kernel.shape[-2]}")
    z = conv1d_same(x, kernel, bias)
    if positional:
        z = z + positional_encoding(x.shape[-2], kernel.shape[-1])
    return z


def init_embedding(p: Scope, d_in: int, dim: int, k: int, rng) -> None:
    p.add("kernel", (k, d_in, dim), glorot, rng)
    p.add("bias", (dim,), zeros)


# -- attention ----------------------------------------------------------------


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, T, d = x.shape
    x = reshape(x, (*lead, T, heads, d // heads))
    n = x.ndim
    return transpose(x, (*range(n - 3), n - 2, n - 3, n - 1))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, T, dk = x.shape
    n = x.ndim
    x = transpose(x, (*range(n - 3), n - 2, n - 3, n - 1))
    return reshape(x, (*lead, T, h * dk))


def _key_mask(mask: np.ndarray | None) -> np.ndarray | None:
    if mask is None:
        return None
    return np.asarray(mask, dtype=bool)[..., None, None, :]


def _attend(q_heads, z_src, w_k, w_v, w_o, heads, mask, mode):
    if z_src.shape[-1] != w_k.shape[-2]:
        raise DimensionError(f"source dim {z_src.shape[-1]} != projection dim {w_k.shape[-2]}")
    k = _split_heads(matmul(z_src, w_k), heads)
    v = _split_heads(matmul(z_src, w_v), heads)
    logits = scale(matmul(q_heads, transpose(k)), 1.0 / np.sqrt(q_heads.shape[-1]))
    weights = softmax_rows(logits, _key_mask(mask))
    out = matmul(mode.attn(weights), v)
    return matmul(_merge_heads(out), w_o), weights.data


def crossmodal_attention(
    z_tgt: Tensor,
    z_src: Tensor,
    w_q: Tensor,
    w_k: Tensor,
    w_v: Tensor,
    w_o: Tensor,
    heads: int,
    src_mask: np.ndarray | None = None,
    mode: Mode = EVAL,
) -> tuple[Tensor, np.ndarray]:
    """Target positions attend over source positions, one softmax per head.

    Returns the projected output in the target time base and the per-head
    attention weights, shape [..., heads, T_tgt, T_src].
    """
    if z_tgt.shape[-1] != z_src.shape[-1]:
        raise DimensionError(f"trailing dims differ: {z_tgt.shape} vs {z_src.shape}")
    q = _split_heads(matmul(z_tgt, w_q), heads)
    return _attend(q, z_src, w_k, w_v, w_o, heads, src_mask, mode)


def multiscale_interaction_set(
    z_prev: Tensor,
    sibling_scales: Sequence[Tensor],
    p: Scope,
    heads: int,
    src_mask: np.ndarray | None = None,
    mode: Mode = EVAL,
) -> tuple[list[Tensor], list[np.ndarray]]:
    """One crossmodal attention per sibling scale, sharing the query projection.

    Target and source streams pass through the layer's first LayerNorm
    before projection (pre-norm, as in the residual of the fusion step).
    """
    if not sibling_scales:
        raise ContractError("multi-scale interaction needs at least one source scale")
    g, b = p["ln1_g"], p["ln1_b"]
    q = _split_heads(matmul(layer_norm(z_prev, g, b), p["q"]), heads)
    outs, weights = [], []
    for j, src in enumerate(sibling_scales):
        src = layer_norm(src, g, b)
        o, w = _attend(q, src, p[f"k{j}"], p[f"v{j}"], p["o"], heads, src_mask, mode)
        outs.append(o)
        weights.append(w)
    return outs, weights


def multiscale_aggregate(
    candidates: Sequence[Tensor], z_prev: Tensor, w_query: Tensor | None, w_key: Tensor | None
) -> tuple[Tensor, np.ndarray | None]:
    """Per-position attention over the scale axis; returns a convex combination.

    A learned query from ``z_prev`` scores a learned key of each candidate.
    A single candidate is returned unchanged.
    """
    n = len(candidates)
    if n == 0:
        raise ContractError("cannot aggregate an empty interaction set")
    first = candidates[0].shape
    if any(c.shape != first for c in candidates):
        raise DimensionError(f"candidate shapes differ: {[c.shape for c in candidates]}")
    if n == 1:
        return candidates[0], None
    d = first[-1]
    s = stack(candidates, axis=-2)  # [..., T, n, d]
    q = reshape(matmul(z_prev, w_query), (*first, 1))  # [..., T, d, 1]
    scores = transpose(matmul(matmul(s, w_key), q))  # [..., T, 1, n]
    w = softmax_rows(scale(scores, 1.0 / np.sqrt(d)))
    out = reshape(matmul(w, s), first)
    return out, w.data[..., 0, :]


def feed_forward(x: Tensor, p: Scope, mode: Mode) -> Tensor:
    h = mode.fc(relu(matmul(x, p["ff_w1"]) + p["ff_b1"]))
    return mode.fc(matmul(h, p["ff_w2"]) + p["ff_b2"])


def positionwise_ff(a: Tensor, z_prev: Tensor, p: Scope, mode: Mode = EVAL) -> Tensor:
    """Residual fusion: R = A + LN(Z_prev); Z = R + f(LN(R))."""
    if a.shape != z_prev.shape:
        raise DimensionError(f"attention output {a.shape} != previous layer {z_prev.shape}")
    r = a + layer_norm(z_prev, p["ln1_g"], p["ln1_b"])
    return r + feed_forward(layer_norm(r, p["ln2_g"], p["ln2_b"]), p, mode)


@dataclass
class MactTrace:
    """Intermediate values of one MACT/CT layer, kept for inspection and export."""

    interactions: list[Tensor]
    aggregated: Tensor
    ff_output: Tensor
    attention: list[np.ndarray] = field(default_factory=list)
    scale_weights: np.ndarray | None = None


def init_crossmodal_layer(p: Scope, dim: int, n_sources: int, rng) -> None:
    p.add("q", (dim, dim), glorot, rng)
    for j in range(n_sources):
        p.add(f"k{j}", (dim, dim), glorot, rng)
        p.add(f"v{j}", (dim, dim), glorot, rng)
    p.add("o", (dim, dim), glorot, rng)
    if n_sources > 1:
        p.add("agg_q", (dim, dim), glorot, rng)
        p.add("agg_k", (dim, dim), glorot, rng)
    _init_ff_block(p, dim, rng)


def _init_ff_block(p: Scope, dim: int, rng) -> None:
    for ln in ("ln1", "ln2"):
        p.add(f"{ln}_g", (dim,), ones)
        p.add(f"{ln}_b", (dim,), zeros)
    p.add("ff_w1", (dim, 4 * dim), glorot, rng)
    p.add("ff_b1", (4 * dim,), zeros)
    p.add("ff_w2", (4 * dim, dim), glorot, rng)
    p.add("ff_b2", (dim,), zeros)


def mact_forward(
    z_prev: Tensor,
    sibling_scales: Sequence[Tensor],
    p: Scope,
    heads: int,
    src_mask: np.ndarray | None = None,
    mode: Mode = EVAL,
) -> tuple[Tensor, MactTrace]:
    """Multi-scale attentive crossmodal layer: interact, aggregate, feed forward."""
    h, weights = multiscale_interaction_set(z_prev, sibling_scales, p, heads, src_mask, mode)
    if len(h) > 1:
        query = layer_norm(z_prev, p["ln1_g"], p["ln1_b"])
        a, sw = multiscale_aggregate(h, query, p["agg_q"], p["agg_k"])
    else:
        a, sw = h[0], None
    z = positionwise_ff(a, z_prev, p, mode)
    return z, MactTrace(h, a, z, weights, sw)


def ct_forward(
    z_prev: Tensor,
    source: Tensor,
    p: Scope,
    heads: int,
    src_mask: np.ndarray | None = None,
    mode: Mode = EVAL,
) -> Tensor:
    """Crossmodal transformer layer over a single source representation."""
    return mact_forward(z_prev, [source], p, heads, src_mask, mode)[0]


# -- self-attention (prediction transformers, unimodal baseline) ----------------


def init_self_attention_layer(p: Scope, dim: int, rng) -> None:
    for name in ("q", "k", "v", "o"):
        p.add(name, (dim, dim), glorot, rng)
    _init_ff_block(p, dim, rng)


def self_attention_layer(
    x: Tensor, p: Scope, heads: int, mask: np.ndarray | None = None, mode: Mode = EVAL
) -> Tensor:
    """Pre-norm transformer encoder layer."""
    h = layer_norm(x, p["ln1_g"], p["ln1_b"])
    a, _ = crossmodal_attention(h, h, p["q"], p["k"], p["v"], p["o"], heads, mask, mode)
    x = x + mode.fc(a)
    return x + feed_forward(layer_norm(x, p["ln2_g"], p["ln2_b"]), p, mode)


__all__ = [
    "Mode",
    "EVAL",
    "MactTrace",
    "positional_encoding",
    "embed_low_level",
    "crossmodal_attention",
    "multiscale_interaction_set",
    "multiscale_aggregate",
    "positionwise_ff",
    "mact_forward",
    "ct_forward",
    "self_attention_layer",
]
