"""The MCMulT model: embeddings, cooperative multi-scale core and prediction head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np

from .config import Branch, Modality, ModelConfig, incoming
from .connectivity import ConnectivityGraph, build_connectivity
from .errors import ConfigError, SchedulingError
from .layers import (
    EVAL,
    MactTrace,
    Mode,
    embed_low_level,
    init_crossmodal_layer,
    init_embedding,
    init_self_attention_layer,
    mact_forward,
    self_attention_layer,
)
from .params import ParameterStore, ShapeCounter, glorot, ones, zeros
from .tensor import Tensor, concat, layer_norm, matmul, relu, reshape, take_rows


class Inputs(Protocol):
    """Anything carrying padded per-modality arrays and boolean masks."""

    data: Mapping[Modality, np.ndarray]
    masks: Mapping[Modality, np.ndarray]


@dataclass
class BranchState:
    """Layer outputs of one directed branch; ``outputs[0]`` is the target embedding."""

    direction: Branch
    outputs: list[Tensor]
    scale_positions: tuple[int, ...]

    @property
    def scales(self) -> list[Tensor]:
        return [self.outputs[p] for p in self.scale_positions if p < len(self.outputs)]

    @property
    def final(self) -> Tensor:
        return self.outputs[-1]


@dataclass
class ForwardResult:
    output: Tensor
    embeddings: dict[Modality, Tensor]
    states: dict[Branch, BranchState]
    traces: dict[tuple[Branch, int], MactTrace]


def cooperative_forward(
    embeddings: Mapping[Modality, Tensor],
    masks: Mapping[Modality, np.ndarray | None],
    cfg: ModelConfig,
    params: ParameterStore,
    graph: ConnectivityGraph,
    mode: Mode = EVAL,
) -> tuple[dict[Branch, BranchState], dict[tuple[Branch, int], MactTrace]]:
    """Advance every computed branch one layer position at a time.

    At each step all branches compute their layer p from sibling outputs at
    positions < p, so the two directions of a pair stay in lockstep and each
    block's MACTs finish before that block's CT layers start.
    """
    outputs: dict[Branch, list[Tensor]] = {b: [embeddings[b.target]] for b in graph.branches}
    traces: dict[tuple[Branch, int], MactTrace] = {}
    for spec in graph.layers:
        fresh = {}
        for br in graph.branches:
            sibling = outputs.get(br.sibling)
            sources = []
            for pos in spec.sources:
                if pos == 0:
                    sources.append(embeddings[br.source])
                elif sibling is None or pos >= len(sibling):
                    raise SchedulingError(
                        f"{br} layer {spec.position} needs {br.sibling} position {pos}"
                    )
                else:
                    sources.append(sibling[pos])
            scope = params.scope(f"{br}/{spec.position}/")
            z, trace = mact_forward(
                outputs[br][-1], sources, scope, cfg.heads, masks.get(br.source), mode
            )
            fresh[br] = z
            traces[(br, spec.position)] = trace
        for br, z in fresh.items():
            outputs[br].append(z)
    states = {b: BranchState(b, outs, graph.scale_positions) for b, outs in outputs.items()}
    return states, traces


def _last_index(mask: np.ndarray | None, n: int, length: int) -> np.ndarray:
    if mask is None:
        return np.full(n, length - 1)
    return np.asarray(mask, dtype=bool).sum(axis=-1) - 1


def predict(
    sequences: Mapping[Modality, Tensor],
    masks: Mapping[Modality, np.ndarray | None],
    cfg: ModelConfig,
    params: ParameterStore,
    mode: Mode = EVAL,
) -> Tensor:
    """Per-target transformer, last real step, concatenation, two-layer head.

    ``sequences`` maps each target modality to its fused [N, T, width] input.
    Returns [N, C] logits, or [N] scores for regression.
    """
    if not cfg.targets:
        raise ConfigError("prediction needs at least one enabled target modality")
    pooled = []
    for t in cfg.targets:
        x = sequences[t]
        mask = masks.get(t)
        for i in range(cfg.prediction_layers):
            x = self_attention_layer(x, params.scope(f"predict/{t.value}/{i}/"), cfg.heads, mask, mode)
        x = layer_norm(x, params[f"predict/{t.value}/ln_g"], params[f"predict/{t.value}/ln_b"])
        pooled.append(take_rows(x, _last_index(mask, x.shape[0], x.shape[1])))
    h = concat(pooled, axis=-1) if len(pooled) > 1 else pooled[0]
    h = mode.fc(relu(matmul(h, params["head/w1"]) + params["head/b1"]))
    out = matmul(h, params["head/w2"]) + params["head/b2"]
    if cfg.regression:
        out = reshape(out, (out.shape[0],))
    return out


def register_parameters(cfg: ModelConfig, graph: ConnectivityGraph | None, store, rng) -> None:
    """Register every trainable tensor of ``cfg`` on ``store`` in a fixed order."""
    d = cfg.dim
    for m in cfg.used_modalities:
        init_embedding(store.scope(f"embed/{m.value}/"), cfg.input_dim(m), d, cfg.kernel(m), rng)
    if cfg.unimodal is not None:
        width = d
        for i in range(cfg.depth):
            init_self_attention_layer(store.scope(f"uni/{cfg.unimodal.value}/{i}/"), d, rng)
    else:
        width = 2 * d
        for br in graph.branches:
            for spec in graph.layers:
                init_crossmodal_layer(store.scope(f"{br}/{spec.position}/"), d, spec.n_sources, rng)
    for t in cfg.targets:
        for i in range(cfg.prediction_layers):
            init_self_attention_layer(store.scope(f"predict/{t.value}/{i}/"), width, rng)
        store.add(f"predict/{t.value}/ln_g", (width,), ones)
        store.add(f"predict/{t.value}/ln_b", (width,), zeros)
    head_in = width * len(cfg.targets)
    store.add("head/w1", (head_in, head_in), glorot, rng)
    store.add("head/b1", (head_in,), zeros)
    store.add("head/w2", (head_in, cfg.output_dim), glorot, rng)
    store.add("head/b2", (cfg.output_dim,), zeros)


class MCMulT:
    """A model instance: configuration, connectivity and its parameter store.

    >>> model = MCMulT(ModelConfig(blocks=2, layers=1), seed=0)
    >>> result = model.forward(batch)          # doctest: +SKIP
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.graph = None if cfg.unimodal is not None else build_connectivity(cfg)
        self.params = ParameterStore()
        register_parameters(cfg, self.graph, self.params, np.random.default_rng(seed))

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[Tensor]:
        return self.params.values()

    def num_parameters(self) -> int:
        return self.params.count()

    def state_dict(self) -> dict[str, np.ndarray]:
        return self.params.state_dict()

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        self.params.load_state_dict(dict(state))

    def mode(self, training: bool = False, rng: np.random.Generator | None = None) -> Mode:
        return Mode(training, rng, self.cfg.attn_dropout, self.cfg.fc_dropout)

    # -- forward ------------------------------------------------------------

    def embed(self, inputs: Inputs) -> dict[Modality, Tensor]:
        out = {}
        for m in self.cfg.used_modalities:
            x = np.asarray(inputs.data[m], dtype=np.float64)
            if x.shape[-1] != self.cfg.input_dim(m):
                raise ConfigError(
                    f"modality {m.value} has dim {x.shape[-1]}, configured {self.cfg.input_dim(m)}"
                )
            p = self.params.scope(f"embed/{m.value}/")
            out[m] = embed_low_level(Tensor(x), p["kernel"], p["bias"], self.cfg.positional)
        return out

    def forward(self, inputs: Inputs, mode: Mode | None = None) -> ForwardResult:
        cfg = self.cfg
        mode = mode or self.mode()
        masks = {m: inputs.masks.get(m) for m in cfg.used_modalities}
        emb = self.embed(inputs)
        if cfg.unimodal is not None:
            m = cfg.unimodal
            x = emb[m]
            for i in range(cfg.depth):
                x = self_attention_layer(x, self.params.scope(f"uni/{m.value}/{i}/"), cfg.heads, masks[m], mode)
            out = predict({m: x}, masks, cfg, self.params, mode)
            return ForwardResult(out, emb, {}, {})
        states, traces = cooperative_forward(emb, masks, cfg, self.params, self.graph, mode)
        fused = {}
        for t in cfg.targets:
            a, b = incoming(t)
            fused[t] = concat([states[a].final, states[b].final], axis=-1)
        out = predict(fused, masks, cfg, self.params, mode)
        return ForwardResult(out, emb, states, traces)

    __call__ = forward


def count_parameters(cfg: ModelConfig) -> int:
    """Exact number of trainable scalars for ``cfg``, without allocating weights."""
    graph = None if cfg.unimodal is not None else build_connectivity(cfg)
    counter = ShapeCounter()
    register_parameters(cfg, graph, counter, None)
    return counter.count()
