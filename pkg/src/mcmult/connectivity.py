"""Which sibling-branch outputs each layer reads, per variant.

Layer outputs of a branch are addressed by *position*: position 0 is the
low-level embedding, position p >= 1 is the output of the p-th layer. Every
branch of a model shares the same layer structure, so one graph serves all of
them; a layer's ``sources`` are positions in its sibling branch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import Branch, ModelConfig, Variant
from .errors import ConfigError, SchedulingError


@dataclass(frozen=True)
class LayerSpec:
    position: int
    block: int
    kind: str  # "mact" (multi-source) or "ct" (single source)
    sources: tuple[int, ...]
    is_global: bool

    @property
    def n_sources(self) -> int:
        return len(self.sources)


@dataclass(frozen=True)
class ConnectivityGraph:
    variant: Variant
    layers: tuple[LayerSpec, ...]
    scale_positions: tuple[int, ...]
    branches: tuple[Branch, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer(self, position: int) -> LayerSpec:
        return self.layers[position - 1]

    def block_layers(self, block: int) -> tuple[LayerSpec, ...]:
        return tuple(s for s in self.layers if s.block == block)

    def block_start(self, block: int) -> int:
        found = self.block_layers(block)
        if not found:
            raise ConfigError(f"block {block} out of range 1..{self.layers[-1].block}")
        return found[0].position

    def global_sources(self, block: int) -> tuple[int, ...]:
        return self.layer(self.block_start(block)).sources

    def local_edges(self) -> int:
        return sum(s.n_sources for s in self.layers if not s.is_global)

    def check_acyclic(self) -> None:
        for s in self.layers:
            if not s.sources or max(s.sources) >= s.position:
                raise SchedulingError(
                    f"layer {s.position} reads sibling positions {s.sources}, "
                    "not all strictly earlier"
                )


def _kind(sources) -> str:
    return "mact" if len(sources) > 1 else "ct"


def build_connectivity(cfg: ModelConfig) -> ConnectivityGraph:
    B, L = cfg.blocks, cfg.layers
    variant = cfg.variant
    specs: list[LayerSpec] = []

    if variant is Variant.MULT:
        for p in range(1, cfg.depth + 1):
            specs.append(LayerSpec(p, p, "ct", (0,), True))
        scales = tuple(range(cfg.depth + 1))
    elif variant is Variant.DENSE:
        for p in range(1, B * (1 + L) + 1):
            src = tuple(range(p))
            specs.append(LayerSpec(p, p, _kind(src), src, True))
        scales = tuple(range(B * (1 + L) + 1))
    elif variant is Variant.GLOBAL:
        for b in range(1, B + 1):
            src = tuple(range(b))
            specs.append(LayerSpec(b, b, _kind(src), src, True))
        scales = tuple(range(B + 1))
    elif variant in (Variant.MCMULT, Variant.LOCAL_DENSE):
        width = 1 + L
        scales = tuple(j * width for j in range(B + 1))
        for b in range(1, B + 1):
            start = (b - 1) * width + 1
            glob = scales[:b]
            specs.append(LayerSpec(start, b, _kind(glob), glob, True))
            for l in range(1, L + 1):
                if variant is Variant.MCMULT:
                    src = (start,)
                else:
                    src = tuple(range(start - 1, start + l))
                specs.append(LayerSpec(start + l, b, _kind(src), src, False))
    else:  # pragma: no cover - Variant is exhaustive
        raise ConfigError(f"unknown variant {variant!r}")

    graph = ConnectivityGraph(variant, tuple(specs), scales, cfg.computed_branches)
    graph.check_acyclic()
    return graph
