"""Model configuration, modalities and directed branches."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable

from .errors import ConfigError


class Modality(str, enum.Enum):
    """Input streams in their fixed order: text < vision < audio."""

    L = "L"
    V = "V"
    A = "A"

    @property
    def rank(self) -> int:
        return _ORDER.index(self)

    def __lt__(self, other: "Modality") -> bool:
        return self.rank < other.rank


_ORDER = (Modality.L, Modality.V, Modality.A)
MODALITIES: tuple[Modality, ...] = _ORDER


class Variant(str, enum.Enum):
    MCMULT = "MCMulT"
    DENSE = "Dense"
    LOCAL_DENSE = "LocalDense"
    GLOBAL = "Global"
    MULT = "MulT"

    @classmethod
    def parse(cls, name: str | "Variant") -> "Variant":
        if isinstance(name, Variant):
            return name
        key = name.strip().lower().replace("-", "").replace("_", "")
        key = key.removeprefix("mcmult") or "mcmult"
        for v in cls:
            if v.value.lower() == key:
                return v
        raise ConfigError(f"unknown variant {name!r}")


@dataclass(frozen=True, order=True)
class Branch:
    """Directed crossmodal interaction: ``source`` supplies keys/values, ``target`` queries."""

    source: Modality
    target: Modality

    @property
    def sibling(self) -> "Branch":
        return Branch(self.target, self.source)

    def __str__(self) -> str:
        return f"{self.source.value}->{self.target.value}"

    @classmethod
    def parse(cls, text: str | "Branch") -> "Branch":
        if isinstance(text, Branch):
            return text
        try:
            src, tgt = (Modality(p.strip().upper()) for p in text.split("->"))
        except ValueError as err:
            raise ConfigError(f"bad branch {text!r}, expected e.g. 'V->L'") from err
        if src == tgt:
            raise ConfigError(f"branch {text!r} has identical source and target")
        return cls(src, tgt)


ALL_BRANCHES: tuple[Branch, ...] = tuple(
    Branch(s, t) for t in MODALITIES for s in MODALITIES if s != t
)


def incoming(target: Modality) -> tuple[Branch, Branch]:
    a, b = (m for m in MODALITIES if m != target)
    return Branch(a, target), Branch(b, target)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``layers`` is the number of CT layers per block, so a branch is
    ``blocks * (1 + layers)`` layers deep. ``flat_depth`` overrides that depth
    for the flat MulT stack only. Setting ``unimodal`` replaces the
    crossmodal core with a self-attention stack over that one modality.
    """

    input_dims: tuple[int, int, int] = (8, 6, 4)
    dim: int = 8
    heads: int = 2
    blocks: int = 4
    layers: int = 3
    variant: Variant = Variant.MCMULT
    kernels: tuple[int, int, int] = (3, 3, 3)
    attn_dropout: float = 0.2
    fc_dropout: float = 0.1
    branches: tuple[Branch, ...] = ALL_BRANCHES
    unimodal: Modality | None = None
    num_classes: int = 2
    regression: bool = False
    prediction_layers: int = 1
    positional: bool = True
    flat_depth: int | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "variant", Variant.parse(self.variant))
        set_(self, "branches", tuple(sorted({Branch.parse(b) for b in self.branches},
                                            key=ALL_BRANCHES.index)))
        if self.unimodal is not None:
            set_(self, "unimodal", Modality(self.unimodal))
        set_(self, "input_dims", tuple(int(x) for x in self.input_dims))
        set_(self, "kernels", tuple(int(x) for x in self.kernels))
        self.validate()

    def validate(self) -> None:
        if self.dim < 1 or self.heads < 1 or self.dim % self.heads:
            raise ConfigError(f"heads={self.heads} must divide dim={self.dim}")
        if self.dim % 2:
            raise ConfigError(f"dim must be even for positional encoding, got {self.dim}")
        if self.blocks < 1 or self.layers < 0:
            raise ConfigError(f"need blocks >= 1 and layers >= 0, got {self.blocks}, {self.layers}")
        if len(self.kernels) != 3 or any(k < 1 or k % 2 == 0 for k in self.kernels):
            raise ConfigError(f"conv kernels must be odd positive integers, got {self.kernels}")
        if len(self.input_dims) != 3 or any(d < 1 for d in self.input_dims):
            raise ConfigError(f"input_dims must be three positive ints, got {self.input_dims}")
        for rate in (self.attn_dropout, self.fc_dropout):
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"dropout rate {rate} outside [0, 1)")
        if not self.regression and self.num_classes < 2:
            raise ConfigError("classification needs num_classes >= 2")
        if self.prediction_layers < 0:
            raise ConfigError("prediction_layers must be >= 0")
        if self.flat_depth is not None and self.flat_depth < 1:
            raise ConfigError("flat_depth must be positive")
        if self.unimodal is None:
            if not self.branches:
                raise ConfigError("enabled branches must be nonempty")
            if not self.targets:
                raise ConfigError(
                    "no target modality has both incoming branches enabled: "
                    + ",".join(map(str, self.branches))
                )

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def depth(self) -> int:
        """Layers per branch."""
        if self.variant is Variant.MULT and self.flat_depth is not None:
            return self.flat_depth
        if self.variant is Variant.GLOBAL:
            return self.blocks
        return self.blocks * (1 + self.layers)

    @property
    def output_dim(self) -> int:
        return 1 if self.regression else self.num_classes

    @property
    def targets(self) -> tuple[Modality, ...]:
        """Modalities whose two incoming branches are both enabled."""
        if self.unimodal is not None:
            return (self.unimodal,)
        enabled = set(self.branches)
        return tuple(m for m in MODALITIES if set(incoming(m)) <= enabled)

    @property
    def computed_branches(self) -> tuple[Branch, ...]:
        """Enabled branches plus the siblings they read multi-scale features from."""
        if self.unimodal is not None:
            return ()
        need = set(self.branches)
        if self.variant is not Variant.MULT:
            need |= {b.sibling for b in self.branches}
        return tuple(b for b in ALL_BRANCHES if b in need)

    @property
    def used_modalities(self) -> tuple[Modality, ...]:
        if self.unimodal is not None:
            return (self.unimodal,)
        used = {m for b in self.computed_branches for m in (b.source, b.target)}
        return tuple(m for m in MODALITIES if m in used)

    def input_dim(self, m: Modality) -> int:
        return self.input_dims[m.rank]

    def kernel(self, m: Modality) -> int:
        return self.kernels[m.rank]

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


def parse_branches(spec: str | Iterable[str]) -> tuple[Branch, ...]:
    """Parse ``"V->L,A->L"`` (or an iterable of such names); ``"all"`` gives all six."""
    if isinstance(spec, str):
        if spec.strip().lower() == "all":
            return ALL_BRANCHES
        spec = [p for p in spec.split(",") if p.strip()]
    return tuple(Branch.parse(p) for p in spec)
