"""Named parameter registry and initializers."""

from __future__ import annotations

import math
from typing import Callable, Iterator

import numpy as np

from .errors import ContractError
from .tensor import Tensor


def glorot(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    fan_in = int(np.prod(shape[:-1]))
    fan_out = shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def zeros(shape: tuple[int, ...], rng: np.random.Generator | None = None) -> np.ndarray:
    return np.zeros(shape)


def ones(shape: tuple[int, ...], rng: np.random.Generator | None = None) -> np.ndarray:
    return np.ones(shape)


class ParameterStore:
    """Ordered mapping from names to trainable leaf tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(
        self,
        name: str,
        shape: tuple[int, ...],
        init: Callable = glorot,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        if name in self._params:
            raise ContractError(f"parameter {name!r} registered twice")
        p = Tensor(init(tuple(shape), rng), requires_grad=True, name=name)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def values(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def count(self) -> int:
        return sum(p.size for p in self._params.values())

    def scope(self, prefix: str) -> "Scope":
        return Scope(self, prefix)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ContractError(
                f"state mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}"
            )
        for k, p in self._params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ContractError(f"{k}: stored shape {arr.shape} != {p.shape}")
            p.data = arr.copy()


class ShapeCounter:
    """Store stand-in that records parameter sizes without allocating them."""

    def __init__(self):
        self.sizes: dict[str, int] = {}

    def add(self, name: str, shape, init: Callable | None = None, rng=None) -> None:
        if name in self.sizes:
            raise ContractError(f"parameter {name!r} registered twice")
        self.sizes[name] = math.prod(shape)

    def scope(self, prefix: str) -> "Scope":
        return Scope(self, prefix)

    def count(self) -> int:
        return sum(self.sizes.values())


class Scope:
    """Prefix view onto a store, so layer code can say ``p["q"]``."""

    def __init__(self, store: ParameterStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def __getitem__(self, name: str) -> Tensor:
        return self.store[self.prefix + name]

    def __contains__(self, name: str) -> bool:
        return self.prefix + name in self.store

    def add(self, name: str, shape, init: Callable = glorot, rng=None) -> Tensor:
        return self.store.add(self.prefix + name, shape, init, rng)
