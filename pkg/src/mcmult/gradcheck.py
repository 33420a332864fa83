"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward, relu_patterns


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def numerical_gradient(fn: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``fn`` with respect to every entry of ``x``.

    ``x.data`` is perturbed in place and restored afterwards.
    """
    flat = x.data.reshape(-1)
    out = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn(x).item()
        flat[i] = orig - eps
        f_minus = fn(x).item()
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * eps)
    return out.reshape(x.shape)


def analytic_gradient(fn: Callable[[Tensor], Tensor], x: Tensor) -> np.ndarray:
    was = x.requires_grad
    x.requires_grad = True
    try:
        with Tape() as tape:
            y = fn(x)
        backward(tape, y, leaves=[x])
    finally:
        x.requires_grad = was
    return x.grad


def finite_diff_check(fn: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4) -> float:
    """Max relative error between tape and central-difference gradients.

    ``fn`` must be deterministic: run models with dropout disabled.
    """
    a = analytic_gradient(fn, x)
    n = numerical_gradient(fn, x, eps)
    return float(relative_error(a, n).max()) if a.size else 0.0


def check_parameters(
    loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4
) -> dict[str, float]:
    """Run :func:`finite_diff_check` on each parameter of a closed-over loss.

    Returns max relative error keyed by parameter name (or position).
    """
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss, leaves=params)
    report = {}
    for i, p in enumerate(params):
        numeric = numerical_gradient(lambda _: loss_fn(), p, eps)
        report[p.name or str(i)] = float(relative_error(p.grad, numeric).max())
    return report


@contextmanager
def probing(p: Tensor, values: np.ndarray):
    """Temporarily turn ``p`` into a probe tensor holding ``values`` [K, *p.shape]."""
    if values.shape[1:] != p.shape:
        raise ValueError(f"probe values {values.shape} do not stack {p.shape}")
    saved = (p.data, p.requires_grad)
    p.data, p.requires_grad, p.probe = values, False, True
    try:
        yield p
    finally:
        p.data, p.requires_grad = saved
        p.probe = False


def probe_gradient(
    probe_losses: Callable[[int], np.ndarray],
    p: Tensor,
    eps: float = 1e-4,
    chunk: int = 64,
    base_pattern: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of every entry of ``p`` using vectorized probes.

    ``probe_losses(K)`` must run the forward pass with the input batch
    replicated K times while ``p`` is a probe tensor, and return the K
    per-probe losses. Each call evaluates up to ``chunk`` perturbations.

    Returns the numerical gradient and a boolean array marking entries whose
    stencil changed the state of some ReLU relative to ``base_pattern``
    (always False when no pattern is given).
    """
    base = p.data.copy()
    n = base.size
    grad = np.empty(n)
    crossed = np.zeros(n, dtype=bool)
    half = max(1, chunk // 2)
    for start in range(0, n, half):
        idx = np.arange(start, min(n, start + half))
        m = idx.size
        values = np.repeat(base[None], 2 * m, axis=0)
        flat = values.reshape(2 * m, -1)
        rows = np.arange(m)
        flat[rows, idx] = base.reshape(-1)[idx] + eps
        flat[m + rows, idx] = base.reshape(-1)[idx] - eps
        with probing(p, values), relu_patterns() as pattern:
            losses = np.asarray(probe_losses(2 * m), dtype=np.float64)
        grad[idx] = (losses[:m] - losses[m:]) / (2.0 * eps)
        if base_pattern is not None:
            for ref, got in zip(base_pattern, pattern):
                flips = (got != ref).reshape(2 * m, -1).any(axis=1)
                crossed[idx] |= flips[:m] | flips[m:]
    return grad.reshape(p.shape), crossed.reshape(p.shape)


@dataclass
class GradCheckReport:
    """Per-parameter max relative error plus stencils that crossed a ReLU kink."""

    errors: dict[str, float] = field(default_factory=dict)
    kink_crossings: dict[str, int] = field(default_factory=dict)
    n_parameters: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def worst(self) -> str | None:
        return max(self.errors, key=self.errors.get) if self.errors else None

    @property
    def smooth(self) -> bool:
        """True when no finite-difference stencil straddled a ReLU boundary."""
        return not any(self.kink_crossings.values())


def check_probed(
    loss_fn: Callable[[], Tensor],
    probe_losses: Callable[[int], np.ndarray],
    params: Sequence[Tensor],
    eps: float = 1e-4,
    chunk: int = 64,
    stop_on_kink: bool = False,
) -> GradCheckReport:
    """Vectorized :func:`check_parameters` with ReLU-kink bookkeeping.

    ``loss_fn`` computes the scalar loss for the analytic pass; see
    :func:`probe_gradient` for the ``probe_losses`` contract. With
    ``stop_on_kink`` the scan ends at the first parameter whose stencil
    crosses a kink, leaving the report partial.
    """
    with Tape() as tape, relu_patterns() as base_pattern:
        loss = loss_fn()
    backward(tape, loss, leaves=params)
    report = GradCheckReport(n_parameters=int(sum(p.size for p in params)))
    for i, p in enumerate(params):
        numeric, crossed = probe_gradient(probe_losses, p, eps, chunk, base_pattern)
        key = p.name or str(i)
        report.errors[key] = float(relative_error(p.grad, numeric).max()) if p.size else 0.0
        report.kink_crossings[key] = int(crossed.sum())
        if stop_on_kink and crossed.any():
            break
    return report
