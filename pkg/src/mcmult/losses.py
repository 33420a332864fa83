"""Training losses (thin re-exports of the fused tape kernels)."""

from .tensor import cross_entropy, l1_loss

l1_regression = l1_loss

__all__ = ["cross_entropy", "l1_loss", "l1_regression"]
