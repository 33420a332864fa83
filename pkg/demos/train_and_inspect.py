"""Train a small MCMulT on the planted-motif task and look at one attention map.

Run with ``python3 demos/train_and_inspect.py`` (about two minutes on one core).
"""

import numpy as np

from mcmult.config import MODALITIES, ModelConfig
from mcmult.data import SyntheticSpec, generate_synthetic, matched_filter_accuracy, split
from mcmult.export import attention_map
from mcmult.model import MCMulT
from mcmult.training import TrainConfig, evaluate, train

# %% Data: each modality hides a class motif at its own position
spec = SyntheticSpec(n_samples=600, seed=0)
samples = generate_synthetic(spec)
print("matched filter, all modalities:", matched_filter_accuracy(samples, spec))
for m in MODALITIES:
    print(f"matched filter, {m.value} only:", matched_filter_accuracy(samples, spec, [m]))

# %% Train
train_set, valid_set, test_set = split(samples)
model = MCMulT(ModelConfig(dim=8, heads=2, blocks=2, layers=1), seed=0)
history = train(model, train_set, valid_set, TrainConfig(epochs=15, batch_size=32))
for r in history.records:
    print(f"epoch {r.epoch:2d} loss {r.train_loss:.4f} valid acc2 {r.valid.acc2:.3f}")
print("test:", evaluate(model, test_set))

# %% Text queries attending over vision, first block, head 0
sample = test_set[0]
matrix, meta = attention_map(model, sample, "V->L", block=1, head=0)
np.set_printoptions(precision=2, suppress=True)
print(meta)
print(matrix)
print("vision motif starts at", sample.meta["start"]["V"])
