"""A short walk through the autodiff core.

Run with ``python3 demos/autodiff_tour.py``. Every step prints what it
computed so the output reads top to bottom.
"""

import numpy as np

from mcmult.gradcheck import finite_diff_check
from mcmult.optim import AdamState, adam_step, clip_global_norm
from mcmult.tensor import Tape, Tensor, backward, layer_norm, matmul, softmax_rows, sum_

rng = np.random.default_rng(0)

# %% Recording a computation
# Operations only land on the tape inside a ``Tape`` block.
x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
with Tape() as tape:
    y = sum_(softmax_rows(matmul(x, w)) * Tensor(np.array([1.0, -1.0])))
backward(tape, y)
print("loss", y.item())
print("dL/dw\n", w.grad)

# %% Checking that gradient against central differences
err = finite_diff_check(lambda v: sum_(softmax_rows(matmul(x, v)) * Tensor(np.array([1.0, -1.0]))), w)
print(f"max relative error vs finite differences: {err:.2e}")

# %% Layer norm with eps 1e-5
row = Tensor(np.array([[-1.0, 1.0]]))
print("layer_norm([-1, 1]) =", layer_norm(row, Tensor(np.ones(2)), Tensor(np.zeros(2))).data)

# %% Adam on (w - 3)^2 with clipping
p = Tensor(np.array([0.0]), requires_grad=True)
state = AdamState.for_params([p])
for step in range(200):
    with Tape() as tape:
        loss = sum_((p - 3.0) * (p - 3.0))
    backward(tape, loss)
    adam_step([p], clip_global_norm([p.grad], 0.8), state, lr=0.1)
print("after 200 Adam steps w =", p.data[0])
