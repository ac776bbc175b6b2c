"""Tensor engine walkthrough: gradient checking a conv block, one Adam step,
and the milestone learning-rate schedule.

Run: python demos/04_tensor_engine.py
"""
import numpy as np

from gliopipe.tensor import (
    Adam,
    Conv3d,
    InstanceNorm3d,
    LeakyReLU,
    LrSchedule,
    Sequential,
    grad_check_layer,
    lr_at,
)

rng = np.random.default_rng(0)

# every layer ships with a hand-written backward; verify one composition
block = Sequential([
    Conv3d(2, 4, rng=np.random.default_rng(1)),
    InstanceNorm3d(4),
    LeakyReLU(),
])
err = grad_check_layer(block, (1, 2, 6, 6, 6), rng, probes=32)
print(f"conv block max relative gradient error (f64): {err:.2e}")

# train the block to reproduce a fixed target: loss should fall steadily
x = rng.standard_normal((1, 2, 8, 8, 8)).astype(np.float32)
target = rng.standard_normal((1, 4, 8, 8, 8)).astype(np.float32)
opt = Adam(block.params(), lr=1e-2)
for step in range(60):
    y = block.forward(x)
    diff = y - target
    loss = float((diff ** 2).mean())
    block.backward((2.0 * diff / diff.size).astype(np.float32))
    opt.step()
    opt.zero_grad()
    if step % 15 == 0:
        print(f"  step {step:3d} mse {loss:.5f}")

# the published learning-rate ladder
sched = LrSchedule(((0, 1e-4), (50, 5e-5), (80, 1e-6)))
for epoch in (0, 49, 50, 79, 80, 200):
    print(f"epoch {epoch:>3}: lr {lr_at(sched, epoch):.6f}")
