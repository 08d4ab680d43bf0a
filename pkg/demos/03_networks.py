"""
Small networks, checked gradients
=================================

The actor and critic are plain multilayer perceptrons with hand-written
backpropagation. Check the gradients against finite differences, fit a toy
function with Adam and save a checkpoint.
"""

import os
import tempfile

import numpy as np

from ttrl.neuralnet import AdamState, MlpNet, adam_step, gradient_check

rng = np.random.default_rng(0)
net = MlpNet.xavier([2, 32, 32, 1], ["tanh", "relu", "linear"], rng)
print("gradient check (parameters, inputs):", gradient_check(net, rng=rng))

# Fit y = sin(x0) * x1 on random points
x = rng.uniform(-2, 2, size=(256, 2))
y = (np.sin(x[:, 0]) * x[:, 1])[:, None]
opt = AdamState.for_net(net, lr=3e-3)
for it in range(1501):
    pred, tape = net.forward(x)
    err = pred - y
    _, grads = net.backward(tape, 2 * err / len(x), input_grad=False)
    adam_step(net, grads, opt)
    if it % 500 == 0:
        print(f"step {it:4d}: mse {np.mean(err ** 2):.4f}")

path = os.path.join(tempfile.mkdtemp(), "toy.ckpt")
net.save(path)
same = MlpNet.load(path).params.tobytes() == net.params.tobytes()
print("checkpoint reloads bit for bit:", same)
