import numpy as np

from nclearn.nn import MlpConfig, SGD, init_mlp, mlp_forward, mse
from nclearn.tensor import Tensor, matmul

# Tensors wrap float64 arrays. Leaves that need gradients say so up front.
x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
y = (x * x).sum()
y.backward()
print("d/dx sum(x^2) =", x.grad)  # 2x

# Calling backward a second time accumulates into leaf grads.
y.backward()
print("after a second backward:", x.grad)

# Matrix products broadcast a shared 2-D weight over leading batch axes.
a = Tensor(np.random.default_rng(0).normal(size=(4, 3, 2)))
w = Tensor(np.ones((2, 5)), requires_grad=True)
out = matmul(a, w).tanh().mean()
out.backward()
print("shared-weight grad shape:", w.grad.shape)

# Softmax is shift-stable: huge logits stay finite.
print("softmax([1000, 0]) =", Tensor([1000.0, 0.0]).softmax().data)

# A little regression: fit a 1-hidden-layer MLP to a sine with plain SGD.
rng = np.random.default_rng(1)
xs = rng.uniform(-3, 3, size=(64, 1))
ys = np.sin(xs)
cfg = MlpConfig(1, (32,), 1, "tanh")
params = init_mlp(cfg, rng)
opt = SGD(0.1)
for step in range(501):
    for p in params.values():
        p.grad = None
    loss = mse(mlp_forward(cfg, params, xs), ys)
    loss.backward()
    opt.step(params)
    if step % 100 == 0:
        print(f"step {step:3d}  mse {loss.item():.4f}")
