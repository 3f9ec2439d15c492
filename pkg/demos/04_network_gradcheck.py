# The micro UNet and its hand-written backward pass
#
# A small encoder-decoder in numpy: conv3x3+ReLU pairs, 2x2 max pooling,
# nearest upsampling with skip concatenation, 1x1 head and sigmoid.

# %%
import numpy as np

from contrailseg import LossParams, NetConfig, init_params
from contrailseg.gradcheck import check_network
from contrailseg.losses import batch_loss, combined_loss

cfg = NetConfig(in_channels=3, base_width=8, depth=3, seed=0)
net = init_params(cfg)
print(net.n_parameters(), "parameters")
for name, shape in cfg.layer_shapes().items():
    print(f"  {name:<12} {shape}")

# %%
x = np.random.default_rng(0).uniform(size=(2, 3, 64, 64)).astype(np.float32)
g = np.zeros((2, 64, 64), dtype=np.uint8); g[:, 30:33, :] = 1
probs, cache = net.forward(x)
res = batch_loss(combined_loss, probs[:, 0], g, LossParams())
grads = net.backward(cache, res.grad[:, None])
print("loss", res.value, "| grad norm head", float(np.linalg.norm(grads["head.w"])))

# %%
# Finite-difference check on a smaller net (a few hundred sampled entries).
report = check_network(max_entries=32)
for name, err in report.per_tensor.items():
    print(f"  {name:<14} {err:.2e}")
print(report.result().line())
