# Evaluation and overlays
#
# IoU is reported per image, as a mean over images, and pooled over all
# pixels. The overlay shows input, truth, prediction and a disagreement map
# with false positives in red and false negatives in blue.

# %%
import os

import numpy as np

from contrailseg import SynthParams, evaluate, load_checkpoint, render_overlay
from contrailseg.dataset import synthetic_scenes
from contrailseg.metrics import binarize
from contrailseg.raster import image_to_png

ckpt = os.path.join("demo_run", "checkpoint.cnet")
if os.path.exists(ckpt):
    net, _ = load_checkpoint(ckpt)
else:
    print("no demo_run/ checkpoint (run 05_train_synthetic.py first); using an untrained net")
    from contrailseg import NetConfig, init_params
    net = init_params(NetConfig())

scenes = synthetic_scenes(SynthParams(seed=99), 6, 64)
report = evaluate(net, scenes, 0.5)
print(report.to_csv())

# %%
sid, img, mask = scenes[0]
prob = net.predict(img.transpose(2, 0, 1)[None].astype(np.float32))[0, 0]
panel = render_overlay(img, mask, binarize(prob, 0.5))
image_to_png(panel, "overlay.png")
print("wrote overlay.png", panel.shape)
