# False-color composites from thermal bands
#
# red   = BT(12um) - BT(11um), stretched from [-4, 2] K
# green = 1.37um cirrus reflectance, [0, 0.25]; dropped at night
# blue  = BT(12um), [243, 303] K
#
# Contrails are thin ice clouds, so they show up dark in this recipe.

# %%
import os
import tempfile

import numpy as np

from contrailseg import BandStack, false_color, load_bandstack, save_bandstack
from contrailseg.raster import image_to_png

rng = np.random.default_rng(0)
h, w = 32, 48
bt11 = 270 + 3 * rng.standard_normal((h, w))
bt12 = bt11 - 1.0
cirrus = np.full((h, w), 0.05)

# a cold, thin ice streak
rows, cols = np.mgrid[0:h, 0:w]
streak = np.abs(rows - 0.5 * cols - 4) < 1.5
bt11[streak] -= 15
bt12[streak] -= 12
cirrus[streak] = 0.2

day = false_color(BandStack(bt11, bt12, cirrus, is_night=False))
night = false_color(BandStack(bt11, bt12, None, is_night=True))
print("day green mean", day[..., 1].mean(), "night green max", night[..., 1].max())

# %%
# The bands travel in a small binary container.
out = tempfile.mkdtemp()
path = os.path.join(out, "demo.bstk")
save_bandstack(path, BandStack(bt11.astype(np.float32), bt12.astype(np.float32), cirrus.astype(np.float32)))
back = load_bandstack(path)
print(os.path.getsize(path), "bytes; same composite:",
      np.allclose(false_color(back), day, atol=1e-6))
image_to_png(day, os.path.join(out, "false_color.png"))
print("wrote", os.path.join(out, "false_color.png"))
