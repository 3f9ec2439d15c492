# Region losses for thin structures
#
# With contrail pixels at a percent or two of the frame, pixel-wise losses
# are dominated by background. The overlap losses here work on soft counts
# instead, and all return their gradient alongside the value.

# %%
import numpy as np

from contrailseg import LossParams, combined_loss, dice_loss, focal_loss, focal_tversky_loss, jaccard_loss, tversky_loss
from contrailseg.losses import finite_difference_gradient, max_relative_error

g = np.array([[1, 1], [0, 0]])
p = np.array([[1.0, 0.0], [1.0, 0.0]])
lp = LossParams(epsilon=0.0)
for fn in (dice_loss, jaccard_loss, tversky_loss, focal_tversky_loss, combined_loss, focal_loss):
    print(f"{fn.__name__:<20} {fn(p, g, lp).value:.6f}")

# %%
# Tversky weights misses (alpha) more than false alarms (beta). Compare a
# prediction that misses half the contrail with one that adds the same area
# of false positives.
g = np.zeros((16, 16)); g[7:9, :] = 1
miss = g.copy(); miss[7, :] = 0    # 16 false negatives
extra = g.copy(); extra[6, :] = 1   # 16 false positives
for name, q in (("misses", miss), ("false alarms", extra)):
    print(name, "tversky", round(tversky_loss(q, g, LossParams()).value, 4),
          "dice", round(dice_loss(q, g, LossParams()).value, 4))

# %%
# Gradients agree with central differences.
rng = np.random.default_rng(1)
p = rng.uniform(0.05, 0.95, (8, 8))
g = (rng.uniform(size=(8, 8)) < 0.3).astype(np.uint8)
analytic = combined_loss(p, g, LossParams()).grad
numeric = finite_difference_gradient(combined_loss, p, g, LossParams(), 1e-4)
print("max relative error", max_relative_error(analytic, numeric))
