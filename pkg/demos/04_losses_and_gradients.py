"""The segmentation loss menu and its analytic gradients.

Evaluates cross-entropy, focal, soft Dice, and the Dice+focal mixture on
one random probability field, checks a gradient entry against central
finite differences, and shows the focal loss collapsing to cross-entropy
at exponent zero.
"""

import numpy as np

from orbitseg import (LossParams, cce_loss, dice_focal_loss, dice_loss,
                      focal_loss)

rng = np.random.default_rng(2)
h, w, k = 24, 24, 6

raw = rng.uniform(0.05, 1.0, size=(h, w, k))
probs = raw / raw.sum(axis=-1, keepdims=True)
target = rng.integers(0, k, size=(h, w)).astype(np.int64)

params = LossParams(gamma=2.0, alpha=1.0)
print(f"{h}x{w} field, {k} classes, gamma={params.gamma}\n")
for name, fn in (("cce", cce_loss), ("focal", focal_loss),
                 ("dice", dice_loss), ("dice_focal", dice_focal_loss)):
    res = fn(probs, target, params)
    print(f"  {name:10s} value {res.value:.6f}   "
          f"|grad| max {np.abs(res.grad).max():.6f}")

# spot-check one gradient entry of the mixture with finite differences
value, grad = dice_focal_loss(probs, target, params)
i = (5, 11, int(target[5, 11]))
step = 1e-6
bump = probs.copy()
bump[i] += step
up = dice_focal_loss(bump, target, params).value
bump[i] -= 2 * step
down = dice_focal_loss(bump, target, params).value
fd = (up - down) / (2 * step)
print(f"\ngradient at {i}: analytic {grad[i]:.10f}, finite diff {fd:.10f}")
print(f"difference {abs(grad[i] - fd):.2e}")

zero = LossParams(gamma=0.0)
a = cce_loss(probs, target, zero)
b = focal_loss(probs, target, zero)
print(f"\nfocal at gamma=0 vs cce: value gap {abs(a.value - b.value):.1e}, "
      f"grad gap {np.abs(a.grad - b.grad).max():.1e}")

# a perfect one-hot prediction costs nothing under every loss
ideal = np.zeros_like(probs)
np.put_along_axis(ideal, target[..., None], 1.0, axis=-1)
values = [fn(ideal, target, params).value
          for fn in (cce_loss, focal_loss, dice_loss, dice_focal_loss)]
print(f"one-hot prediction loss values: {values}")
