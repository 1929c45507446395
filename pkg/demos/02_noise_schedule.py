"""Inspect the noise schedule and the forward/reverse diffusion identities.

Shows how the 1000-step linear beta ramp compresses into T levels, how the
forward process mixes signal and noise, and that a single reverse step with
the true noise recovers the original actions algebraically.
"""

import numpy as np

from diffplan import diffusion

for T in (5, 10, 20):
    sched = diffusion.build_schedule(T)
    print(f"T={T:3d}  beta: {sched.beta[0]:.4f} .. {sched.beta[-1]:.4f}  "
          f"alpha_bar: {sched.alpha_bar[0]:.4f} .. {sched.alpha_bar[-1]:.2e}")

print()
sched = diffusion.build_schedule(10)
print("level   sqrt(abar)  sqrt(1-abar)   signal kept")
for t in range(1, 11):
    a = sched.alpha_bar[t - 1]
    print(f"t={t:2d}    {np.sqrt(a):9.4f}  {np.sqrt(1-a):11.4f}   {100*a:6.2f} %")

# forward then single-step reverse with the exact noise
rng = np.random.default_rng(0)
x0 = rng.normal(size=(8, 2))
eps = rng.normal(size=(8, 2))
one = diffusion.build_schedule(1)
x1 = diffusion.add_noise(x0, eps, 1, one)
rec = diffusion.reverse_step(x1, eps, 1, None, one)
print(f"\nsingle-step inversion error: {np.abs(rec - x0).max():.2e}")
