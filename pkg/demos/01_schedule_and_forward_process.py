"""Walk through the noise schedule and the forward corruption process.

Builds the cosine schedule, prints its per-step constants, then corrupts
exact samples from the circle mixture at a few diffusion steps and renders
the clouds as SVGs so you can watch structure dissolve into noise.

Run:  python3 demos/01_schedule_and_forward_process.py
Outputs land in demos/out/.
"""

import os

import numpy as np

from diffmcmc import cosine_schedule, q_sample, circle_gmm, sample_component
from diffmcmc.plots import render_scatter_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

schedule = cosine_schedule(100)
print("cosine schedule, T = 100")
print(f"{'t':>4} {'beta':>10} {'alpha_bar':>12} {'beta_tilde':>12} {'sigma':>9}")
for t in (1, 10, 25, 50, 75, 100):
    print(
        f"{t:>4} {schedule.beta[t]:>10.6f} {schedule.alpha_bar[t]:>12.6f} "
        f"{schedule.beta_tilde[t]:>12.6f} {schedule.sigma[t]:>9.4f}"
    )

rng = np.random.default_rng(0)
x0 = sample_component(circle_gmm(), 2000, rng)
print("\ncorrupting 2000 circle-mixture samples:")
for t in (0, 10, 35, 70, 100):
    if t == 0:
        x_t = x0
    else:
        x_t = q_sample(x0, np.full(2000, t), rng.standard_normal((2000, 2)), schedule)
    spread = x_t.std(axis=0)
    path = os.path.join(OUT, f"forward_t{t:03d}.svg")
    open(path, "w").write(render_scatter_svg(x_t, title=f"x_t at t = {t}"))
    print(f"  t = {t:>3}: std = ({spread[0]:.3f}, {spread[1]:.3f})  ->  {path}")

print("\nat t = T the cloud is indistinguishable from a standard normal;")
print("the reverse process in the next demos walks back down this ladder.")
