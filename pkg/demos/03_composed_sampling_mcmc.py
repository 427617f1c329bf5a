"""Sample the product composition, with and without MCMC correction.

Loads the component checkpoints from demo 02 (run that first), composes
them into the product model, and draws samples three ways:

  * plain reverse diffusion,
  * reverse diffusion + adjusted HMC whose acceptance integrates the score
    along a straight 5-point line,
  * the same but integrating along the 4-point leapfrog curve, which reuses
    the leapfrog score evaluations and costs nothing extra.

Also draws exact samples from the true product for comparison, mirroring
the six-panel figure layout of the experiment.

Run:  python3 demos/03_composed_sampling_mcmc.py [n_samples]
"""

import os
import sys
import time

import numpy as np

from diffmcmc import (
    EnergyDiffEstimator,
    McmcConfig,
    cosine_schedule,
    composed_eps,
    composed_score_field,
    load_checkpoint,
    make_mcmc_hook,
    product,
    reverse_sample,
    ProductTarget,
)
from diffmcmc.experiment import tune_allocator
from diffmcmc.plots import render_scatter_svg

OUT = os.path.join(os.path.dirname(__file__), "out")
tune_allocator()

n = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
schedule = cosine_schedule(100)
try:
    spec = product(
        load_checkpoint(os.path.join(OUT, "score_gmm.ckpt")),
        load_checkpoint(os.path.join(OUT, "score_bar.ckpt")),
    )
except FileNotFoundError:
    sys.exit("component checkpoints not found; run demos/02_train_components.py first")

mcmc = McmcConfig()  # L = 10 per step, leapfrog 3 x 0.03, damping 0.5
variants = {
    "reverse": None,
    "hmc_5_line": EnergyDiffEstimator("line", 5, "line"),
    "hmc_4_curve": EnergyDiffEstimator("line", 4, "curve"),
}

true_samples = ProductTarget().sample(n, np.random.default_rng(99))
open(os.path.join(OUT, "true_product.svg"), "w").write(
    render_scatter_svg(true_samples, title="true product")
)

for name, estimator in variants.items():
    rng = np.random.default_rng(7)
    field = composed_score_field(spec, schedule)
    hook = None
    if estimator is not None:
        hook = make_mcmc_hook(field, estimator, mcmc, rng, "hmc")
    t0 = time.time()
    batch = reverse_sample(
        lambda x, t: composed_eps(spec, x, t, schedule), n, schedule, rng, hook=hook
    )
    inside = np.mean((np.abs(batch.samples[:, 0]) <= 0.2) & (np.abs(batch.samples[:, 1]) <= 1.0))
    svg = os.path.join(OUT, f"composed_{name}.svg")
    open(svg, "w").write(render_scatter_svg(batch.samples, title=f"composed: {name}"))
    print(
        f"{name:12s}: {time.time() - t0:6.0f}s, {inside:.0%} of samples inside the bar, "
        f"{field.calls} score-field calls -> {svg}"
    )

print("\nthe corrected variants concentrate much harder on the two bar modes;")
print("demo 04 quantifies that with the three metrics.")
