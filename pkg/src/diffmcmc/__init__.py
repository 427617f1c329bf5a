"""MCMC-corrected sampling for composed 2D diffusion models.

Train score- or energy-parameterised diffusion models on synthetic 2D
distributions, compose them by product or negation, and sample the
composition with a reverse chain whose steps are refined by Metropolis-
corrected MCMC; score models get their acceptance energy difference from
trapezoidal line integration of the score field.
"""

from .models import ArchConfig, DiffusionModel, SCORE, ENERGY, new_model, model_eps, energy_value
from .models import save_checkpoint, load_checkpoint, CheckpointError
from .diffusion import (
    NoiseSchedule,
    cosine_schedule,
    q_sample,
    diffusion_loss,
    TrainConfig,
    train_model,
    reverse_step,
    reverse_sample,
    SampleBatch,
)
from .samplers import (
    ScoreField,
    EnergyDiffEstimator,
    McmcConfig,
    straight_line_path,
    line_energy_diff,
    ula_step,
    mala_step,
    uhmc_step,
    hmc_step,
    run_mcmc_phase,
    make_mcmc_hook,
)
from .composition import CompositionSpec, product, negation, make_composition, composed_eps, composed_score_field, composed_energy_diff
from .targets import GaussianMixture, circle_gmm, BoxUniform, bar_uniform, ExtendedSupportUniform, ProductTarget, sample_component
from .metrics import ll_metric, LlResult, fit_two_mode_gmm, gmm_cov_metric, w2_metric
from .experiment import ExperimentConfig, GridEntry, parse_grid_entry, TABLE1_GRID, build_config

__version__ = "0.1.0"
