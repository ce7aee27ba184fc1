"""itosample: sampling from Ito diffusions with EM and stochastic Runge-Kutta
schemes, distributional diagnostics, and an empirical order-certification
harness."""

from .brownian import (IteratedIntegrals, brownian_with_time_integral,
                       double_time_integral_sample, kpw_batch, kpw_iterated_integrals,
                       sample_increments)
from .core import (DiffusionModel, ParticleSet, PotentialModel, RngStream,
                   finite_difference_gradient, langevin_diffusion, standard_normal_vector)
from .harness import (CouplingPlan, OrderFit, SweepResult, SweepRow, coupled_mse,
                      scheme_comparison, stationary_bias_sweep, strong_order_fit)
from .metrics import (GaussianParams, W2Report, corrected_w2_squared,
                      empirical_w2_squared, energy_distance_squared,
                      gaussian_w2_squared, ksd_squared_imq)
from .schemes import (ChainDivergedError, SchemeConfig, SchemeKind, Trajectory,
                      em_step, simulate, srk_id_step, srk_ld_step)

__version__ = "0.1.0"
