"""Laboratory for stable-branching superprocess supports.

Simulates (2,beta)-superprocesses and their truncated variants via
branching-particle approximation, measures eps-neighborhoods of the
support, and cross-validates hitting asymptotics against a radial PDE
solver and Lebesgue-scaling curves.
"""

__version__ = "0.1.0"

from .clusters import (AncestorField, ClusterSample, SamplingFailureError,
                       cluster_hit_prob, cox_decomposition_check,
                       estimate_a_h, eta_prob_from_xi, multi_hit_bound,
                       multi_hit_count, sample_cluster, sample_clusters,
                       survival_prob_oracle, xi_prob_from_eta)
from .engine import (CoupledTrajectory, EngineParams, JumpLog,
                     JumpLogOverflowError, PopulationOverflowError,
                     TauTailReport, extinction_prob_oracle,
                     jump_compensator_check, load_trajectory,
                     mass_laplace_oracle, save_trajectory, simulate_coupled,
                     simulate_mass, tau_tail_experiment)
from .hitting import (HitQuery, asymptotic_constant, estimate_hit_prob,
                      extinction_equivalence, fit_hitting_constant,
                      hit_counts, hitting_constant_data, intensity_tv,
                      sandwich_check)
from .measures import (AtomicMeasure, DensitySpec, UnsupportedDensityError,
                       Window, convolve_heat, heat_kernel,
                       heat_kernel_radial, integrate, local_finiteness,
                       smoothed_mass_quadrature, total_mass)
from .neighborhood import (DilationQuery, DilationResult, ExtinctPathError,
                           ResolutionError, ScalingCurve, age_schedule,
                           default_test_fns, dilation_volume,
                           median_nn_spacing, neighborhood_integral,
                           overlap_defect, scaling_curve, validity_band)
from .offspring import (OffspringLaw, build_offspring_law,
                        jump_rate_constant, levy_identity_residual)
from .pde import (ConstantEstimate, InconsistentEstimateError,
                  NonConvergedError, RadialPdeSolution, SolverError,
                  dirac_approx_check, estimate_c_beta_d, heat_convolve_bump,
                  scaling_transient, solve_radial, v0_ode, v_infinity,
                  v_infinity_solution)
from .stats import (EstimateWithError, binomial_estimate, derive_seeds,
                    fitted_ratio_bounds, loglog_slope, mean_estimate,
                    merge_estimates)
from .verify import (CriterionResult, VerifyContext, VerifyReport,
                     run_verify)
