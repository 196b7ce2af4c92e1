"""Particle solver for regularized distributionally robust optimization.

The library represents candidate worst-case distributions as parameterized
pushforwards of a reference particle cloud, finds them by a proximal
(modified-JKO) ascent with a per-step optimality certificate, and wraps an
outer projected-subgradient loop plus a diagnostics suite that numerically
certifies the supporting convergence theory at desk scale.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .errors import (ConfigurationError, DivergedError, OracleLimitError, ParseError,
                     ShapeError, ValidationError, WassDroError)
from .measures import (GENERATOR_NAME, Empirical, Gaussian, GaussianMixture,
                       ParticleCloud, UniformBox, load_csv, make_rng, sample,
                       save_csv, second_moment)
from .transport import (Affine, Identity, ResidualFeatures, TransportMap,
                        exact_w2_empirical, map_from_dict, map_l2_distance,
                        param_gradient, pushforward, w2_monge)
from .objective import (Ball, Box, Component, Exponential, Free, KlGaussAffine,
                        LinearModel, Logistic, MlpSoftplus, ProblemSpec, QuadraticPhi,
                        QuadraticTest, SquaredHinge, W2Sq, certificate_norm,
                        discrepancy_grad, discrepancy_value, inner_gradient_field,
                        loss_grad_phi, loss_grad_xi, loss_value, maps_distance,
                        objective_H, objective_stats, subgrad_phi)
from .jko import InnerOptConfig, InnerSolution, JkoConfig, JkoTrace, jko_step, solve_inner
from .solver import OuterConfig, OuterResult, SolveTrace, project, run_outer
from .diagnostics import (ContractionFit, MoreauResult, ProbeReport, agg_convexity_probe,
                          analytic_quadratic_optimum, contraction_fit, danskin_check,
                          gradient_mapping_norm, moreau_grad, solution_lipschitz_probe,
                          weak_convexity_probe)
