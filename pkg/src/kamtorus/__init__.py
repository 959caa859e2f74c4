"""Spectral KAM conjugacy via rational averaging (no small divisors).

Given a Diophantine frequency alpha = (1, alpha_tilde) and a small
analytic perturbation P of the constant field X_alpha on T^n, compute the
counter-term beta and near-identity embedding Phi with
Phi^*(X_alpha + P + X_beta) = X_alpha, using Dirichlet rational
approximations of alpha so every homological equation is solved with
divisors bounded below by 1/q.
"""

from .diophantine import (FrequencyVector, RationalApprox, ResonanceBound,
                          dirichlet_approx, enumerate_resonant,
                          estimate_constants, lower_denominator_bound, psi,
                          psi_argmax, resonance_bound)
from .errors import KamError
from .field import (FourierVectorField, add, bracket_bound,
                    bracket_norm_const, constant_field, deserialize,
                    eval_at, eval_many, lie_bracket, make_field, norm, prune,
                    scale, serialize, sub, tail_bound, tail_split,
                    zero_field)
from .averaging import (HomologicalSolution, StepBudget, StepResult,
                        averaging_step, counter_term_step, lie_pullback,
                        omega_average, solve_homological, space_average)
from .embedding import Layer, NearIdentityEmbedding, flow_points
from .generate import random_field
from .ledger import ErrorLedger
from .oracles import (conjugacy_report, conjugacy_residual,
                      grid_pullback_oracle, ode_flow, orbit_shadowing_check,
                      quadrature_time_average)
from .scheduler import (KamConstants, RunOptions, RunResult, Schedule,
                        check_conditions, constants, materialize, run,
                        select_Q)

__version__ = "0.1.0"
