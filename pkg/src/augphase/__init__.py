"""Standard and augmented phase reduction of planar limit-cycle oscillators.

PRC and IRC by adjoint integration, nontrivial Floquet exponent and
isochron direction, closed-form reductions for a model catalog, and
brute-force oracles for checking them.
"""

from .adjoint import (AdjointError, OracleUnavailable, ResponseCurve, compute_irc, compute_prc,
                      isostable_shift_oracle, phase_shift_oracle)
from .floquet import (FloquetData, FloquetError, floquet_divergence, floquet_normal_stretching,
                      isochron_direction, monodromy_poincare)
from .models import ModelId, analytic_reduction, default_guess, integrator_defaults, make_model, model_field
from .odecore import IntegratorConfig, Trajectory, VectorField, integrate, solve
from .orbit import PeriodicOrbit, find_periodic_orbit, set_phase_anchor
from .reduce import ControlSignal, ReducedState, compare_reductions, simulate_full_perturbed, simulate_reduced
from .validate import Reduction, compute_reduction

__version__ = "0.1.0"
