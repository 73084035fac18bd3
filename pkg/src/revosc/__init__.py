"""Numerical toolkit for reversible polynomial oscillators.

Implements the constructive pipeline for oscillators of the form
x'' + sum b_i(t) x^{2i+1} x' + x^{2n+1} + sum a_i(t) x^{2i+1} = 0 with even,
1-periodic coefficients: generalized trigonometric functions, the
action-angle chart, averaging normal-form transforms, the reversible time-1
twist map with rotation numbers and invariant-curve detection, and
boundedness experiments over initial-condition grids.
"""

__version__ = "0.1.0"

from .actionangle import (AAConstants, AAPoint, from_action_angle,
                          jacobian_check, to_action_angle)
from .coefficients import (CoefficientSpec, PeriodicFunction, demo_spec,
                           load_spec, validate_spec)
from .dynamics import (IntegratorConfig, State, SystemConfig, integrate,
                       reversibility_residual, vector_field)
from .normalform import (AnnulusDomain, PerturbationTerms, build_angular_step,
                         build_radial_step, compose_chain, order_scaling)
from .poincare import (DiophantineClass, PoincareMap, TwistMapTable,
                       classify_curve, confinement_check, diophantine_check,
                       iterate, rotation_number)
from .special import GeneralizedTrig, build_trig, compute_period, get_trig

__all__ = [
    "AAConstants", "AAPoint", "AnnulusDomain", "CoefficientSpec",
    "DiophantineClass", "GeneralizedTrig", "IntegratorConfig",
    "PerturbationTerms", "PeriodicFunction", "PoincareMap", "State",
    "SystemConfig", "TwistMapTable", "build_angular_step", "build_radial_step",
    "build_trig", "classify_curve", "compose_chain", "compute_period",
    "confinement_check", "demo_spec", "diophantine_check", "from_action_angle",
    "integrate", "iterate", "jacobian_check", "load_spec", "order_scaling",
    "reversibility_residual", "rotation_number", "to_action_angle",
    "validate_spec", "vector_field",
]
