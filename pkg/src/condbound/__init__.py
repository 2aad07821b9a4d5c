"""Tight moment bounds on conditional expectations."""
from .closedform import (bound_conditional_tail_probability, bound_mean_convex_dispersion,
                         bound_mean_mad, bound_mean_variance, bound_symmetric,
                         bound_symmetric_unimodal, optimal_regret_price)
from .dro import chebyshev_contextual, mad_contextual, newsvendor_instance, scarf_baseline
from .model import (AmbiguitySpec, BoundResult, FullSpace, HalfLine, Interval, MomentSpec,
                    PiecewisePolynomial, Status, Symmetric, SymmetricUnimodal, Unstructured,
                    mean_variance_spec)
from .oracle import GridSpec, dinkelbach_bisection, primal_lp, refine_until
from .sos import DualBoundProblem, dual_bound, sweep

__version__ = "0.1.0"
