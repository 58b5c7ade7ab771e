"""Sound piecewise linear bounds for geometric image transformations and
LP-based certification of small ReLU classifiers against them."""
from .errors import (BudgetExhaustedError, FormatError, GeoCertError, InvalidTransformError,
                     SolverStalledError)
from .fitting import (BoundPair, LinearPiece, PiecewiseBound, SampleSet, fit_linear, fit_pwl,
                      sample_params, sampled_area, select_bounds, split_index)
from .lipschitz import (Soundification, ViolationFn, cell_upper_bound, estimate_lipschitz,
                        max_violation_bnb, soundify, soundify_bound, violation)
from .lp import LinearProgram, LpSolution, solve_lp
from .pipeline import FitConfig, fit_image
from .transforms import (Attack, Image, ParamBox, SpatialTransform, apply_spatial, gradient_interval,
                         interpolate, inverse_spatial, pixel_value, pixel_value_gradient, reachable_box)
from .verifier import (Network, VerificationOutcome, falsify, load_network, lower_bound_margin,
                       preactivation_bounds, verify)

__version__ = "0.1.0"
