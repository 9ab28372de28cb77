"""Reflected diffusions with boundary-driven spin.

Simulation of obliquely reflected Brownian motion whose reflection
direction is steered by a spin variable that itself changes only through
boundary local time, plus the deterministic, combinatorial and analytic
machinery needed to verify such simulations: steering drivers, excursion
statistics, occupancy histograms and a closed-form stationary density for
the periodic strip.
"""

__version__ = "0.1.0"

from .domain import Region, SmoothPhiDomain, Wristband, unit_disk
from .excursions import ExcursionRecord, count_deeper_than, decompose, exit_rate_table
from .fields import (AnchorSet, FieldSet, Polytope, check_positive_span,
                     cone_membership, reflection_direction, solve_lambda, spin_hull)
from .histogram import Axis, OccupancyHistogram
from .integrator import (AnalysisRequest, RunStats, SimConfig, Trajectory,
                         coupled_refinement, reflected_step, run_analysis,
                         run_chains, simulate, spin_update)
from .skorokhod import (BoundaryHold, BVDriver, FreeCurve, construct_steering_driver,
                        driver_from_text, driver_to_text, interior_curve,
                        solve_deterministic)
from .stationary import (WristbandDensity, compare_to_density, histogram_l1,
                         hitting_estimate, jacobian_check, steering_map,
                         verify_density_identities)
