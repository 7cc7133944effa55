"""Region detection in spatially embedded Gaussian Markov random fields.

The package synthesizes planar graphs whose precision matrix is constant
inside polyomino-shaped regions, draws exact samples from the model,
recovers the regions from few samples with a greedy region-growing
detector, and evaluates the information-theoretic sample-complexity
bounds that govern the problem.
"""

__version__ = "0.1.0"

from .bounds import (BoundInputs, bounds_table, c_beta, entropy, gred_sufficient,
                     mckay_log_count, rate_polygon, rate_polyomino, theorem1_bound,
                     theorem2_bound, vershik_segment)
from .config import ExperimentConfig, quadrant_config
from .detect import (DetectionResult, GredParams, default_tau0, default_zeta,
                     grow_pass, refine, run_basic, run_convex, seed_scan)
from .estimation import CellEstimate, concentration_bound, estimate_theta, q_ratio_oracle
from .gaussian import (SampleMatrix, SampleMoments, restricted_trace_covariance,
                       sample, sample_moments, sym_kl, sym_kl_boundary_bound)
from .geometry import (Lattice, Polyomino, Region, RegionLayout, convexify,
                       is_convex, layout_from_rects, min_inscribed_square_side,
                       perimeter_area, resample_layout, symmetric_difference_area)
from .graphgen import (PrecisionModel, SpatialGraph, assign_regions, build_graph,
                       build_precision, connect_vertices, generate_vertices,
                       validate_assumptions)
from .experiment import area_error_series, run_experiment

__all__ = [name for name in dir() if not name.startswith("_")]
