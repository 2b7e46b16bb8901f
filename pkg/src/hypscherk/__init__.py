"""Minimal graphs over Scherk domains of the hyperbolic plane.

Geometry of the half-plane and disk models, the Jenkins-Serrin type
solvability checks, the closed-form barrier and CMC profile families, a
Newton solver for the truncated Dirichlet problems and flux tools.
"""

__version__ = "0.1.0"

from .errors import (CombinatorialLimitError, DomainError, EmptySegmentError, GridError,
                     HypScherkError, MisconfigurationError, SchemaError, UnboundedLengthError)
from .geometry import (Geodesic, HPoint, Horocycle, IdealPoint, Mobius, PolarChart,
                       geodesic_between, hyperbolic_distance, truncated_side_length)
from .domain import (Edge, EdgeKind, ScherkDomain, Verdict, check_domain, check_theorem1,
                     check_theorem2, check_theorem3, compute_truncated_lengths,
                     enumerate_inscribed_polygons, validate_domain)
from .profiles import BarrierParams, CmcProfile, barrier_value, cmc_classify, make_profile
from .solver import (DiscreteSolution, SolverConfig, build_grid, detect_divergence_lines,
                     discrete_flux, domain_region, run_truncation_sequence, solve_dirichlet)
from .flux import (ExperimentReport, FluxResult, experiment_nonuniqueness,
                   experiment_nonzero_flux, flux_exact, verify_flux_lemmas)
from .io import parse_domain_file
