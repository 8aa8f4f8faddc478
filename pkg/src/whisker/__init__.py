"""Spectral Newton solver for whiskered invariant tori of exact symplectic maps and flows."""

from .bundles import Cocycle, RateEstimates, Splitting, estimate_rates, refine_splitting, solve_stable, solve_unstable
from .cohomology import certify, golden_mean, noble, solve_flow, solve_map
from .errors import *  # noqa: F401,F403
from .fourier import FourierMap, Frequency
from .geometry import Embedding, SymplecticSystem, pair_J
from .kernels import BACKEND
from .models import ModelSpec, build_model, model_A, model_B, model_SKEW, model_T
from .newton import (
    NewtonConfig,
    NewtonReport,
    TorusSolution,
    condition_report,
    continue_family,
    is_quadratic,
    phase_lock,
    solve,
)
from .verify import verify_torus

__version__ = "0.1.0"
