"""Fokker-Planck equations for Marcus SDEs driven by Levy processes.

The package couples three views of the same dynamics: Marcus flow maps
(forward jump response, inverse map with Jacobian determinant), a nonlocal
Fokker-Planck operator assembled from those maps on regular grids, and a
jump-adapted Monte Carlo simulator used to cross-validate computed densities.
"""

from .errors import ConfigError, DivergenceError, InstabilityError
from .levy import (
    AlphaStable,
    CompoundPoisson,
    DiscreteDist,
    LevyTriplet,
    NormalDist,
    UniformDist,
    product_triplet,
    sample_increment,
    small_jump_moments,
    stable_tail_mass,
)
from .flow import FlowResult, NoiseCoefficient, check_inverse, marcus_forward, marcus_inverse
from .model import GaussianInitial, ModelSpec, PointInitial
from .fpe import (
    DensityField,
    Grid,
    JumpQuadrature,
    apply_rhs,
    build_jump_quadrature,
    diffusion_matrix,
    effective_drift,
    l1_distance,
    linf_distance,
    solve,
    stability_dt,
    step,
    total_mass,
)
from .sde import PathEnsemble, empirical_density, simulate_ensemble, simulate_path
from .examples import (
    BENCHMARKS,
    BenchmarkModel,
    ClosedFormMap,
    K,
    cosbar,
    example1_htilde,
    example2_htilde,
    example3_htilde,
    get_benchmark,
    sinbar,
)

__version__ = "0.1.0"
