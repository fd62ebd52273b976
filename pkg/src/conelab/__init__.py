"""Discrete harmonic maps from two-dimensional cones into nonpositively curved targets."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    UNBOUNDED_BELOW,
    ComparisonGeometry,
    ConeSpec,
    DomainError,
    DomainMesh,
    build_cone_mesh,
    comparison_sphere_area,
    geodesic_distance,
    metric_ball,
)
from .energy import (  # noqa: E402
    EnergyDensityField,
    MapState,
    approx_energy_density,
    approx_energy_density_field,
    density_convergence_study,
    energy_constant,
    graph_dirichlet_energy,
    poincare_residual,
    scalar_map,
)
from .solver import DirichletProblem, SolverReport, solve_dirichlet, solve_scalar_poisson  # noqa: E402
from .targets import (  # noqa: E402
    Euclidean,
    HyperbolicPlane,
    MetricTree,
    npc_quadruple_residual,
    tripod,
    weighted_barycenter,
)

__all__ = [
    "UNBOUNDED_BELOW", "ComparisonGeometry", "ConeSpec", "DomainError", "DomainMesh", "build_cone_mesh",
    "comparison_sphere_area", "geodesic_distance", "metric_ball", "EnergyDensityField", "MapState",
    "approx_energy_density", "approx_energy_density_field", "density_convergence_study", "energy_constant",
    "graph_dirichlet_energy", "poincare_residual", "scalar_map", "DirichletProblem", "SolverReport",
    "solve_dirichlet", "solve_scalar_poisson", "Euclidean", "HyperbolicPlane", "MetricTree",
    "npc_quadruple_residual", "tripod", "weighted_barycenter",
]
