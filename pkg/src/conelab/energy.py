"""Approximating energy densities and the discrete Dirichlet energy of maps into NPC targets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .domain import DomainError, DomainMesh, sphere_volume

__all__ = [
    "MapState",
    "EnergyDensityField",
    "ConvergenceRow",
    "energy_constant",
    "approx_energy_density",
    "approx_energy_density_field",
    "graph_dirichlet_energy",
    "density_convergence_study",
    "poincare_residual",
]


class MapState:
    """Vertex values of a map ``u: domain -> target`` with frozen boundary values."""

    def __init__(self, domain: DomainMesh, target, values):
        values = np.array(values, dtype=float)
        if values.ndim == 1 and target.point_dim == 1:
            values = values[:, None]
        if values.shape != (domain.n_vertices, target.point_dim):
            raise ValueError(f"expected values of shape {(domain.n_vertices, target.point_dim)}, got {values.shape}")
        target.check_point(values)
        self.domain = domain
        self.target = target
        self._values = values
        self._values.setflags(write=False)
        self._frozen = values[domain.boundary].copy()

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def boundary_values(self) -> np.ndarray:
        return self._frozen

    def with_values(self, values) -> "MapState":
        values = np.asarray(values, dtype=float)
        if not np.array_equal(values[self.domain.boundary], self._frozen):
            raise ValueError("boundary values of a map may not change")
        return MapState(self.domain, self.target, values)

    def scalar(self) -> np.ndarray:
        """Values as a 1-D array (one-dimensional Euclidean targets only)."""
        if self.target.point_dim != 1 or self.target.kind != "euclidean":
            raise TypeError("scalar view needs a 1-D Euclidean target")
        return self._values[:, 0]

    def dist_from(self, v: int, others: np.ndarray | None = None) -> np.ndarray:
        pts = self._values if others is None else self._values[others]
        return self.target.distance(self._values[v][None, :], pts)

    def oscillation(self, vertices: np.ndarray | None = None) -> float:
        """``max_{x,y} d(u(x), u(y))`` over ``vertices``."""
        idx = np.arange(self.domain.n_vertices) if vertices is None else np.asarray(vertices)
        if idx.size == 0:
            return 0.0
        if self.target.kind == "euclidean" and self.target.point_dim == 1:
            vals = self._values[idx, 0]
            return float(vals.max() - vals.min())
        pts = self._values[idx]
        best = 0.0
        for start in range(0, len(idx), 512):
            block = pts[start:start + 512]
            best = max(best, float(self.target.distance(block[:, None, :], pts[None, :, :]).max()))
        return best

    def is_constant(self, tol: float = 0.0) -> bool:
        return self.oscillation() <= tol


def scalar_map(domain: DomainMesh, values) -> MapState:
    from .targets import Euclidean

    return MapState(domain, Euclidean(1), np.asarray(values, dtype=float)[:, None])


@dataclass
class EnergyDensityField:
    density: np.ndarray
    tag: str  # "graph" or "approx"
    p: float = 2.0
    eps: float | None = None
    near_boundary: np.ndarray | None = None  # flagged vertices whose eps-ball meets the boundary
    vertices: np.ndarray | None = None  # None means all vertices


@lru_cache(maxsize=None)
def energy_constant(n: int, p: float) -> float:
    """``c_{n,p} = int_{S^{n-1}} |x^1|^p dsigma``.

    Reduced to a 1-D integral over the polar angle from the ``x^1`` axis,
    ``omega_{n-2} int_0^pi |cos a|^p sin^{n-2} a da``; for ``n = 2`` the
    zero-sphere has measure 2 and the integral runs over ``[0, 2pi)``.
    """
    if n == 1:
        return 2.0
    if n == 2:
        val, _ = quad(lambda a: abs(math.cos(a)) ** p, 0.0, math.pi / 2, epsabs=1e-13, epsrel=1e-12)
        return 4.0 * val
    val, _ = quad(lambda a: abs(math.cos(a)) ** p * math.sin(a) ** (n - 2), 0.0, math.pi / 2, epsabs=1e-13, epsrel=1e-12)
    return 2.0 * sphere_volume(n - 1) * val


def _ball_weights(domain: DomainMesh, dist: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the smoothed ball ``B(eps)`` and the fraction of each vertex cell inside it.

    A vertex cell spans roughly one mesh spacing radially, so the fraction is
    ``clip(1/2 + (eps - d) / h, 0, 1)``.  A sharp cutoff would let a whole ring
    of vertices at ``d = eps`` flip in or out and shift the integral by
    ``O(h / eps)``.
    """
    h = float(domain.spacing) or eps
    frac = np.clip(0.5 + (eps - dist) / h, 0.0, 1.0)
    ball = np.flatnonzero(frac > 0)
    return ball, frac[ball]


def _ball_quotient(domain: DomainMesh, state: MapState, x: int, eps: float, p: float) -> float:
    dist = domain.distances_from(x)
    ball, frac = _ball_weights(domain, dist, eps)
    dy = state.dist_from(x, ball)
    return float(np.sum(frac * domain.measure[ball] * dy**p))


def approx_energy_density(domain: DomainMesh, state: MapState, p: float, eps: float, x: int) -> float:
    """``e_{p,eps}(x) = (n+p) / (c_{n,p} eps^n) * int_{B_x(eps)} d^p(u(x), u(y)) / eps^p dvol(y)``.

    The integral is a vertex-lumped sum over the metric ball, with boundary
    cells counted by the fraction lying inside (see ``_ball_weights``).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if p < 1:
        raise ValueError("p must be >= 1")
    if not 0 <= int(x) < domain.n_vertices:
        raise DomainError(f"vertex {x} outside domain")
    if domain.spacing and eps < domain.spacing:
        warnings.warn(f"eps={eps:g} is below the mesh spacing {domain.spacing:g}", stacklevel=2)
    n = domain.dimension
    integral = _ball_quotient(domain, state, int(x), eps, p)
    return (n + p) / (energy_constant(n, p) * eps**n) * integral / eps**p


def approx_energy_density_field(
    domain: DomainMesh, state: MapState, p: float, eps: float, vertices: Sequence[int] | None = None
) -> EnergyDensityField:
    idx = np.arange(domain.n_vertices) if vertices is None else np.asarray(vertices, dtype=np.int64)
    n = domain.dimension
    scale = (n + p) / (energy_constant(n, p) * eps ** (n + p))
    dens = np.empty(len(idx))
    for k, x in enumerate(idx):
        dens[k] = scale * _ball_quotient(domain, state, int(x), eps, p)
    near = _near_boundary(domain, idx, eps + 0.5 * float(domain.spacing))
    return EnergyDensityField(dens, "approx", p, eps, near, None if vertices is None else idx)


def _near_boundary(domain: DomainMesh, idx: np.ndarray, eps: float) -> np.ndarray:
    if domain.is_cone:
        return domain.r[idx] + eps > domain.radius
    bd = domain.boundary_vertices
    return np.array([domain.distances_from(int(x), bd).min() < eps for x in idx], dtype=bool)


def edge_sq_distances(domain: DomainMesh, state: MapState) -> np.ndarray:
    i, j = domain.edges.T
    return state.target.sq_distance(state.values[i], state.values[j])


def graph_dirichlet_energy(domain: DomainMesh, state: MapState) -> tuple[float, EnergyDensityField]:
    """Total ``sum_edges w_ij d^2(u_i, u_j)`` and per-vertex density ``(1 / 2 mu_x) sum_y w_xy d^2``."""
    d2 = edge_sq_distances(domain, state)
    contrib = domain.weights * d2
    i, j = domain.edges.T
    per_vertex = np.bincount(i, weights=contrib, minlength=domain.n_vertices)
    per_vertex += np.bincount(j, weights=contrib, minlength=domain.n_vertices)
    density = per_vertex / (2.0 * domain.measure)
    return float(contrib.sum()), EnergyDensityField(density, "graph")


def energy_in(domain: DomainMesh, density: np.ndarray, vertices: np.ndarray) -> float:
    return float(np.sum(domain.measure[vertices] * density[vertices]))


@dataclass
class ConvergenceRow:
    level: int
    h: float
    eps: float
    l1_gap: float
    energy: float
    relative_gap: float
    mean_value_ratio: float  # median over the subdomain
    mean_value_ratio_spread: float  # max |ratio - 1| over the subdomain
    n_vertices: int = 0
    ratios: np.ndarray = field(default=None, repr=False)


def density_convergence_study(
    domains: Sequence[DomainMesh],
    map_constructor: Callable[[DomainMesh], MapState],
    p: float = 2.0,
    eps_schedule: Sequence[float] | Callable[[float], float] = lambda h: 8.0 * h,
    subdomain_radius: float = 0.4,
    center=0,
) -> list[ConvergenceRow]:
    """L1 gap between the approximating density and the graph density over an interior ball.

    For each mesh the gap is ``sum_{x in B} mu_x |e_eps(x) - e_graph(x)|``
    with ``B = B_center(subdomain_radius)``, together with the per-vertex ratio
    ``int_{B_x(eps)} d^p(u(x),u(y)) dvol / (c_{n,p}/(n+p) e_graph(x) eps^{n+p})``.
    """
    rows = []
    for level, domain in enumerate(domains):
        h = float(domain.spacing)
        eps = float(eps_schedule(h) if callable(eps_schedule) else eps_schedule[level])
        if eps < 4 * h * (1 - 1e-9):
            raise ValueError(f"eps/h = {eps / h:.2f} below 4 at level {level}")
        dist_c = domain.distances_from(center)
        B = np.flatnonzero(dist_c <= subdomain_radius)
        if domain.is_cone:
            touches = subdomain_radius + eps + 0.5 * h >= domain.radius
        else:
            touches = np.any(domain.boundary[np.flatnonzero(dist_c <= subdomain_radius + eps + 0.5 * h)])
        if touches:
            raise ValueError("subdomain plus eps-ball touches the boundary")
        state = map_constructor(domain)
        _, gfield = graph_dirichlet_energy(domain, state)
        afield = approx_energy_density_field(domain, state, p, eps, B)
        eg = gfield.density[B]
        mu = domain.measure[B]
        gap = float(np.sum(mu * np.abs(afield.density - eg)))
        total = float(np.sum(mu * eg))
        with np.errstate(invalid="ignore", divide="ignore"):
            ratios = np.where(eg > 0, afield.density / eg, np.nan)
        finite = ratios[np.isfinite(ratios)]
        rows.append(ConvergenceRow(
            level=level, h=h, eps=eps, l1_gap=gap, energy=total,
            relative_gap=gap / total if total > 0 else 0.0,
            mean_value_ratio=float(np.median(finite)) if finite.size else float("nan"),
            mean_value_ratio_spread=float(np.max(np.abs(finite - 1.0))) if finite.size else float("nan"),
            n_vertices=domain.n_vertices, ratios=ratios,
        ))
    return rows


def poincare_residual(domain: DomainMesh, state: MapState, center, r: float, p: float = 2.0) -> float:
    """Fitted constant ``C`` in ``int int_{B_z(r)^2} d^p dvol dvol <= C r^{n+2} E_p(B_z(6r))``.

    The energy measure uses the graph density (``p = 2``) or the approximating
    density at ``eps = 4h`` otherwise.
    """
    dist = domain.distances_from(center)
    if domain.is_cone and 6 * r > domain.radius:
        raise DomainError("B_z(6r) leaves the domain")
    B = np.flatnonzero(dist < r)
    B6 = np.flatnonzero(dist < 6 * r)
    if not domain.is_cone and np.any(domain.boundary[B6]):
        raise DomainError("B_z(6r) leaves the domain")
    pts = state.values[B]
    mu = domain.measure[B]
    num = 0.0
    for start in range(0, len(B), 512):
        blk = pts[start:start + 512]
        d = state.target.distance(blk[:, None, :], pts[None, :, :])
        num += float(np.sum(mu[start:start + 512, None] * mu[None, :] * d**p))
    if p == 2:
        _, g = graph_dirichlet_energy(domain, state)
        dens = g.density[B6]
    else:
        dens = approx_energy_density_field(domain, state, p, 4 * domain.spacing, B6).density
    energy = float(np.sum(domain.measure[B6] * dens))
    n = domain.dimension
    if energy == 0.0:
        if num > 0:
            raise ArithmeticError("zero energy on B_z(6r) but nonzero oscillation on B_z(r)")
        return 0.0
    return num / (r ** (n + 2) * energy)
