"""Discrete Dirichlet problems: harmonic maps into NPC targets and the scalar Poisson equation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, spsolve

from .domain import DomainError, DomainMesh
from .energy import MapState, graph_dirichlet_energy

__all__ = [
    "DirichletProblem",
    "SolverReport",
    "solve_dirichlet",
    "solve_scalar_poisson",
    "maximum_principle_residual",
    "local_minimality_gap",
    "default_relaxation",
]


class TopologyError(DomainError):
    pass


@dataclass
class DirichletProblem:
    """Boundary data for a map ``domain -> target``.

    ``boundary_data`` holds one target point per boundary vertex, ordered like
    ``domain.boundary_vertices``.  ``initializer`` is ``"boundary-barycenter"``
    or ``"random"`` (seeded by ``seed``), or a full ``(N, d)`` array.
    """

    domain: DomainMesh
    target: object
    boundary_data: np.ndarray
    initializer: str | np.ndarray = "boundary-barycenter"
    seed: int = 0

    def __post_init__(self):
        self.boundary_data = np.asarray(self.boundary_data, dtype=float)
        if self.boundary_data.ndim == 1:
            self.boundary_data = self.boundary_data[:, None]
        nb = len(self.domain.boundary_vertices)
        if self.boundary_data.shape != (nb, self.target.point_dim):
            raise ValueError(f"boundary data must have shape {(nb, self.target.point_dim)}")
        self.target.check_point(self.boundary_data)

    @classmethod
    def from_function(cls, domain: DomainMesh, target, fn: Callable, **kw) -> "DirichletProblem":
        """Boundary data ``fn(r, phi)`` evaluated at the boundary vertices."""
        bv = domain.boundary_vertices
        data = np.asarray(fn(domain.r[bv], domain.phi[bv]), dtype=float)
        return cls(domain, target, data, **kw)

    def initial_state(self) -> MapState:
        dom, tgt = self.domain, self.target
        values = np.empty((dom.n_vertices, tgt.point_dim))
        if isinstance(self.initializer, np.ndarray):
            values[:] = self.initializer
        elif self.initializer == "boundary-barycenter":
            w = np.ones(len(self.boundary_data))
            c = tgt.barycenter_batch(self.boundary_data[None], w[None], init=self.boundary_data[:1])[0]
            values[:] = c
        elif self.initializer == "random":
            rng = np.random.default_rng(self.seed)
            if tgt.kind == "euclidean":
                lo, hi = self.boundary_data.min(axis=0), self.boundary_data.max(axis=0)
                values[:] = lo + (hi - lo) * rng.uniform(size=values.shape)
            else:
                values[:] = tgt.random_points(rng, dom.n_vertices, 1.0)
        else:
            raise ValueError(f"unknown initializer {self.initializer!r}")
        values[dom.boundary] = self.boundary_data
        return MapState(dom, tgt, values)


@dataclass
class SolverReport:
    iterations: int
    energy_trace: list = field(default_factory=list)
    displacement_trace: list = field(default_factory=list)
    final_displacement: float = float("inf")
    converged: bool = False
    relaxation: float = 1.0
    mode: str = "gauss-seidel"

    def energy_nonincreasing(self, slack: float = 1e-12) -> bool:
        e = np.asarray(self.energy_trace)
        return bool(np.all(np.diff(e) <= slack * np.maximum(1.0, np.abs(e[:-1]))))


def default_relaxation(domain: DomainMesh) -> float:
    """Over-relaxation factor ``2 / (1 + sin(pi h / D))``.

    ``D = pi sqrt(2 / 5.783) R`` is the side of the square whose lowest
    Dirichlet eigenvalue matches a radius-R cone (the radial mode
    ``j_{0,1}^2 / R^2`` does not depend on the cone angle).
    """
    D = math.pi * math.sqrt(2.0 / 5.783) * domain.radius
    return 2.0 / (1.0 + math.sin(math.pi * float(domain.spacing) / D))


def solve_dirichlet(
    problem: DirichletProblem,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    relaxation: float | str = "auto",
    mode: str = "gauss-seidel",
) -> tuple[MapState, SolverReport]:
    """Minimize the graph Dirichlet energy by barycenter sweeps.

    Each Gauss-Seidel sweep visits the interior color classes in turn (no two
    vertices of a class are adjacent, so a class update equals sequential
    updates in vertex-index order within the class) and moves every vertex
    toward the weighted barycenter of its neighbors, over-relaxed along the
    geodesic when that provably lowers the local energy.  Iteration stops once
    the largest move of a sweep is below ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    dom, tgt = problem.domain, problem.target
    state = problem.initial_state()
    vals = np.array(state.values)
    nbr, w = dom.neighbor_table

    if mode == "jacobi":
        omega = 0.5
        groups = [dom.interior]
    elif mode == "gauss-seidel":
        omega = default_relaxation(dom) if relaxation == "auto" else float(relaxation)
        if not 0.0 < omega < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")
        groups = dom.interior_colors
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")

    def energy(v):
        i, j = dom.edges.T
        return float(np.sum(dom.weights * tgt.sq_distance(v[i], v[j])))

    report = SolverReport(iterations=0, relaxation=omega, mode=mode)
    report.energy_trace.append(energy(vals))
    for it in range(1, max_iter + 1):
        move = 0.0
        for verts in groups:
            if verts.size == 0:
                continue
            pts = vals[nbr[verts]]
            ww = w[verts]
            q = vals[verts]
            b = tgt.barycenter_batch(pts, ww, init=q)
            if mode == "jacobi":
                new = tgt.geodesic(q, b, np.full(len(q), omega))
            elif omega != 1.0:
                new = tgt.relax(q, b, omega)
                if not tgt.quadratic_relaxation:
                    worse = tgt.local_energy(new, pts, ww) > tgt.local_energy(q, pts, ww)
                    new[worse] = b[worse]
            else:
                new = b
            step = tgt.distance(q, new)
            move = max(move, float(step.max(initial=0.0)))
            vals[verts] = new
        report.iterations = it
        report.energy_trace.append(energy(vals))
        report.displacement_trace.append(move)
        report.final_displacement = move
        if move < tol:
            report.converged = True
            break
    return state.with_values(vals), report


def local_minimality_gap(state: MapState) -> float:
    """Largest energy decrease available from a single-vertex barycenter move."""
    dom, tgt = state.domain, state.target
    nbr, w = dom.neighbor_table
    verts = dom.interior
    pts = state.values[nbr[verts]]
    q = state.values[verts]
    b = tgt.barycenter_batch(pts, w[verts], init=q)
    gap = tgt.local_energy(q, pts, w[verts]) - tgt.local_energy(b, pts, w[verts])
    return float(gap.max(initial=0.0))


def solve_scalar_poisson(domain: DomainMesh, h, g, tol: float = 1e-12) -> np.ndarray:
    """Solve ``(L f)(x) = mu_x h(x)`` at interior vertices with ``f = g`` on the boundary.

    ``L`` is the weighted graph Laplacian with the sign of the distributional
    Laplacian.  ``h`` is a scalar, an ``(N,)`` array or a callable of
    ``(r, phi)``; ``g`` likewise, evaluated on boundary vertices.
    """
    n = domain.n_vertices
    hv = _field(domain, h, np.arange(n))
    bv = domain.boundary_vertices
    iv = domain.interior
    gv = _field(domain, g, bv)
    L = domain.laplacian
    LII = L[iv][:, iv]
    if connected_components(LII, directed=False)[0] != 1:
        raise TopologyError("interior graph is disconnected")
    rhs = domain.measure[iv] * hv[iv] - L[iv][:, bv] @ gv
    A = (-LII).tocsr()
    b = -rhs
    x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=20 * len(iv) + 100)
    res = np.abs(A @ x - b).max(initial=0.0)
    if info != 0 or res > 1e-10:
        x = spsolve(A.tocsc(), b)
    f = np.empty(n)
    f[iv] = x
    f[bv] = gv
    return f


def _field(domain: DomainMesh, spec, idx: np.ndarray) -> np.ndarray:
    if callable(spec):
        return np.asarray(spec(domain.r[idx], domain.phi[idx]), dtype=float) * np.ones(len(idx))
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(len(idx), float(arr))
    if arr.shape == (domain.n_vertices,):
        return arr[idx]
    if arr.shape == (len(idx),):
        return arr
    raise ValueError("field has the wrong shape")


def subdomain_boundary(domain: DomainMesh, vertices) -> tuple[np.ndarray, np.ndarray]:
    """Split a vertex set into (interior, boundary): boundary vertices touch the complement or the mesh boundary."""
    S = np.zeros(domain.n_vertices, dtype=bool)
    S[np.asarray(vertices)] = True
    i, j = domain.edges.T
    leaks = np.zeros(domain.n_vertices, dtype=bool)
    leaks[i[S[i] & ~S[j]]] = True
    leaks[j[S[j] & ~S[i]]] = True
    bd = S & (leaks | domain.boundary)
    return np.flatnonzero(S & ~bd), np.flatnonzero(bd)


def maximum_principle_residual(domain: DomainMesh, f, subdomain=None) -> float:
    """``min_{boundary} f - min_{interior} f`` over a vertex subdomain; <= 0 for superharmonic ``f``."""
    f = np.asarray(f, dtype=float)
    verts = np.arange(domain.n_vertices) if subdomain is None else np.asarray(subdomain)
    if verts.size == 0:
        raise ValueError("empty subdomain")
    inner, bd = subdomain_boundary(domain, verts)
    if bd.size == 0:
        raise ValueError("subdomain has no boundary")
    if inner.size == 0:
        return 0.0
    return float(f[bd].min() - f[inner].min())


def scalar_dirichlet_problem(domain: DomainMesh, fn: Callable, **kw) -> DirichletProblem:
    from .targets import Euclidean

    return DirichletProblem.from_function(domain, Euclidean(1), fn, **kw)
