"""Hopf-Lax auxiliary function ``f_t(x, lam)`` of a discrete map and its inequality checks.

For a map ``u`` and an outer vertex set ``Omega'``::

    f_t(x, lam) = min_{y in Omega', |xy| <= sqrt(C t)} e^{-2nk lam} |xy|^2 / (2t) - d(u(x), u(y))

with ``C = 2 osc_{Omega'} u + 2``.  Values are computed for ``x`` in an inner
set ``Omega''`` and every ``lam`` on a grid in ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import UNBOUNDED_BELOW, DomainError, DomainMesh
from .energy import MapState
from .regularity import ResolutionError, pointwise_lipschitz
from .solver import subdomain_boundary

__all__ = [
    "ParameterError",
    "HopfLaxField",
    "CylinderCheckReport",
    "SupersolutionReport",
    "TimeDerivativeReport",
    "hopf_lax_constants",
    "compute_hopf_lax",
    "hopf_lax_property_residuals",
    "supersolution_residual",
    "time_derivative_residual",
]


class ParameterError(ValueError):
    """A time or grid parameter violates the construction's requirements."""


@dataclass(frozen=True)
class HopfLaxConstants:
    osc: float
    C_star: float
    gap: float  # dist(Omega'', boundary of Omega')
    t0: float
    k: float
    n: int

    @property
    def a(self) -> float:
        """Exponent rate ``-2nk`` (nonnegative)."""
        return -2.0 * self.n * self.k

    def weight(self, lam) -> np.ndarray:
        return np.exp(self.a * np.asarray(lam, dtype=float))


def _vertex_set(domain: DomainMesh, verts) -> np.ndarray:
    if verts is None:
        return np.arange(domain.n_vertices)
    v = np.unique(np.asarray(verts, dtype=np.int64))
    if v.size and (v[0] < 0 or v[-1] >= domain.n_vertices):
        raise DomainError("vertex set out of range")
    return v


def hopf_lax_constants(domain: DomainMesh, state: MapState, omega1, omega2, k: float | None = None) -> HopfLaxConstants:
    """``C_*``, ``t_0`` and the curvature data for a nested pair ``Omega'' inside Omega'``."""
    o1 = _vertex_set(domain, omega1)
    o2 = _vertex_set(domain, omega2)
    if not np.all(np.isin(o2, o1)):
        raise ParameterError("Omega'' must be contained in Omega'")
    k = domain.curvature_bound if k is None else k
    if k == UNBOUNDED_BELOW:
        raise ParameterError("curvature is unbounded below; pass an explicit k <= 0")
    k = float(k)
    if k > 0:
        raise ParameterError("the construction needs k <= 0")
    osc = state.oscillation(o1)
    C = 2.0 * osc + 2.0
    _, bd = subdomain_boundary(domain, o1)
    if bd.size == 0:
        raise ParameterError("Omega' has no boundary")
    gap = float(domain.pairwise_distances(o2, bd).min())
    return HopfLaxConstants(osc, C, gap, gap**2 / (4.0 * C), k, domain.dimension)


@dataclass
class HopfLaxField:
    t: float
    lambda_grid: np.ndarray
    vertices: np.ndarray  # Omega''
    values: np.ndarray  # (len(vertices), len(lambda_grid)), f_t(x, lam) <= 0
    L: np.ndarray  # distance from x to the argmin band
    argmin_sets: list  # argmin_sets[i][j]: sorted vertex indices of S_t(x_i, lam_j)
    tau: np.ndarray  # band width used per cell
    constants: HopfLaxConstants
    omega1: np.ndarray
    h: float
    search_radius: float
    strict: bool = True

    @property
    def C_star(self) -> float:
        return self.constants.C_star

    @property
    def t0(self) -> float:
        return self.constants.t0

    def argmin_size(self) -> np.ndarray:
        return np.array([[len(s) for s in row] for row in self.argmin_sets], dtype=np.int64)

    def column(self, lam: float) -> int:
        j = np.flatnonzero(np.isclose(self.lambda_grid, lam, rtol=0, atol=1e-12))
        if j.size == 0:
            raise ParameterError(f"lambda={lam} is not on the grid")
        return int(j[0])

    def as_vertex_array(self, lam: float, fill=np.nan) -> np.ndarray:
        """Values at ``lam`` scattered into a full-length vertex array."""
        out = np.full(self.omega1.max() + 1 if self.omega1.size else 0, fill, dtype=float)
        out[self.vertices] = self.values[:, self.column(lam)]
        return out


def _cell_values(domain, state, consts, x, pool, radius, t, weights):
    """Integrand over the search ball at ``x``: returns (candidates, distances, matrix[lam, cand])."""
    d = domain.distances_from(int(x), pool)
    inside = d <= radius * (1 + 1e-12)
    cand = pool[inside]
    d = d[inside]
    if cand.size == 0:
        raise ResolutionError(f"empty search ball at vertex {x}")
    D = state.dist_from(int(x), cand)
    quad = d * d / (2.0 * t)
    return cand, d, weights[:, None] * quad[None, :] - D[None, :]


def _band_width(domain, state, x, zv, gz, weight, t, in_pool):
    """Default band ``1e-9 + h * Lip`` with Lip the integrand's largest edge slope at the argmin."""
    nbr, w = domain.neighbor_table
    nb = nbr[zv][(w[zv] != 0) & in_pool[nbr[zv]]]
    if nb.size == 0:
        return 1e-9
    dn = domain.distances_from(int(x), nb)
    gn = weight * dn * dn / (2.0 * t) - state.dist_from(int(x), nb)
    lens = domain.pairwise_distances(np.array([zv]), nb)[0]
    slope = float(np.max(np.abs(gn - gz) / lens))
    return 1e-9 + float(domain.spacing) * slope


def compute_hopf_lax(
    domain: DomainMesh,
    state: MapState,
    t: float,
    lambda_grid: Sequence[float],
    omega1=None,
    omega2=None,
    k: float | None = None,
    tau_S: float | None = None,
    strict: bool = True,
) -> HopfLaxField:
    """Evaluate ``f_t`` on ``Omega'' x lambda_grid``.

    ``omega1``/``omega2`` are vertex sets (``None`` for all vertices and for
    the vertices at least ``2 sqrt(C t)`` inside ``Omega'`` respectively).
    With ``strict=False`` times ``t >= t_0`` are computed anyway (report only).
    ``tau_S`` overrides the per-cell argmin band width.
    """
    if not t > 0:
        raise ParameterError("t must be positive")
    lam = np.asarray(lambda_grid, dtype=float)
    if lam.ndim != 1 or lam.size == 0 or lam.min() < 0 or lam.max() > 1 or np.any(np.diff(lam) <= 0):
        raise ParameterError("lambda grid must be increasing inside [0, 1]")
    o1 = _vertex_set(domain, omega1)
    if omega2 is None:
        _, bd = subdomain_boundary(domain, o1)
        C = 2.0 * state.oscillation(o1) + 2.0
        margin = 2.0 * math.sqrt(C * t)
        dist_bd = np.min(domain.pairwise_distances(o1, bd), axis=1)
        o2 = o1[dist_bd > margin]
        if o2.size == 0:
            raise ParameterError("no vertex lies far enough inside Omega' for this t")
    else:
        o2 = _vertex_set(domain, omega2)
    consts = hopf_lax_constants(domain, state, o1, o2, k)
    if t >= consts.t0 and strict:
        raise ParameterError(
            f"t={t:g} must be below t0 = dist^2(Omega'', dOmega') / (4 C) = {consts.t0:g}"
        )
    radius = math.sqrt(consts.C_star * t)
    weights = consts.weight(lam)
    in_pool = np.zeros(domain.n_vertices, dtype=bool)
    in_pool[o1] = True

    nx, nl = len(o2), len(lam)
    values = np.empty((nx, nl))
    Lmat = np.empty((nx, nl))
    taus = np.empty((nx, nl))
    sets: list = []
    for i, x in enumerate(o2):
        cand, d, G = _cell_values(domain, state, consts, x, o1, radius, t, weights)
        # argmin ties broken by smallest vertex index (cand is sorted)
        zi = np.argmin(G, axis=1)
        fmin = G[np.arange(nl), zi]
        row = []
        for j in range(nl):
            if tau_S is None:
                tau = _band_width(domain, state, x, int(cand[zi[j]]), fmin[j], weights[j], t, in_pool)
            else:
                tau = float(tau_S)
            band = np.flatnonzero(G[j] <= fmin[j] + tau)
            row.append(cand[band])
            Lmat[i, j] = float(d[band].min())
            taus[i, j] = tau
        values[i] = fmin
        sets.append(row)
    return HopfLaxField(
        t=float(t), lambda_grid=lam, vertices=o2, values=values, L=Lmat, argmin_sets=sets, tau=taus,
        constants=consts, omega1=o1, h=float(domain.spacing), search_radius=radius, strict=strict,
    )


@dataclass
class CheckStat:
    name: str
    anchor: str
    residual_min: float
    tolerance: float
    violations: int
    checks: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class CylinderCheckReport:
    """Residuals on ``Omega'' x lambda_grid``; a check is violated where ``residual < -tolerance``."""

    range_lower: np.ndarray  # f + osc  (>= 0)
    range_upper: np.ndarray  # -f       (>= 0)
    lam_lipschitz: np.ndarray  # bound - |f(lam) - f(lam')| over grid pairs, per vertex minimum
    L_bound: np.ndarray  # sqrt(C t) + h - L
    derivative: np.ndarray  # FD + e^{-2nk lam}(nk/t) L^2, shape (nx, nl - 1)
    tol_lambda: float
    tol_L: float
    stats: list = field(default_factory=list)

    def stat(self, name: str) -> CheckStat:
        for s in self.stats:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def all_passed(self) -> bool:
        return all(s.passed for s in self.stats)


def hopf_lax_property_residuals(fld: HopfLaxField, state: MapState | None = None, max_dlambda: float = 0.05) -> CylinderCheckReport:
    """Range, lambda-Lipschitz, argmin-distance and lambda-derivative checks."""
    lam = fld.lambda_grid
    if lam.size < 2:
        raise ParameterError("lambda grid needs at least two points")
    dl = np.diff(lam)
    if dl.max() > max_dlambda + 1e-12:
        raise ParameterError(f"lambda grid spacing {dl.max():g} exceeds {max_dlambda:g}")
    c = fld.constants
    f = fld.values
    osc = c.osc if state is None else state.oscillation(fld.omega1)
    range_lower = f + osc
    range_upper = -f

    bound = math.exp(c.a) * c.C_star
    diffs = np.abs(f[:, :, None] - f[:, None, :])
    gaps = np.abs(lam[:, None] - lam[None, :])
    lam_lip = np.min(bound * gaps[None] - diffs, axis=(1, 2))

    radius = math.sqrt(c.C_star * fld.t)
    L_bound = radius + fld.h - fld.L

    fd = (f[:, 1:] - f[:, :-1]) / dl[None, :]
    nk = c.n * c.k
    deriv = fd + c.weight(lam[:-1])[None, :] * (nk / fld.t) * fld.L[:, :-1] ** 2
    tol_lambda = c.C_star * float(dl.max())

    def count(arr, tol):
        return int(np.sum(arr < -tol)), int(arr.size), float(arr.min()) if arr.size else 0.0

    stats = []
    for name, anchor, arr, tol in [
        ("range", "range bound 0 >= f >= -osc", np.minimum(range_lower, range_upper), 0.0),
        ("lambda_lipschitz", "lambda-Lipschitz bound", lam_lip, 1e-12 * max(1.0, bound)),
        ("L_bound", "argmin distance bound", L_bound, 0.0),
        ("lambda_derivative", "lambda-derivative inequality", deriv, tol_lambda),
    ]:
        v, n, mn = count(arr, tol)
        stats.append(CheckStat(name, anchor, mn, tol, v, n))
    return CylinderCheckReport(range_lower, range_upper, lam_lip, L_bound, deriv, tol_lambda, fld.h, stats)


@dataclass
class SupersolutionReport:
    vertices: np.ndarray  # checked vertices
    laplacian: np.ndarray  # (L f)(x), unnormalized
    rhs: np.ndarray  # -e^{-2nk lam} (nk/t) L^2 mu_x
    tolerance: np.ndarray  # c h Lip(f)(x) + quantization bound
    excluded: int
    c: float

    @property
    def residual(self) -> np.ndarray:
        """``L f - rhs``; a violation is ``residual > tolerance``."""
        return self.laplacian - self.rhs

    @property
    def violations(self) -> int:
        return int(np.sum(self.residual > self.tolerance))

    @property
    def violation_fraction(self) -> float:
        return self.violations / max(1, len(self.vertices))


def supersolution_residual(domain: DomainMesh, fld: HopfLaxField, lam: float, c: float = 1.0) -> SupersolutionReport:
    """Discrete super-solution check ``L f_t(., lam) <= -e^{-2nk lam}(nk/t) L^2 mu + tol``.

    ``tol = c h Lip(f_t)(x) + W_x e^{-2nk lam} h^2 / (6t)`` where ``W_x`` is the
    weight sum at ``x``; the second term bounds the error of minimizing over
    vertices instead of over the continuum.

    Only vertices of ``Omega''`` off the mesh boundary whose neighbors all lie
    in ``Omega''`` are checked; the others are counted as excluded.
    """
    j = fld.column(lam)
    full = np.full(domain.n_vertices, np.nan)
    full[fld.vertices] = fld.values[:, j]
    inset = np.zeros(domain.n_vertices, dtype=bool)
    inset[fld.vertices] = True
    nbr, w = domain.neighbor_table
    real = w != 0
    ok = inset[fld.vertices] & ~domain.boundary[fld.vertices]
    ok &= np.all(inset[nbr[fld.vertices]] | ~real[fld.vertices], axis=1)
    rows = np.flatnonzero(ok)
    xs = fld.vertices[rows]
    nb = nbr[xs]
    ww = w[xs]
    fx = full[xs]
    fn = np.where(real[xs], full[nb], fx[:, None])
    lap = np.sum(ww * (fn - fx[:, None]), axis=1)
    lens = domain._graph[xs[:, None], nb].toarray()
    lens = np.where(real[xs] & (lens > 0), lens, 1.0)
    lip = np.max(np.where(real[xs], np.abs(fn - fx[:, None]) / lens, 0.0), axis=1)
    cst = fld.constants
    wl = float(cst.weight(lam))
    rhs = -wl * (cst.n * cst.k / fld.t) * fld.L[rows, j] ** 2 * domain.measure[xs]
    # Vertex minimization overshoots the continuous infimum by at most
    # e^{-2nk lam} rho^2 / (2t), rho = h / sqrt(3) the covering radius of a
    # triangulation with edges <= h; the overshoot enters L f through sum_y w_xy.
    quantization = np.sum(ww, axis=1) * wl * fld.h**2 / (6.0 * fld.t)
    tol = c * fld.h * lip + quantization
    return SupersolutionReport(xs, lap, rhs, tol, int(len(fld.vertices) - len(xs)), c)


@dataclass
class TimeDerivativeReport:
    vertices: np.ndarray
    s: np.ndarray  # decreasing
    lhs: np.ndarray  # (nx, ns) forward differences of v = -f in t
    lip_sq: np.ndarray  # Lip^2 u(x) at radius 4h
    grad_sq: np.ndarray  # |grad^+ v(t, x, lam)|^2 at radius 4h
    tolerance: np.ndarray  # per vertex
    c: float

    @property
    def residual(self) -> np.ndarray:
        return self.lhs - (self.lip_sq + self.grad_sq)[:, None]

    def passed_fraction(self) -> float:
        """Fraction of vertices whose residual at the smallest ``s`` is within tolerance."""
        return float(np.mean(self.residual[:, -1] <= self.tolerance))


def _values_at(domain, state, consts, xs, pool, t, lam):
    radius = math.sqrt(consts.C_star * t)
    wgt = consts.weight([lam])
    return np.array([_cell_values(domain, state, consts, x, pool, radius, t, wgt)[2][0].min() for x in xs])


def time_derivative_residual(
    domain: DomainMesh,
    state: MapState,
    xs: Sequence[int],
    lam: float,
    t: float,
    s_list: Sequence[float],
    omega1=None,
    omega2=None,
    k: float | None = None,
    c: float = 1.0,
) -> TimeDerivativeReport:
    """Compare ``(v(t+s) - v(t)) / s`` with ``Lip^2 u(x) + |grad^+ v|^2`` where ``v = -f``.

    Both ``Lip u`` and the one-sided gradient
    ``sup_{y in B_x(r)} (v(y) - v(x))_+ / r`` use ``r = 4h``.  The tolerance
    is ``c (h / sqrt(C t)) (Lip^2 u + |grad^+ v|^2)``.
    """
    s = np.asarray(s_list, dtype=float)
    if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) >= 0):
        raise ParameterError("s list must be positive and decreasing")
    xs = np.asarray(xs, dtype=np.int64)
    o1 = _vertex_set(domain, omega1)
    o2 = _vertex_set(domain, omega2 if omega2 is not None else xs)
    consts = hopf_lax_constants(domain, state, o1, o2, k)
    if t + s.max() >= consts.t0:
        raise ParameterError(f"t + s must stay below t0 = {consts.t0:g}")
    h = float(domain.spacing)
    r = 4.0 * h
    in_o1 = np.zeros(domain.n_vertices, dtype=bool)
    in_o1[o1] = True

    v_t = -_values_at(domain, state, consts, xs, o1, t, lam)
    lhs = np.empty((len(xs), len(s)))
    for m, sm in enumerate(s):
        lhs[:, m] = (-_values_at(domain, state, consts, xs, o1, t + sm, lam) - v_t) / sm

    lip_sq = np.empty(len(xs))
    grad_sq = np.empty(len(xs))
    for i, x in enumerate(xs):
        lip_sq[i] = pointwise_lipschitz(domain, state, int(x), [r]).value ** 2
        dist = domain.distances_from(int(x))
        ball = np.flatnonzero((dist <= r) & in_o1 & (dist > 0))
        if ball.size == 0:
            raise ResolutionError(f"no vertex within {r:g} of {x}")
        vy = -_values_at(domain, state, consts, ball, o1, t, lam)
        grad_sq[i] = (max(0.0, float(np.max(vy - v_t[i]))) / r) ** 2
    tol = c * (h / math.sqrt(consts.C_star * t)) * (lip_sq + grad_sq) + 1e-12
    return TimeDerivativeReport(xs, s, lhs, lip_sq, grad_sq, tol, c)
