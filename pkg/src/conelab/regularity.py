"""Lipschitz and Hoelder estimates for discrete maps, and residuals of the regularity inequalities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import UNBOUNDED_BELOW, ComparisonGeometry, DomainError, DomainMesh, comparison_sphere_area
from .energy import MapState, graph_dirichlet_energy

__all__ = [
    "ResolutionError",
    "StaleInputError",
    "LipschitzProfile",
    "LipschitzReport",
    "HolderFit",
    "CompositionReport",
    "pointwise_lipschitz",
    "lipschitz_field",
    "holder_exponent_fit",
    "main_theorem_ratio",
    "lip_density_constant",
    "composition_inequality_residual",
    "mean_value_residual",
    "barycenter_residual",
]


class ResolutionError(DomainError):
    """The mesh is too coarse for the requested probe radius."""


class StaleInputError(ValueError):
    """The map is not a solved (discrete harmonic) map."""


@dataclass
class LipschitzProfile:
    value: float
    radii: list
    profile: list


def pointwise_lipschitz(domain: DomainMesh, state: MapState, x: int, radii: Sequence[float]) -> LipschitzProfile:
    """``sup_{0 < |xy| <= r} d(u(x), u(y)) / |xy|`` for each radius, smallest radius last."""
    radii = sorted((float(r) for r in radii), reverse=True)
    dist = domain.distances_from(x)
    profile = []
    for r in radii:
        ys = np.flatnonzero((dist > 0) & (dist <= r))
        if ys.size == 0:
            raise ResolutionError(f"no vertex within radius {r:g} of vertex {x}")
        profile.append(float(np.max(state.dist_from(x, ys) / dist[ys])))
    return LipschitzProfile(profile[-1], radii, profile)


def lipschitz_field(domain: DomainMesh, state: MapState, vertices, radius: float) -> np.ndarray:
    """Discrete pointwise Lipschitz constant at a fixed probe radius for many vertices."""
    out = np.empty(len(vertices))
    for k, x in enumerate(vertices):
        out[k] = pointwise_lipschitz(domain, state, int(x), [radius]).value
    return out


def _ball_oscillation(state: MapState, idx: np.ndarray) -> float:
    return state.oscillation(idx)


@dataclass
class HolderFit:
    alpha: float
    residual: float
    radii: np.ndarray
    osc: np.ndarray
    defined: bool = True


def holder_exponent_fit(domain: DomainMesh, state: MapState, center, radii: Sequence[float]) -> HolderFit:
    """Least-squares slope of ``log osc_{B_center(r)} u`` against ``log r``.

    Each ball is measured by its effective radius, the largest center distance
    of a vertex it contains.  Using the nominal radius instead biases the
    slope upward on small balls, where the vertex set stops one ring short.
    """
    nominal = np.asarray(sorted(radii), dtype=float)
    if nominal.size < 2:
        raise ValueError("need at least two radii")
    dist = domain.distances_from(center)
    balls = [np.flatnonzero(dist <= r) for r in nominal]
    radii = np.array([dist[b].max() if b.size else 0.0 for b in balls])
    if np.any(radii <= 0):
        raise ResolutionError("a probe ball contains only its center")
    osc = np.array([_ball_oscillation(state, b) for b in balls])
    if np.any(osc <= 0):
        return HolderFit(float("nan"), float("nan"), radii, osc, defined=False)
    A = np.column_stack([np.log(radii), np.ones_like(radii)])
    coef, *_ = np.linalg.lstsq(A, np.log(osc), rcond=None)
    resid = np.log(osc) - A @ coef
    return HolderFit(float(coef[0]), float(np.sqrt(np.mean(resid**2))), radii, osc)


@dataclass
class LipschitzReport:
    lipschitz_ratio: float
    numerator: float
    energy: float
    volume: float
    osc: float
    inner_radius: float
    R: float
    h: float
    curvature: object
    pairs: int
    lip: dict = field(default_factory=dict)

    @property
    def denominator(self) -> float:
        return float(np.sqrt(self.energy / self.volume) + self.osc)


def main_theorem_ratio(
    domain: DomainMesh, state: MapState, q, R: float, inner_radius: float | None = None, min_pair: float | None = None
) -> LipschitzReport:
    """``sup_{x,y in B_q(rho)} d(u(x),u(y))/|xy|`` divided by ``sqrt(E(B_q(R))/vol(B_q(R))) + osc_{B_q(R)} u``.

    ``rho`` defaults to ``R/16``; pairs closer than ``2h`` are skipped.
    """
    h = float(domain.spacing)
    rho = R / 16.0 if inner_radius is None else float(inner_radius)
    min_pair = 2.0 * h if min_pair is None else min_pair
    dist_q = domain.distances_from(q)
    if domain.is_cone:
        if domain._resolve(q)[0] + 2 * R > domain.radius * (1 + 1e-12):
            raise DomainError("B_q(2R) is not inside the domain")
    inner = np.flatnonzero(dist_q < rho)
    D = domain.pairwise_distances(inner, inner)
    iu, ju = np.nonzero(np.triu(D >= min_pair, 1))
    if iu.size == 0:
        raise ResolutionError(f"no vertex pairs in B_q({rho:g}) at separation >= {min_pair:g}")
    vals = state.values
    quot = state.target.distance(vals[inner[iu]], vals[inner[ju]]) / D[iu, ju]
    numerator = float(quot.max())
    ball = np.flatnonzero(dist_q < R)
    _, g = graph_dirichlet_energy(domain, state)
    energy = float(np.sum(domain.measure[ball] * g.density[ball]))
    volume = float(domain.measure[ball].sum())
    osc = state.oscillation(np.flatnonzero(dist_q <= R))
    denom = np.sqrt(energy / volume) + osc
    if denom == 0:
        if numerator > 0:
            raise ArithmeticError("zero energy and oscillation with a nonzero difference quotient")
        ratio = 0.0
    else:
        ratio = numerator / denom
    return LipschitzReport(
        lipschitz_ratio=float(ratio), numerator=numerator, energy=energy, volume=volume, osc=osc,
        inner_radius=rho, R=R, h=h, curvature=domain.curvature_bound, pairs=int(iu.size),
    )


def lip_density_constant(domain: DomainMesh, state: MapState, q, R: float, probe_radius: float | None = None,
                         floor: float = 1e-8) -> float:
    """Fitted ``sup_{x in B_q(R/6)} Lip^2 u(x) / e_graph(x)``; vertices with density below ``floor`` are skipped."""
    probe_radius = 2.0 * domain.spacing if probe_radius is None else probe_radius
    dist_q = domain.distances_from(q)
    verts = np.flatnonzero((dist_q < R / 6.0) & ~domain.boundary)
    _, g = graph_dirichlet_energy(domain, state)
    dens = g.density[verts]
    keep = dens > floor
    if not np.any(keep):
        return 0.0
    lip = lipschitz_field(domain, state, verts[keep], probe_radius)
    return float(np.max(lip**2 / dens[keep]))


def barycenter_residual(state: MapState) -> np.ndarray:
    """``d(u(x), barycenter of neighbors)`` at interior vertices."""
    dom, tgt = state.domain, state.target
    nbr, w = dom.neighbor_table
    iv = dom.interior
    q = state.values[iv]
    b = tgt.barycenter_batch(state.values[nbr[iv]], w[iv], init=q)
    return tgt.distance(q, b)


@dataclass
class CompositionReport:
    product_residual: np.ndarray  # (L (+) L) f / mu at sampled pairs, minus the allowed slack
    pairs: np.ndarray
    product_tol: np.ndarray
    probe_residual: dict  # probe index -> residual array over interior vertices
    probe_tol: np.ndarray
    c_h: float
    solver_residual: float

    @property
    def product_violations(self) -> int:
        return int(np.sum(self.product_residual < -self.product_tol))

    @property
    def product_violation_fraction(self) -> float:
        return self.product_violations / max(1, len(self.product_residual))

    @property
    def probe_violation_fraction(self) -> float:
        tot = sum(len(v) for v in self.probe_residual.values())
        bad = sum(int(np.sum(v < -self.probe_tol)) for v in self.probe_residual.values())
        return bad / max(1, tot)


def composition_inequality_residual(
    domain: DomainMesh,
    state: MapState,
    probes: Sequence,
    n_pairs: int | None = 20000,
    seed: int = 0,
    c_h: float = 1.0,
    stale_tol: float = 1e-6,
) -> CompositionReport:
    """Residuals of the product subharmonicity of ``d(u(x), u(y))`` and of ``L f_P^2 >= 2 e``.

    (a) at interior pairs ``(x, y)``:
        ``(L_x f)/mu_x + (L_y f)/mu_y >= -tol`` with ``tol`` set by the solver residual;
    (b) for each probe ``P`` and interior ``x``:
        ``[L(f_P^2)(x) - sum_y w_xy d^2(u_x, u_y)] / mu_x >= -c_h h Lip^2(x)``.

    ``n_pairs=None`` checks all interior pairs.
    """
    res = barycenter_residual(state)
    solver_res = float(res.max(initial=0.0))
    if solver_res > stale_tol:
        raise StaleInputError(f"map is not solved: barycenter residual {solver_res:.3g}")
    dom, tgt = domain, state.target
    nbr, w = dom.neighbor_table
    vals = state.values
    iv = dom.interior
    W = w.sum(axis=1)
    mu = dom.measure
    h = float(dom.spacing)

    if n_pairs is None:
        X, Y = np.meshgrid(iv, iv, indexing="ij")
        pairs = np.column_stack([X.ravel(), Y.ravel()])
    else:
        rng = np.random.default_rng(seed)
        pairs = np.column_stack([rng.choice(iv, n_pairs), rng.choice(iv, n_pairs)])
    prod = np.empty(len(pairs))
    ptol = np.empty(len(pairs))
    for s in range(0, len(pairs), 4096):
        x, y = pairs[s:s + 4096].T
        f = tgt.distance(vals[x], vals[y])
        fx = tgt.distance(vals[nbr[x]], vals[y][:, None, :])
        fy = tgt.distance(vals[x][:, None, :], vals[nbr[y]])
        Lx = np.sum(w[x] * (fx - f[:, None]), axis=1)
        Ly = np.sum(w[y] * (fy - f[:, None]), axis=1)
        prod[s:s + 4096] = Lx / mu[x] + Ly / mu[y]
        ptol[s:s + 4096] = 10.0 * solver_res * (W[x] / mu[x] + W[y] / mu[y]) + 1e-12

    _, g = graph_dirichlet_energy(dom, state)
    lip_loc = np.sqrt(np.maximum(g.density[iv], 0.0))
    probe_tol = c_h * h * lip_loc**2 + 10.0 * solver_res * W[iv] / mu[iv] + 1e-12
    probe_res = {}
    for k, P in enumerate(probes):
        P = tgt.check_point(np.asarray(P, dtype=float))
        fP2 = tgt.sq_distance(vals, P[None, :])
        L_f2 = np.sum(w[iv] * (fP2[nbr[iv]] - fP2[iv][:, None]), axis=1)
        two_e = np.sum(w[iv] * tgt.sq_distance(vals[nbr[iv]], vals[iv][:, None, :]), axis=1)
        probe_res[k] = (L_f2 - two_e) / mu[iv]
    return CompositionReport(prod, pairs, ptol, probe_res, probe_tol, c_h, solver_res)


def _annulus_mean(domain: DomainMesh, values: np.ndarray, dist: np.ndarray, R: float, width: float):
    """Tent-weighted shell average around radius ``R``.

    Weights are ``mu_y * max(0, 1 - |d(y) - R| / width)``, which linearly
    interpolates between the vertex rings straddling ``R``.  Returns the mean
    and the shell measure divided by ``width`` (a sphere-length estimate).
    """
    tent = np.maximum(0.0, 1.0 - np.abs(dist - R) / width)
    shell = np.flatnonzero(tent > 0)
    if shell.size == 0:
        raise ResolutionError(f"empty annulus at radius {R:g}")
    wts = domain.measure[shell] * tent[shell]
    return float(np.sum(wts * values[shell]) / wts.sum()), float(wts.sum())


def mean_value_residual(
    domain: DomainMesh,
    geom: ComparisonGeometry,
    p: int,
    radii: Sequence[float],
    f: np.ndarray | None = None,
    h=None,
    state: MapState | None = None,
    probe=None,
) -> np.ndarray:
    """Residual profile of the mean value inequalities at vertex ``p``.

    Scalar mode (``f`` and ``h`` given)::

        (1 / |dB|_k) int_{dB_p(R)} f - f(p) - h(p) R^2 / (2n)

    where the sphere integral is the shell mean (tent of half-width ``h_mesh``) times the
    sphere length at ``p`` and ``|dB|_k`` the comparison sphere area.

    Map mode (``state`` and ``probe`` given)::

        int_{B_p(R)} [d^2(P, u(p)) - d^2(P, u(x))] dvol + e(p) omega_{n-1} / (n (n+2)) R^{n+2}
    """
    n = domain.dimension
    dist = domain.distances_from(p)
    hm = float(domain.spacing)
    out = []
    if f is not None:
        f = np.asarray(f, dtype=float)
        hv = np.broadcast_to(np.asarray(h if h is not None else 0.0, dtype=float), f.shape)
        for R in radii:
            if domain.is_cone and domain._resolve(p)[0] + R + hm > domain.radius * (1 + 1e-12):
                raise DomainError("sphere leaves the domain")
            mean, length_est = _annulus_mean(domain, f, dist, R, hm)
            length = domain.sphere_length(p, R)
            if length is None:
                length = length_est
            avg = mean * length / comparison_sphere_area(geom, R)
            out.append(avg - f[p] - hv[p] * R**2 / (2 * n))
        return np.array(out)
    if state is None or probe is None:
        raise ValueError("pass either (f, h) or (state, probe)")
    tgt = state.target
    P = tgt.check_point(np.asarray(probe, dtype=float))
    d2 = tgt.sq_distance(state.values, P[None, :])
    _, g = graph_dirichlet_energy(domain, state)
    for R in radii:
        ball = np.flatnonzero(dist < R)
        integral = float(np.sum(domain.measure[ball] * (d2[p] - d2[ball])))
        out.append(integral + g.density[p] * geom.omega / (n * (n + 2)) * R ** (n + 2))
    return np.array(out)
