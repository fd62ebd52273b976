"""Batch experiment driver.

Usage::

    conelab <kind> --config run.json --out results/ [--seed N] [--threads N]

``kind`` is one of ``solve``, ``npc-check``, ``energy-convergence``,
``regularity``, ``sharpness`` and ``hopf-lax``.  Exit status is 0 when every
check passes, 1 on a failed check, 2 on a configuration error and 3 on an I/O
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .domain import ConeSpec, DomainError, DomainMesh, build_cone_mesh
from .energy import (
    MapState,
    approx_energy_density,
    density_convergence_study,
    graph_dirichlet_energy,
    scalar_map,
)
from .hopf_lax import (
    compute_hopf_lax,
    hopf_lax_constants,
    hopf_lax_property_residuals,
    supersolution_residual,
    time_derivative_residual,
)
from .io import energy_trace_rows, hopf_lax_rows, load_mesh, save_map, save_mesh, write_csv
from .regularity import (
    composition_inequality_residual,
    holder_exponent_fit,
    lip_density_constant,
    lipschitz_field,
    main_theorem_ratio,
    mean_value_residual,
)
from .solver import DirichletProblem, maximum_principle_residual, solve_dirichlet
from .targets import Euclidean, HyperbolicPlane, MetricTree, npc_quadruple_residuals, target_from_dict, tripod

__all__ = ["ConfigError", "Check", "ExperimentResult", "KINDS", "validate_config", "run_experiment", "emit_report", "main"]

KINDS = ("solve", "npc-check", "energy-convergence", "regularity", "sharpness", "hopf-lax")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- config

_TOP_KEYS = {"kind", "domain", "target", "boundary", "parameters", "seed"}
_DOMAIN_KEYS = {"angle_pi", "total_angle", "radius", "refinement_level", "base_rings", "mesh_file"}
_TARGET_KEYS = {"kind", "dim", "preset", "leg", "file"}
_BOUNDARY_KEYS = {"name", "alpha", "leg", "base", "amplitude", "values", "file"}

_PARAM_DEFAULTS: dict[str, dict] = {
    "solve": {
        "tol": 1e-9, "max_iter": 100000, "relaxation": "auto", "mode": "gauss-seidel",
        "initializer": "boundary-barycenter", "uniqueness_probe": True, "closed_form_tol": None,
        "max_principle_tol": 1e-10,
    },
    "npc-check": {"n_quadruples": 10000, "targets": ["euclidean3", "hyperbolic", "tripod"], "tol": 1e-9, "scale": 2.0},
    "energy-convergence": {
        "levels": [2, 3, 4], "gradient": [1.0, 0.5], "eps_factor": 8.0, "subdomain_radius": 0.4,
        "gap_tol": 0.05, "ratio_tol": 0.10, "normalization_tol": 0.05, "graph_energy_tol": 1e-10,
    },
    "regularity": {
        "tol": 1e-10, "R": 0.45, "inner_radius": None, "probe_factor": 2.0, "holder_radii": None,
        "n_pairs": 20000, "n_probes": 5, "c_h": 1.0, "violation_tol": 0.01, "mean_value_radii": [0.1, 0.2],
    },
    "sharpness": {
        "angles_pi": [1, 2, 3], "levels": [1, 2, 3], "R": 0.5, "inner_radius": 0.25, "tol": 1e-10,
        "growth_min": 1.2, "bounded_factor": 2.0, "holder_radii": [0.05, 0.08, 0.12, 0.2, 0.3, 0.5],
    },
    "hopf-lax": {
        "levels": [1, 2, 3], "k": [0.0, -1.0], "t_fraction": 0.25, "dlambda": 0.02, "inner_radius": 0.5,
        "supersolution_lambdas": [0.0, 0.5, 1.0], "c": 1.0, "supersolution_tol": 0.01, "n_probes": 20,
        "probe_radius": 0.4, "probe_pass_fraction": 0.95, "tol": 1e-10,
    },
}

_DEFAULT_BOUNDARY = {"name": "cos_phi"}


def _check_keys(section: str, doc, allowed: set) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{section} must be an object")
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(extra)}")


def validate_config(config: dict, kind: str | None = None, base_dir: Path | None = None) -> dict:
    """Return a normalized copy of ``config`` with defaults filled in; unknown keys are errors."""
    _check_keys("config", config, _TOP_KEYS)
    kind = kind or config.get("kind")
    if config.get("kind") not in (None, kind):
        raise ConfigError(f"config kind {config.get('kind')!r} does not match subcommand {kind!r}")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    base_dir = Path(base_dir or ".")
    dom = dict(config.get("domain", {}))
    _check_keys("domain", dom, _DOMAIN_KEYS)
    if "mesh_file" in dom:
        p = base_dir / dom["mesh_file"]
        if not p.is_file():
            raise ConfigError(f"mesh file not found: {p}")
        dom["mesh_file"] = str(p)
    if "angle_pi" in dom and "total_angle" in dom:
        raise ConfigError("give either angle_pi or total_angle")
    tgt = dict(config.get("target", {"kind": "euclidean", "dim": 1}))
    _check_keys("target", tgt, _TARGET_KEYS)
    if "file" in tgt:
        p = base_dir / tgt["file"]
        if not p.is_file():
            raise ConfigError(f"tree file not found: {p}")
        tgt["file"] = str(p)
    bnd = dict(config.get("boundary", _DEFAULT_BOUNDARY))
    _check_keys("boundary", bnd, _BOUNDARY_KEYS)
    if "file" in bnd:
        p = base_dir / bnd["file"]
        if not p.is_file():
            raise ConfigError(f"boundary table not found: {p}")
        bnd["file"] = str(p)
    params = dict(config.get("parameters", {}))
    defaults = _PARAM_DEFAULTS[kind]
    _check_keys("parameters", params, set(defaults))
    merged = {**defaults, **params}
    seed = config.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    return {"kind": kind, "domain": dom, "target": tgt, "boundary": bnd, "parameters": merged, "seed": seed}


# --------------------------------------------------------------------------- builders

def _total_angle(dom: dict) -> float:
    if "total_angle" in dom:
        return float(dom["total_angle"])
    return float(dom.get("angle_pi", 2)) * math.pi


def _build_domain(dom: dict, level: int | None = None, angle: float | None = None) -> DomainMesh:
    if "mesh_file" in dom:
        if level is not None and level != dom.get("refinement_level", level):
            raise ConfigError("a mesh file cannot be refined")
        return load_mesh(dom["mesh_file"])
    try:
        spec = ConeSpec(
            angle if angle is not None else _total_angle(dom),
            float(dom.get("radius", 1.0)),
            int(level if level is not None else dom.get("refinement_level", 3)),
            int(dom.get("base_rings", 6)),
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    return build_cone_mesh(spec)


def _build_target(tgt: dict):
    if "file" in tgt:
        return MetricTree.load(tgt["file"])
    try:
        return target_from_dict(tgt)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad target: {exc}") from exc


def _mode_alpha(bnd: dict, theta: float, default: float) -> float:
    alpha = float(bnd.get("alpha", default))
    turns = alpha * theta / (2 * math.pi)
    if abs(turns - round(turns)) > 1e-9:
        raise ConfigError(f"cos(alpha phi) with alpha={alpha:g} is not continuous across the seam of a {theta:g} cone")
    return alpha


def _boundary(bnd: dict, mesh: DomainMesh, target) -> tuple[np.ndarray, Callable | None]:
    """Boundary data on ``mesh.boundary_vertices`` and the closed-form solution if known."""
    name = bnd.get("name")
    theta = mesh.total_angle if mesh.total_angle is not None else 2 * math.pi
    R = mesh.radius
    bv = mesh.boundary_vertices
    r, phi = mesh.r[bv], mesh.phi[bv]
    if name in ("cos_phi", "cos_alpha_phi"):
        if not (isinstance(target, Euclidean) and target.dim == 1):
            raise ConfigError(f"{name} needs a one-dimensional Euclidean target")
        alpha = _mode_alpha(bnd, theta, 1.0 if name == "cos_phi" else 2 * math.pi / theta)
        if name == "cos_phi" and "alpha" in bnd:
            raise ConfigError("cos_phi takes no alpha; use cos_alpha_phi")
        data = np.cos(alpha * phi)[:, None]
        return data, (lambda rr, pp: (rr / R) ** alpha * np.cos(alpha * pp))
    if name == "tree_leg_embed":
        if not isinstance(target, MetricTree):
            raise ConfigError("tree_leg_embed needs a metric tree target")
        leg = int(bnd.get("leg", 0))
        base, amp = float(bnd.get("base", 0.5)), float(bnd.get("amplitude", 0.3))
        if not 0 <= leg < len(target.edge_list):
            raise ConfigError(f"edge {leg} not in tree")
        ln = target.edge_list[leg][2]
        if base - abs(amp) < 0 or base + abs(amp) > ln:
            raise ConfigError("embedded boundary leaves its edge")
        _mode_alpha({"alpha": 1.0}, theta, 1.0)
        data = np.column_stack([np.full(len(bv), float(leg)), base + amp * np.cos(phi)])
        exact = (lambda rr, pp: np.column_stack([np.full(len(rr), float(leg)), base + amp * (rr / R) * np.cos(pp)]))
        return data, exact
    if name == "tripod_sectors":
        if not isinstance(target, MetricTree) or len(target.edge_list) != 3:
            raise ConfigError("tripod_sectors needs a three-edge tree")
        amp = float(bnd.get("amplitude", 0.8))
        if not 0 < amp <= min(e[2] for e in target.edge_list):
            raise ConfigError("amplitude must lie in (0, shortest leg]")
        sector = theta / 3.0
        j = np.minimum(np.floor(phi / sector), 2)
        local = phi - j * sector
        return np.column_stack([j, amp * np.sin(math.pi * local / sector)]), None
    if name == "tabulated":
        if "values" in bnd:
            data = np.array(bnd["values"], dtype=float)
        elif "file" in bnd:
            with open(bnd["file"], newline="") as fh:
                rows = [row for row in csv.reader(fh) if row]
            try:
                data = np.array([[float(c) for c in row] for row in rows[1:]], dtype=float)
            except ValueError as exc:
                raise ConfigError(f"bad boundary table: {exc}") from exc
        else:
            raise ConfigError("tabulated boundary needs values or file")
        if data.ndim == 1:
            data = data[:, None]
        if data.shape != (len(bv), target.point_dim):
            raise ConfigError(f"tabulated boundary must have shape {(len(bv), target.point_dim)}")
        return data, None
    raise ConfigError(f"unknown boundary expression {name!r}")


# --------------------------------------------------------------------------- results

@dataclass
class Check:
    name: str
    anchor: str
    statistic: str
    value: float
    tolerance: float
    relation: str  # "<=", ">=", "=="
    passed: bool

    @classmethod
    def le(cls, name, anchor, statistic, value, tol):
        return cls(name, anchor, statistic, float(value), float(tol), "<=", bool(value <= tol))

    @classmethod
    def ge(cls, name, anchor, statistic, value, tol):
        return cls(name, anchor, statistic, float(value), float(tol), ">=", bool(value >= tol))


@dataclass
class ExperimentResult:
    kind: str
    config: dict
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # filename -> (header, rows)
    documents: dict = field(default_factory=dict)  # filename -> writer(path)
    info: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def status(self) -> int:
        return EXIT_PASS if all(c.passed for c in self.checks) else EXIT_FAIL


def _solve(mesh, target, data, p, seed, initializer=None):
    prob = DirichletProblem(mesh, target, data, initializer=initializer or p.get("initializer", "boundary-barycenter"), seed=seed)
    return solve_dirichlet(prob, tol=p["tol"], max_iter=p.get("max_iter", 100000),
                           relaxation=p.get("relaxation", "auto"), mode=p.get("mode", "gauss-seidel"))


def _run_solve(cfg, res: ExperimentResult):
    p = cfg["parameters"]
    mesh = _build_domain(cfg["domain"])
    target = _build_target(cfg["target"])
    data, exact = _boundary(cfg["boundary"], mesh, target)
    state, rep = _solve(mesh, target, data, p, cfg["seed"])
    res.documents["mesh.json"] = lambda path: save_mesh(mesh, path)
    res.documents["map.json"] = lambda path: save_map(state, path)
    res.tables["energy_trace.csv"] = (("iteration", "energy", "displacement"), energy_trace_rows(rep))
    res.info.update(vertices=mesh.n_vertices, h=mesh.spacing, iterations=rep.iterations, relaxation=rep.relaxation,
                    final_energy=rep.energy_trace[-1])
    res.checks.append(Check.le("solver convergence", "barycenter sweep displacement", "final displacement",
                               rep.final_displacement, p["tol"]))
    e = np.asarray(rep.energy_trace)
    rise = float(np.max(np.diff(e) / np.maximum(1.0, np.abs(e[:-1])), initial=0.0))
    res.checks.append(Check.le("energy monotonicity", "graph Dirichlet energy along sweeps",
                               "largest relative energy increase", rise, 1e-12))
    if p["uniqueness_probe"]:
        st2, rep2 = _solve(mesh, target, data, p, cfg["seed"] + 1, initializer="random")
        gap = float(target.distance(state.values, st2.values).max())
        res.checks.append(Check.le("uniqueness probe", "unique minimizer for fixed boundary data",
                                   "max distance between two solves", gap, 10 * p["tol"]))
    if isinstance(target, Euclidean) and target.dim == 1:
        u = state.scalar()
        mp = max(maximum_principle_residual(mesh, u), maximum_principle_residual(mesh, -u))
        res.checks.append(Check.le("maximum principle", "min over interior >= min over boundary",
                                   "boundary min minus interior min", mp, p["max_principle_tol"]))
    if exact is not None:
        ex = np.asarray(exact(mesh.r, mesh.phi), dtype=float).reshape(state.values.shape)
        err = float(target.distance(state.values, ex).max())
        alpha = float(cfg["boundary"].get("alpha", 1.0 if cfg["boundary"]["name"] != "cos_alpha_phi"
                                          else 2 * math.pi / (mesh.total_angle or 2 * math.pi)))
        tol = p["closed_form_tol"] if p["closed_form_tol"] is not None else (1e-3 if alpha >= 1 else 1e-2)
        res.checks.append(Check.le("closed-form error", "harmonic extension r^alpha cos(alpha phi)",
                                   "max error over vertices", err, tol))


def _run_npc(cfg, res: ExperimentResult):
    p = cfg["parameters"]
    rng = np.random.default_rng(cfg["seed"])
    factories = {"euclidean3": lambda: Euclidean(3), "hyperbolic": HyperbolicPlane, "tripod": tripod}
    rows = []
    n = int(p["n_quadruples"])
    if n <= 0:
        raise ConfigError("n_quadruples must be positive")
    for name in p["targets"]:
        if name not in factories:
            raise ConfigError(f"unknown npc-check target {name!r}")
        tgt = factories[name]()
        P, Q, R, S = (tgt.random_points(rng, n, p["scale"]) for _ in range(4))
        resid = npc_quadruple_residuals(tgt, P, Q, R, S)
        rows.extend((name, i, r) for i, r in enumerate(resid))
        res.checks.append(Check.ge(f"quadruple inequality [{name}]", "NPC quadruple comparison",
                                   "min residual", float(resid.min()), -p["tol"]))
    line = Euclidean(1)
    pts = [np.array([[v]]) for v in (0.0, 1.0, 3.0, 4.0)]
    eq = float(npc_quadruple_residuals(line, *pts)[0])
    res.checks.append(Check.le("collinear equality", "quadruple comparison on a line", "|lhs - rhs|", abs(eq), 1e-12))
    res.tables["npc_residuals.csv"] = (("target", "index", "residual"), rows)


def _linear_map(a):
    a = np.asarray(a, dtype=float)

    def make(mesh):
        return scalar_map(mesh, mesh.xy() @ a)
    return make


def _run_energy(cfg, res: ExperimentResult):
    p = cfg["parameters"]
    dom = cfg["domain"]
    if abs(_total_angle(dom) - 2 * math.pi) > 1e-12:
        raise ConfigError("energy-convergence uses the flat disk (angle_pi = 2)")
    levels = [int(v) for v in p["levels"]]
    meshes = [_build_domain(dom, level=L) for L in levels]
    a = np.asarray(p["gradient"], dtype=float)
    make = _linear_map(a)
    rows = density_convergence_study(meshes, make, 2.0, lambda h: p["eps_factor"] * h, p["subdomain_radius"], 0)
    res.tables["energy_convergence.csv"] = (
        ("level", "h", "eps", "l1_gap", "energy", "relative_gap", "mean_value_ratio", "mean_value_ratio_spread"),
        [(levels[r.level], r.h, r.eps, r.l1_gap, r.energy, r.relative_gap, r.mean_value_ratio, r.mean_value_ratio_spread)
         for r in rows])
    gaps = [r.l1_gap for r in rows]
    growth = max((b - a_ for a_, b in zip(gaps, gaps[1:])), default=0.0)
    res.checks.append(Check.le("L1 gap monotone", "approximating density converges to the energy density",
                               "largest increase of the L1 gap between levels", growth, 0.0))
    res.checks.append(Check.le("L1 gap at finest level", "approximating density converges to the energy density",
                               "relative L1 gap", rows[-1].relative_gap, p["gap_tol"]))
    res.checks.append(Check.le("mean-value ratio", "ball integral of d^2 against c/(n+2) |grad u|^2 eps^(n+2)",
                               "|median ratio - 1|", abs(rows[-1].mean_value_ratio - 1.0), p["ratio_tol"]))
    fine = meshes[-1]
    u = make(fine)
    e_eps = approx_energy_density(fine, u, 2.0, p["eps_factor"] * fine.spacing, fine.apex)
    a2 = float(a @ a)
    res.checks.append(Check.le("energy normalization", "c_{2,2} = pi", "|e_eps(0) / |a|^2 - 1|",
                               abs(e_eps / a2 - 1.0), p["normalization_tol"]))
    total, _ = graph_dirichlet_energy(fine, u)
    res.checks.append(Check.le("cotangent exactness", "graph energy of a linear map equals |a|^2 area",
                               "relative error", abs(total / (a2 * fine.total_area) - 1.0), p["graph_energy_tol"]))


def _center(mesh):
    return mesh.apex


def _run_regularity(cfg, res: ExperimentResult):
    p = cfg["parameters"]
    mesh = _build_domain(cfg["domain"])
    target = _build_target(cfg["target"])
    data, _ = _boundary(cfg["boundary"], mesh, target)
    state, rep = _solve(mesh, target, data, {**p, "max_iter": 100000}, cfg["seed"])
    if not rep.converged:
        raise RuntimeError("solver did not converge")
    q = _center(mesh)
    R = float(p["R"])
    h = mesh.spacing
    rho = p["inner_radius"] if p["inner_radius"] is not None else max(R / 16.0, 4 * h)
    report = main_theorem_ratio(mesh, state, q, R, inner_radius=rho)
    dist_q = mesh.distances_from(q)
    verts = np.flatnonzero((dist_q < R) & ~mesh.boundary)
    lip = lipschitz_field(mesh, state, verts, p["probe_factor"] * h)
    _, g = graph_dirichlet_energy(mesh, state)
    dens = g.density[verts]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dens > 1e-12, lip**2 / dens, np.nan)
    res.tables["regularity.csv"] = (("vertex", "r", "phi", "lip", "density", "ratio"),
                                    [(int(v), mesh.r[v], mesh.phi[v], l_, d_, r_) for v, l_, d_, r_ in zip(verts, lip, dens, ratio)])
    radii = p["holder_radii"] or list(np.geomspace(max(2.5 * h, 0.05), 0.5 * mesh.radius, 6))
    fit = holder_exponent_fit(mesh, state, q, radii)
    rng = np.random.default_rng(cfg["seed"])
    probes = target.random_points(rng, int(p["n_probes"]), 1.0) if not isinstance(target, Euclidean) else \
        rng.uniform(state.values.min(), state.values.max(), size=(int(p["n_probes"]), target.point_dim))
    comp = composition_inequality_residual(mesh, state, probes, n_pairs=int(p["n_pairs"]), seed=cfg["seed"], c_h=p["c_h"])
    res.checks.append(Check.le("product subharmonicity", "d(u(x),u(y)) is a sub-solution on the product",
                               "violation fraction", comp.product_violation_fraction, p["violation_tol"]))
    res.checks.append(Check.le("squared distance subharmonicity", "L f_P^2 >= 2 e at interior vertices",
                               "violation fraction", comp.probe_violation_fraction, p["violation_tol"]))
    mv = {}
    if mesh.curvature_is_bounded():
        geom = mesh.comparison_geometry()
        for k, P in enumerate(probes[:1]):
            mv[k] = mean_value_residual(mesh, geom, q, p["mean_value_radii"], state=state, probe=P).tolist()
    res.info.update(
        lipschitz_ratio=report.lipschitz_ratio, numerator=report.numerator, denominator=report.denominator,
        inner_radius=rho, holder_alpha=fit.alpha if fit.defined else None, holder_fit_residual=fit.residual,
        lip_sq_over_density=lip_density_constant(mesh, state, q, min(6 * R, mesh.radius)),
        composition_solver_residual=comp.solver_residual, map_mean_value_residuals=mv, curvature=str(mesh.curvature_bound),
    )


def _run_sharpness(cfg, res: ExperimentResult):
    p = cfg["parameters"]
    dom = cfg["domain"]
    if "mesh_file" in dom:
        raise ConfigError("sharpness builds its own cones")
    rows, hrows = [], []
    for ang in p["angles_pi"]:
        theta = float(ang) * math.pi
        alpha = 2 * math.pi / theta
        ratios = []
        for L in p["levels"]:
            mesh = _build_domain(dom, level=int(L), angle=theta)
            data = np.cos(alpha * mesh.phi[mesh.boundary_vertices])[:, None]
            state, rep = _solve(mesh, Euclidean(1), data, p, cfg["seed"])
            rr = main_theorem_ratio(mesh, state, mesh.apex, p["R"], inner_radius=p["inner_radius"])
            ratios.append(rr.lipschitz_ratio)
            rows.append((ang, int(L), mesh.spacing, rr.lipschitz_ratio, rr.numerator, rr.denominator))
        fit = holder_exponent_fit(mesh, state, mesh.apex, p["holder_radii"])
        hrows.extend((ang, r, o) for r, o in zip(fit.radii, fit.osc))
        htol = 0.05 if math.isclose(alpha, 1.0) else (0.07 if alpha < 1 else 0.1)
        res.checks.append(Check.le(f"Hoelder exponent [angle {ang} pi]", "r^alpha cos(alpha phi) at the apex",
                                   "|alpha_fit - 2pi/theta|", abs(fit.alpha - alpha), htol))
        if theta > 2 * math.pi + 1e-12:
            growth = min(b / a for a, b in zip(ratios, ratios[1:]))
            res.checks.append(Check.ge(f"ratio divergence [angle {ang} pi]", "Lipschitz bound fails without a lower curvature bound",
                                       "min growth factor per refinement", growth, p["growth_min"]))
        else:
            res.checks.append(Check.le(f"ratio bounded [angle {ang} pi]", "interior Lipschitz estimate",
                                       "max/min ratio over levels", max(ratios) / min(ratios), p["bounded_factor"]))
    res.tables["sharpness.csv"] = (("angle_pi", "level", "h", "ratio", "numerator", "denominator"), rows)
    res.tables["holder_fit.csv"] = (("angle_pi", "radius", "osc"), hrows)


def _run_hopf_lax(cfg, res: ExperimentResult):
    p = cfg["parameters"]
    dom = cfg["domain"]
    target = _build_target(cfg["target"])
    lam = np.round(np.arange(0.0, 1.0 + 1e-12, p["dlambda"]), 12)
    if lam[-1] != 1.0:
        raise ConfigError("dlambda must divide 1")
    levels = [int(v) for v in p["levels"]]
    ss_fraction = {}
    for L in levels:
        mesh = _build_domain(dom, level=L)
        data, _ = _boundary(cfg["boundary"], mesh, target)
        state, _ = _solve(mesh, target, data, p, cfg["seed"])
        inner = np.flatnonzero(mesh.distances_from(mesh.apex) <= p["inner_radius"])
        finest = L == levels[-1]
        for k in p["k"]:
            consts = hopf_lax_constants(mesh, state, None, inner, k)
            t = p["t_fraction"] * consts.t0
            fld = compute_hopf_lax(mesh, state, t, lam, None, inner, k=k)
            fracs = [supersolution_residual(mesh, fld, l_, c=p["c"]).violation_fraction for l_ in p["supersolution_lambdas"]]
            ss_fraction[(L, k)] = max(fracs)
            if not finest:
                continue
            rep = hopf_lax_property_residuals(fld, state)
            for st in rep.stats:
                res.checks.append(Check.le(f"{st.name} [k={k:g}]", st.anchor, "violations", st.violations, 0))
            if k == p["k"][0]:
                res.tables["hopf_lax_field.csv"] = (("vertex", "lambda", "f", "L", "argmin_size"), hopf_lax_rows(fld))
            res.checks.append(Check.le(f"super-solution [k={k:g}]", "f_t is a super-solution of the Poisson equation",
                                       "violation fraction at the finest level", ss_fraction[(L, k)], p["supersolution_tol"]))
            res.info[f"k={k:g}"] = {"t": t, "t0": consts.t0, "C_star": consts.C_star, "mean_L": float(fld.L.mean())}
        if finest:
            rng = np.random.default_rng(cfg["seed"])
            cand = np.flatnonzero((mesh.r < p["probe_radius"]) & ~mesh.boundary)
            xs = np.sort(rng.choice(cand, int(p["n_probes"]), replace=False))
            k0 = p["k"][0]
            c0 = hopf_lax_constants(mesh, state, None, xs, k0)
            t = p["t_fraction"] * c0.t0
            td = time_derivative_residual(mesh, state, xs, 0.5, t, [t / 2, t / 4, t / 8], omega2=xs, k=k0)
            res.checks.append(Check.ge("time-derivative bound", "forward t-difference of v <= Lip^2 u + |grad+ v|^2",
                                       "fraction of probes within tolerance", td.passed_fraction(), p["probe_pass_fraction"]))
    for k in p["k"]:
        seq = [ss_fraction[(L, k)] for L in levels]
        res.checks.append(Check.le(f"super-solution trend [k={k:g}]", "violation fraction decreases with h",
                                   "largest increase between levels", max((b - a for a, b in zip(seq, seq[1:])), default=0.0), 0.0))
    res.tables["supersolution_trend.csv"] = (("level", "k", "violation_fraction"),
                                             [(L, k, ss_fraction[(L, k)]) for L in levels for k in p["k"]])


_RUNNERS = {
    "solve": _run_solve, "npc-check": _run_npc, "energy-convergence": _run_energy,
    "regularity": _run_regularity, "sharpness": _run_sharpness, "hopf-lax": _run_hopf_lax,
}


def run_experiment(config: dict, kind: str | None = None, base_dir: Path | None = None) -> ExperimentResult:
    """Validate ``config`` and execute its pipeline; nothing is written to disk."""
    cfg = validate_config(config, kind, base_dir)
    res = ExperimentResult(cfg["kind"], cfg)
    start = time.perf_counter()
    _RUNNERS[cfg["kind"]](cfg, res)
    res.wall_time = time.perf_counter() - start
    return res


def _versions() -> dict:
    return {"conelab": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def emit_report(res: ExperimentResult, fmt: str, out_dir) -> list[Path]:
    """Write ``res`` as CSV tables (plus mesh/map documents) or as ``summary.json``."""
    out = Path(out_dir)
    if not res.checks:
        raise ConfigError("no checks to report")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        for name, (header, rows) in sorted(res.tables.items()):
            write_csv(out / name, header, rows)
            written.append(out / name)
        for name, writer in sorted(res.documents.items()):
            writer(out / name)
            written.append(out / name)
    elif fmt == "summary":
        doc = {
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "wall_time_s": res.wall_time,
            "versions": _versions(),
            "config": res.config,
            "status": res.status,
            "checks": [asdict(c) for c in res.checks],
            "info": res.info,
            "files": sorted(list(res.tables) + list(res.documents)),
        }
        path = out / "summary.json"
        path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
        written.append(path)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return written


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="conelab", description="Harmonic maps on singular cones: solve and verify.")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", type=Path, help="JSON experiment configuration")
    parser.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (computations run single-threaded)")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            try:
                config = json.loads(args.config.read_text())
            except FileNotFoundError as exc:
                raise ConfigError(f"config not found: {args.config}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
            base = args.config.parent
        else:
            config, base = {}, Path(".")
        if args.seed is not None:
            config = {**config, "seed": args.seed}
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        res = run_experiment(config, args.kind, base)
    except ValueError as exc:  # ConfigError and violated preconditions (DomainError, ParameterError, ...)
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit_report(res, "csv", args.out)
        emit_report(res, "summary", args.out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in res.checks:
        verdict = "PASS" if c.passed else "FAIL"
        print(f"{verdict}  {c.name}: {c.statistic} = {c.value:.6g} (needs {c.relation} {c.tolerance:.3g}; {c.anchor})")
    if res.status != EXIT_PASS:
        failed = [c for c in res.checks if not c.passed]
        print(f"failed: {', '.join(c.anchor for c in failed)}", file=sys.stderr)
    return res.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
