import math
import warnings

import numpy as np
import pytest

from conelab import DomainError, approx_energy_density, approx_energy_density_field, energy_constant, graph_dirichlet_energy, scalar_map
from conelab.energy import density_convergence_study, poincare_residual

from .conftest import cone

A = np.array([0.6, -0.8])  # |a| = 1


def linear(mesh, a=A):
    return scalar_map(mesh, mesh.xy() @ a)


@pytest.mark.parametrize(
    "n,p,expected",
    [(2, 2, math.pi), (3, 2, 4 * math.pi / 3), (4, 2, math.pi**2 / 2), (2, 1, 4.0), (3, 1, 2 * math.pi), (1, 2, 2.0)],
)
def test_energy_constant_closed_forms(n, p, expected):
    assert energy_constant(n, p) == pytest.approx(expected, rel=1e-10)


def test_energy_constant_monte_carlo():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(400_000, 3))
    x /= np.linalg.norm(x, axis=1)[:, None]
    estimate = 4 * math.pi * np.mean(np.abs(x[:, 0]) ** 3)
    assert energy_constant(3, 3) == pytest.approx(estimate, rel=5e-3)


def test_graph_energy_is_exact_for_linear_maps():
    m = cone(2, 2)
    E, dens = graph_dirichlet_energy(m, linear(m, 3 * A))
    assert E == pytest.approx(9.0 * m.total_area, rel=1e-10)
    # the per-vertex split is only approximate; the weighted total is exact
    assert np.sum(m.measure * dens.density) == pytest.approx(E, rel=1e-12)


def test_approx_density_of_linear_map():
    m = cone(2, 3)
    eps = 8 * m.spacing
    verts = np.flatnonzero(m.r < 1 - eps - m.spacing)[::25]
    fld = approx_energy_density_field(m, linear(m), 2.0, eps, verts)
    assert np.all(np.abs(fld.density - 1.0) < 0.05)
    assert not fld.near_boundary.any()


def test_constant_map_has_zero_energy():
    m = cone(3, 1)
    s = scalar_map(m, np.full(m.n_vertices, 2.5))
    assert graph_dirichlet_energy(m, s)[0] == 0.0
    assert approx_energy_density(m, s, 2.0, 4 * m.spacing, m.apex) == 0.0
    assert s.is_constant()


def test_density_is_local():
    m = cone(2, 2)
    s = linear(m)
    x = int(np.argmin(np.abs(m.r - 0.4)))
    eps = 4 * m.spacing
    before = approx_energy_density(m, s, 2.0, eps, x)
    far = m.distances_from(x) > eps + m.spacing
    vals = s.scalar().copy()
    vals[far] = np.random.default_rng(0).normal(size=far.sum())
    after = approx_energy_density(m, scalar_map(m, vals), 2.0, eps, x)
    assert after == before


def test_density_scales_quadratically():
    m = cone(1, 2)
    x = int(np.argmin(np.abs(m.r - 0.3)))
    s = scalar_map(m, np.sin(3 * m.r) * np.cos(m.phi))
    e1 = approx_energy_density(m, s, 2.0, 4 * m.spacing, x)
    e2 = approx_energy_density(m, scalar_map(m, 3.0 * s.scalar()), 2.0, 4 * m.spacing, x)
    assert e2 == pytest.approx(9.0 * e1, rel=1e-12)


def test_poincare_constant_for_linear_map():
    # double integral over B(r)^2 of <a, x - y>^2 is pi^2 r^6 / 2; energy on B(6r) is 36 pi r^2.
    # r sits halfway between rings so the lumped ball has area close to pi r^2.
    m = cone(2, 3)
    C = poincare_residual(m, linear(m), m.apex, 7.5 * m.spacing)
    assert C == pytest.approx(math.pi / 72, rel=0.05)


def test_errors_and_warnings():
    m = cone(2, 1)
    s = linear(m)
    with pytest.raises(ValueError):
        approx_energy_density(m, s, 2.0, 0.0, 0)
    with pytest.raises(ValueError):
        approx_energy_density(m, s, 0.5, 0.2, 0)
    with pytest.raises(DomainError):
        approx_energy_density(m, s, 2.0, 0.2, m.n_vertices)
    with pytest.warns(UserWarning):
        approx_energy_density(m, s, 2.0, 0.5 * m.spacing, 0)
    with pytest.raises(DomainError):
        poincare_residual(m, s, m.apex, 0.2)
    with pytest.raises(ValueError):
        density_convergence_study([m], linear, eps_schedule=lambda h: 2 * h)
    with pytest.raises(ValueError):
        density_convergence_study([m], linear, subdomain_radius=0.8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        approx_energy_density(m, s, 2.0, 2 * m.spacing, 0)


def test_convergence_study_on_linear_map():
    rows = density_convergence_study([cone(2, L) for L in (2, 3)], linear, subdomain_radius=0.3)
    gaps = [r.l1_gap for r in rows]
    assert gaps[1] <= gaps[0]
    assert rows[-1].relative_gap < 0.05
    assert abs(rows[-1].mean_value_ratio - 1.0) < 0.1
