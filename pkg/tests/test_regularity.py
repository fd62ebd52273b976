import math

import numpy as np
import pytest

from conelab import ComparisonGeometry, DomainError, scalar_map
from conelab.regularity import (
    ResolutionError,
    StaleInputError,
    barycenter_residual,
    composition_inequality_residual,
    holder_exponent_fit,
    lip_density_constant,
    main_theorem_ratio,
    mean_value_residual,
    pointwise_lipschitz,
)

from .conftest import cone, harmonic_scalar, harmonic_tripod

A = np.array([0.6, -0.8])


def linear(m):
    return scalar_map(m, m.xy() @ A)


def test_pointwise_lipschitz_of_linear_map():
    m = cone(2, 2)
    x = int(np.argmin(np.abs(m.r - 0.3)))
    prof = pointwise_lipschitz(m, linear(m), x, [0.3, 0.1, 2 * m.spacing])
    assert prof.radii == sorted(prof.radii, reverse=True)
    assert all(v <= 1.0 + 1e-12 for v in prof.profile)
    assert prof.value > 0.95
    with pytest.raises(ResolutionError):
        pointwise_lipschitz(m, linear(m), x, [0.1 * m.spacing])


@pytest.mark.parametrize("angle_pi,alpha", [(2, 1.0), (3, 2 / 3), (1, 2.0)])
def test_holder_fit_of_homogeneous_function(angle_pi, alpha):
    # osc over B_apex(r) of r^alpha cos(alpha phi) is 2 r^alpha when alpha * theta >= 2 pi
    m = cone(angle_pi, 2)
    u = scalar_map(m, m.r**alpha * np.cos(alpha * m.phi))
    fit = holder_exponent_fit(m, u, m.apex, [0.1, 0.2, 0.3, 0.5])
    assert fit.defined
    assert fit.alpha == pytest.approx(alpha, abs=0.03)


def test_holder_fit_constant_map_is_undefined():
    m = cone(2, 1)
    fit = holder_exponent_fit(m, scalar_map(m, np.ones(m.n_vertices)), m.apex, [0.2, 0.4])
    assert not fit.defined and math.isnan(fit.alpha)
    with pytest.raises(ValueError):
        holder_exponent_fit(m, scalar_map(m, np.ones(m.n_vertices)), m.apex, [0.2])


def test_main_theorem_ratio_linear_closed_form():
    # numerator |a|, energy density |a|^2, osc 2 R |a|: ratio 1 / (1 + 2R)
    m = cone(2, 3)
    R = 0.4
    rep = main_theorem_ratio(m, linear(m), m.apex, R, inner_radius=0.1)
    assert rep.lipschitz_ratio == pytest.approx(1 / (1 + 2 * R), rel=0.03)
    assert rep.denominator == pytest.approx(rep.numerator / rep.lipschitz_ratio)
    with pytest.raises(DomainError):
        main_theorem_ratio(m, linear(m), m.apex, 0.6)
    with pytest.raises(ResolutionError):
        main_theorem_ratio(m, linear(m), m.apex, 0.4, inner_radius=m.spacing)


def test_main_theorem_ratio_zero_map():
    m = cone(2, 1)
    rep = main_theorem_ratio(m, scalar_map(m, np.zeros(m.n_vertices)), m.apex, 0.4, inner_radius=0.3)
    assert rep.lipschitz_ratio == 0.0


def test_lip_density_constant_linear():
    m = cone(2, 2)
    c = lip_density_constant(m, linear(m), m.apex, 0.9)
    assert 0.8 < c < 1.5


def test_composition_on_solved_maps():
    for state, _ in (harmonic_scalar(2, 2), harmonic_tripod(1)):
        m = state.domain
        tgt = state.target
        probes = tgt.random_points(np.random.default_rng(0), 5, 1.0)
        rep = composition_inequality_residual(m, state, probes, n_pairs=3000)
        assert rep.product_violation_fraction == 0.0
        assert rep.probe_violation_fraction == 0.0
        assert rep.solver_residual < 1e-9


def test_composition_probe_identity_for_scalar_maps():
    # for real-valued u, L (u - P)^2 - sum w (du)^2 = 2 (u - P) L u
    state, _ = harmonic_scalar(2, 1)
    m = state.domain
    u = state.scalar()
    Lu = (m.laplacian @ u)[m.interior]
    rep = composition_inequality_residual(m, state, [[0.3], [-2.0]], n_pairs=100)
    for k, P in enumerate((0.3, -2.0)):
        expected = 2 * (u[m.interior] - P) * Lu / m.measure[m.interior]
        np.testing.assert_allclose(rep.probe_residual[k], expected, atol=1e-9)


def test_composition_rejects_unsolved_map():
    m = cone(2, 1)
    noisy = scalar_map(m, np.random.default_rng(1).normal(size=m.n_vertices))
    assert barycenter_residual(noisy).max() > 1e-3
    with pytest.raises(StaleInputError):
        composition_inequality_residual(m, noisy, [[0.0]])


def test_mean_value_equality_case_converges():
    geom = ComparisonGeometry(0.0, 2)
    worst = []
    for L in (1, 2, 3):
        m = cone(2, L)
        f = 1 - m.r**2
        res = mean_value_residual(m, geom, m.apex, [0.2, 0.4, 0.6], f=f, h=-4.0 * np.ones(m.n_vertices))
        worst.append(np.abs(res).max())
    assert worst[0] > worst[1] > worst[2]
    assert worst[2] < 5e-3


def test_mean_value_map_mode_linear():
    # for u = <a, x>: int_B (u(p)-P)^2 - (u(x)-P)^2 = -pi R^4 / 4, cancelled by e omega / 8 R^4
    geom = ComparisonGeometry(0.0, 2)
    radii = np.array([0.2, 0.3, 0.4])
    worst = []
    for L in (1, 4):
        m = cone(2, L)
        x = int(np.argmin(np.abs(m.r - 0.2)))
        res = mean_value_residual(m, geom, x, radii, state=linear(m), probe=[0.7])
        worst.append(np.max(np.abs(res) / (math.pi * radii**4 / 4)))
    assert worst[1] < 0.05 < worst[0]


def test_mean_value_errors():
    m = cone(2, 1)
    geom = ComparisonGeometry(0.0, 2)
    with pytest.raises(ValueError):
        mean_value_residual(m, geom, m.apex, [0.2])
    with pytest.raises(DomainError):
        mean_value_residual(m, geom, m.apex, [0.99], f=1 - m.r**2, h=-4.0)
