import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conelab import UNBOUNDED_BELOW, ComparisonGeometry, ConeSpec, DomainError, build_cone_mesh, comparison_sphere_area
from conelab.domain import geodesic_distance, metric_ball, sphere_volume

from .conftest import cone


@pytest.mark.parametrize("angle_pi", [1, 2, 3])
@pytest.mark.parametrize("level", [0, 1, 2])
def test_mesh_is_a_disk(angle_pi, level):
    m = cone(angle_pi, level)
    V, E, F = m.n_vertices, len(m.edges), len(m.triangles)
    assert V - E + F == 1
    assert m.is_connected()
    assert m.boundary.sum() > 0 and not m.boundary[m.apex]


@pytest.mark.parametrize("angle_pi", [1, 2, 3])
def test_area_converges_to_sector_area(angle_pi):
    exact = angle_pi * math.pi / 2
    errs = [abs(cone(angle_pi, L).total_area - exact) / exact for L in (0, 1, 2, 3)]
    assert errs[-1] < 1e-3
    assert errs[-1] < errs[0]


def test_cotangent_laplacian_annihilates_linear_functions_on_flat_disk():
    m = cone(2, 2)
    for f in (m.xy()[:, 0], m.xy()[:, 1], 2 * m.xy()[:, 0] - m.xy()[:, 1] + 3):
        Lf = m.laplacian @ f
        assert np.abs(Lf[m.interior]).max() < 1e-12


def test_laplacian_symmetric_with_zero_row_sums():
    m = cone(3, 1)
    L = m.laplacian
    assert abs(L - L.T).max() < 1e-15
    assert np.abs(np.asarray(L.sum(axis=1)).ravel()).max() < 1e-12


def test_curvature_flag():
    assert cone(1, 0).curvature_bound == 0.0
    assert cone(2, 0).curvature_bound == 0.0
    assert cone(3, 0).curvature_bound == UNBOUNDED_BELOW
    assert not cone(3, 0).curvature_is_bounded()
    with pytest.raises(DomainError):
        cone(3, 0).comparison_geometry()


def test_flat_distance_matches_planar_embedding():
    m = cone(2, 1)
    xy = m.xy()
    rng = np.random.default_rng(3)
    for x in rng.choice(m.n_vertices, 10, replace=False):
        d = m.distances_from(int(x))
        np.testing.assert_allclose(d, np.linalg.norm(xy - xy[x], axis=1), atol=1e-12)


def test_cone_distance_through_apex_when_angle_exceeds_pi():
    m = cone(3, 0)
    # angular separation 1.5 pi >= pi: shortest path runs through the apex
    assert geodesic_distance(m, (0.5, 0.0), (0.7, 1.5 * math.pi)) == pytest.approx(1.2)
    # separation pi/2: law of cosines in the development
    assert geodesic_distance(m, (1.0, 0.0), (1.0, 0.5 * math.pi)) == pytest.approx(math.sqrt(2))
    # the seam is glued: phi and phi + theta agree
    assert geodesic_distance(m, (0.4, 0.1), (0.4, 0.1 + 3 * math.pi)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("angle_pi", [1, 3])
def test_graph_distance_upper_bounds_exact_distance(angle_pi):
    m = cone(angle_pi, 2)
    for x in (m.apex, int(np.argmin(np.abs(m.r - 0.5)))):
        exact = m.distances_from(x)
        graph = m.graph_distances_from(x)
        assert np.all(graph >= exact - 1e-12)
        far = exact > 0.1
        # edge paths are longer than straight lines by a bounded factor
        assert np.max(graph[far] / exact[far]) < 1.5


@settings(max_examples=60, deadline=None)
@given(
    r=st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3),
    p=st.lists(st.floats(0.0, 3 * math.pi, exclude_max=True), min_size=3, max_size=3),
)
def test_cone_distance_is_a_metric(r, p):
    m = cone(3, 0)
    d = lambda i, j: geodesic_distance(m, (r[i], p[i]), (r[j], p[j]))  # noqa: E731
    assert d(0, 1) == pytest.approx(d(1, 0))
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12
    assert d(0, 0) == pytest.approx(0.0, abs=1e-7)


def test_ball_and_metric_ball():
    m = cone(2, 1)
    ball = metric_ball(m, m.apex, 0.3)
    assert [v for v, _ in ball] == list(m.ball(m.apex, 0.3))
    assert all(mu > 0 for _, mu in ball)
    with pytest.warns(UserWarning):
        metric_ball(m, m.apex, 0.5 * m.spacing)
    with pytest.raises(DomainError):
        metric_ball(m, m.apex, 0.0)
    with pytest.raises(DomainError):
        m.distances_from((1.5, 0.0))


def test_cone_spec_validation():
    with pytest.raises(DomainError):
        ConeSpec(0.0)
    with pytest.raises(DomainError):
        ConeSpec(math.pi, radius=-1.0)
    spec = ConeSpec(2 * math.pi, 1.0, 3)
    assert spec.spacing == pytest.approx(1 / 48)
    assert spec.refined(1).spacing == pytest.approx(1 / 12)


def test_refinement_halves_spacing():
    hs = [cone(2, L).spacing for L in (1, 2, 3)]
    assert hs[0] / hs[1] == pytest.approx(2) and hs[1] / hs[2] == pytest.approx(2)


def test_comparison_geometry():
    assert sphere_volume(2) == pytest.approx(2 * math.pi)
    assert sphere_volume(3) == pytest.approx(4 * math.pi)
    g0 = ComparisonGeometry(0.0, 2)
    assert comparison_sphere_area(g0, 0.3) == pytest.approx(2 * math.pi * 0.3)
    g1 = ComparisonGeometry(-1.0, 2)
    assert comparison_sphere_area(g1, 0.3) == pytest.approx(2 * math.pi * math.sinh(0.3))
    with pytest.raises(DomainError):
        ComparisonGeometry(1.0)
    with pytest.raises(DomainError):
        ComparisonGeometry(UNBOUNDED_BELOW)


def test_sphere_length():
    m = cone(3, 0)
    assert m.sphere_length(m.apex, 0.4) == pytest.approx(3 * math.pi * 0.4)
    x = int(np.argmin(np.abs(m.r - 0.5)))
    assert m.sphere_length(x, 0.2) == pytest.approx(2 * math.pi * 0.2)
    assert m.sphere_length(x, 0.7) is None
    flat = cone(2, 0)
    assert flat.sphere_length(1, 0.9) == pytest.approx(2 * math.pi * 0.9)


def test_no_warnings_on_build():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_cone_mesh(ConeSpec(2.5 * math.pi, 1.0, 1))
