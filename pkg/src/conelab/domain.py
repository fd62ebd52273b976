"""Discrete metric-measure domains: flat disks and two-dimensional metric cones.

A cone of total angle ``theta`` is stored in its polar chart ``(r, phi)`` with
``0 <= phi < theta``; the seam ``phi = 0 ~ phi = theta`` is glued.  Every
triangle of the mesh is flat, so cotangent weights and Heron areas are exact
per triangle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.special import gamma

__all__ = [
    "UNBOUNDED_BELOW",
    "ConeSpec",
    "DomainMesh",
    "ComparisonGeometry",
    "DomainError",
    "build_cone_mesh",
    "geodesic_distance",
    "metric_ball",
    "comparison_sphere_area",
    "sphere_volume",
]

UNBOUNDED_BELOW = "unbounded-below"


class DomainError(ValueError):
    """Invalid cone parameters, out-of-domain point or resolution problem on a mesh."""


@dataclass(frozen=True)
class ConeSpec:
    total_angle: float
    radius: float = 1.0
    refinement_level: int = 0
    base_rings: int = 6

    def __post_init__(self):
        if not self.total_angle > 0:
            raise DomainError(f"total_angle must be > 0, got {self.total_angle}")
        if not self.radius > 0:
            raise DomainError(f"radius must be > 0, got {self.radius}")
        if self.refinement_level < 0 or int(self.refinement_level) != self.refinement_level:
            raise DomainError("refinement_level must be a nonnegative integer")
        if self.base_rings < 1:
            raise DomainError("base_rings must be >= 1")

    @property
    def n_rings(self) -> int:
        return self.base_rings * 2 ** int(self.refinement_level)

    @property
    def spacing(self) -> float:
        return self.radius / self.n_rings

    def refined(self, level: int) -> "ConeSpec":
        return ConeSpec(self.total_angle, self.radius, level, self.base_rings)


def sphere_volume(n: int) -> float:
    """omega_{n-1}: the (n-1)-volume of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


@dataclass(frozen=True)
class ComparisonGeometry:
    """Model space of constant curvature ``k <= 0`` and dimension ``n``."""

    k: float
    n: int = 2

    def __post_init__(self):
        if self.k == UNBOUNDED_BELOW or self.k is None:
            raise DomainError("comparison geometry needs a finite curvature bound")
        if self.k > 0:
            raise DomainError(f"unsupported curvature k={self.k} > 0")

    def s_k(self, t):
        t = np.asarray(t, dtype=float)
        if self.k == 0:
            return t
        a = math.sqrt(-self.k)
        return np.sinh(a * t) / a

    @property
    def omega(self) -> float:
        return sphere_volume(self.n)


def comparison_sphere_area(geom: ComparisonGeometry, R: float) -> float:
    """Area of the radius-``R`` sphere in the model space: ``omega_{n-1} s_k(R)^{n-1}``."""
    if not R > 0:
        raise DomainError("R must be positive")
    return float(geom.omega * geom.s_k(R) ** (geom.n - 1))


@dataclass(eq=False)
class DomainMesh:
    """Triangulated metric-measure domain.

    Treated as immutable after construction; derived structures (Laplacian,
    padded neighbor tables, vertex coloring) are cached on first use.
    """

    r: np.ndarray
    phi: np.ndarray
    edges: np.ndarray  # (E, 2) int, i < j
    weights: np.ndarray  # cotangent weights
    lengths: np.ndarray
    measure: np.ndarray
    boundary: np.ndarray  # bool mask
    curvature_bound: float | str = 0.0
    dimension: int = 2
    total_angle: float | None = None
    triangles: np.ndarray | None = None
    spacing: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float)
        self.lengths = np.asarray(self.lengths, dtype=float)
        self.measure = np.asarray(self.measure, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        if self.triangles is not None:
            self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.spacing is None:
            self.spacing = float(self.lengths.max()) if len(self.lengths) else 0.0

    @property
    def n_vertices(self) -> int:
        return len(self.r)

    @property
    def is_cone(self) -> bool:
        return self.total_angle is not None

    @property
    def radius(self) -> float:
        return float(self.r.max())

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def total_area(self) -> float:
        return float(self.measure.sum())

    @property
    def apex(self) -> int:
        return int(np.argmin(self.r))

    def comparison_geometry(self, k: float | None = None) -> ComparisonGeometry:
        k = self.curvature_bound if k is None else k
        if k == UNBOUNDED_BELOW:
            raise DomainError("domain curvature is unbounded below; no comparison geometry")
        return ComparisonGeometry(float(k), self.dimension)

    def xy(self) -> np.ndarray:
        """Planar development of the chart; exact only when ``total_angle == 2*pi``."""
        return np.column_stack([self.r * np.cos(self.phi), self.r * np.sin(self.phi)])

    # --- graph structure -------------------------------------------------

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Weighted graph Laplacian ``(L f)(x) = sum_y w_xy (f(y) - f(x))``."""
        i, j = self.edges.T
        n = self.n_vertices
        W = sp.coo_matrix((np.r_[self.weights, self.weights], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
        return (W - sp.diags(np.asarray(W.sum(axis=1)).ravel())).tocsr()

    @cached_property
    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(nbr, w)`` arrays of shape ``(N, max_degree)``; padding has index 0, weight 0."""
        n = self.n_vertices
        i, j = self.edges.T
        src = np.r_[i, j]
        dst = np.r_[j, i]
        w = np.r_[self.weights, self.weights]
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        deg = np.bincount(src, minlength=n)
        kmax = int(deg.max()) if n else 0
        start = np.r_[0, np.cumsum(deg)[:-1]]
        slot = np.arange(len(src)) - start[src]
        nbr = np.zeros((n, kmax), dtype=np.int64)
        ww = np.zeros((n, kmax))
        nbr[src, slot] = dst
        ww[src, slot] = w
        return nbr, ww

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)

    @cached_property
    def interior_colors(self) -> list[np.ndarray]:
        """Greedy coloring of interior vertices in index order; no edge joins two vertices of one color."""
        color = np.full(self.n_vertices, -1, dtype=np.int64)
        for v in self.interior:
            used = {int(color[u]) for u in self._adjacent(v)}
            c = 0
            while c in used:
                c += 1
            color[v] = c
        return [np.flatnonzero(color == c) for c in range(int(color.max()) + 1)] if self.interior.size else []

    def _adjacent(self, v: int) -> np.ndarray:
        nbr, _ = self.neighbor_table
        return nbr[v, : self.degree[v]]

    def neighbors(self, v: int) -> np.ndarray:
        return self._adjacent(v).copy()

    # --- metric ----------------------------------------------------------

    def _resolve(self, x):
        """Vertex index or chart point ``(r, phi)`` -> (r, phi) arrays."""
        if np.ndim(x) == 0:
            v = int(x)
            if not 0 <= v < self.n_vertices:
                raise DomainError(f"vertex {v} out of range")
            return self.r[v], self.phi[v]
        r, phi = float(x[0]), float(x[1])
        if r < 0 or r > self.radius * (1 + 1e-12):
            raise DomainError(f"chart point radius {r} outside [0, {self.radius}]")
        if self.is_cone:
            phi = phi % self.total_angle
        return r, phi

    def cone_distance(self, r1, phi1, r2, phi2):
        """Exact intrinsic distance on the cone; broadcasts."""
        theta = self.total_angle
        dphi = np.abs(np.asarray(phi1) - np.asarray(phi2)) % theta
        delta = np.minimum(dphi, theta - dphi)
        r1 = np.asarray(r1, dtype=float)
        r2 = np.asarray(r2, dtype=float)
        chord2 = r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * np.cos(np.minimum(delta, math.pi))
        d = np.sqrt(np.maximum(chord2, 0.0))
        return np.where(delta < math.pi, d, r1 + r2)

    @cached_property
    def _graph(self) -> sp.csr_matrix:
        i, j = self.edges.T
        n = self.n_vertices
        return sp.coo_matrix((self.lengths, (i, j)), shape=(n, n)).tocsr()

    def distances_from(self, x, targets: np.ndarray | None = None) -> np.ndarray:
        """Distances from ``x`` (vertex or chart point) to ``targets`` (default: all vertices)."""
        idx = np.arange(self.n_vertices) if targets is None else np.asarray(targets)
        if self.is_cone:
            r0, p0 = self._resolve(x)
            return self.cone_distance(r0, p0, self.r[idx], self.phi[idx])
        if np.ndim(x) != 0:
            raise DomainError("chart points need a cone chart; pass a vertex index")
        d = dijkstra(self._graph, directed=False, indices=int(x))
        return d[idx]

    def graph_distances_from(self, v: int) -> np.ndarray:
        return dijkstra(self._graph, directed=False, indices=int(v))

    def pairwise_distances(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a)
        b = np.asarray(b)
        if self.is_cone:
            return self.cone_distance(self.r[a][:, None], self.phi[a][:, None], self.r[b][None, :], self.phi[b][None, :])
        d = dijkstra(self._graph, directed=False, indices=a)
        return d[:, b]

    def ball(self, x, eps: float) -> np.ndarray:
        """Vertex indices within open distance ``eps`` of ``x``, sorted."""
        return np.flatnonzero(self.distances_from(x) < eps)

    def sphere_length(self, x, R: float) -> float | None:
        """Exact (n-1)-area of the distance sphere of radius R around ``x`` when the chart knows it."""
        if not self.is_cone:
            return None
        r0, _ = self._resolve(x)
        if math.isclose(self.total_angle, 2.0 * math.pi):
            return 2.0 * math.pi * R
        if r0 == 0.0:
            return self.total_angle * R
        if R < r0 and self.total_angle >= math.pi:
            return 2.0 * math.pi * R
        return None

    def curvature_is_bounded(self) -> bool:
        return self.curvature_bound != UNBOUNDED_BELOW

    def euler_characteristic(self) -> int:
        if self.triangles is None:
            raise DomainError("mesh has no triangle list")
        return self.n_vertices - len(self.edges) + len(self.triangles)

    def is_connected(self, vertices: np.ndarray | None = None) -> bool:
        g = self._graph
        if vertices is not None:
            vertices = np.asarray(vertices)
            g = g[vertices][:, vertices]
        ncomp, _ = connected_components(g, directed=False)
        return ncomp == 1


# --- construction ------------------------------------------------------------


def _ring_sizes(theta: float, n_rings: int) -> list[int]:
    floor = max(3, math.ceil(theta / math.pi) + 1)
    return [1] + [max(floor, int(round(theta * i))) for i in range(1, n_rings + 1)]


def _zipper(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate the strip between two closed rings with uniform angular spacing."""
    na, nb = len(a), len(b)
    tris = []
    i = j = 0
    while i < na or j < nb:
        # compare the angular fraction of the next vertex on each ring
        advance_a = j == nb or (i < na and (i + 1) * nb <= (j + 1) * na)
        if advance_a:
            tris.append((a[i % na], a[(i + 1) % na], b[j % nb]))
            i += 1
        else:
            tris.append((a[i % na], b[(j + 1) % nb], b[j % nb]))
            j += 1
    return tris


def _tri_geometry(lengths: np.ndarray):
    """Areas and cotangents of the angle opposite each side for triangles with side lengths (T, 3)."""
    la, lb, lc = lengths.T
    s = 0.5 * (la + lb + lc)
    area = np.sqrt(np.maximum(s * (s - la) * (s - lb) * (s - lc), 0.0))
    # cot of angle opposite side a: (b^2 + c^2 - a^2) / (4 * area)
    cot = np.column_stack([
        (lb**2 + lc**2 - la**2),
        (la**2 + lc**2 - lb**2),
        (la**2 + lb**2 - lc**2),
    ]) / (4.0 * area[:, None])
    return area, cot


def _side_lengths(tris: np.ndarray, r: np.ndarray, phi: np.ndarray, theta: float) -> np.ndarray:
    # side k is opposite vertex k
    dist = lambda u, v: _cone_chord(r[u], phi[u], r[v], phi[v], theta)  # noqa: E731
    return np.column_stack([dist(tris[:, 1], tris[:, 2]), dist(tris[:, 2], tris[:, 0]), dist(tris[:, 0], tris[:, 1])])


def _cone_chord(r1, p1, r2, p2, theta):
    dphi = np.abs(p1 - p2) % theta
    delta = np.minimum(dphi, theta - dphi)
    return np.sqrt(np.maximum(r1 * r1 + r2 * r2 - 2 * r1 * r2 * np.cos(delta), 0.0))


def _delaunay_flip(tris: np.ndarray, r, phi, theta, max_passes: int = 50) -> np.ndarray:
    """Lawson flips until every interior edge has nonnegative cotangent weight."""
    tris = [tuple(int(v) for v in t) for t in tris]
    for _ in range(max_passes):
        arr = np.array(tris)
        area, cot = _tri_geometry(_side_lengths(arr, r, phi, theta))
        edge_map: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for t, tri in enumerate(tris):
            for k in range(3):
                u, v = tri[(k + 1) % 3], tri[(k + 2) % 3]
                edge_map.setdefault((min(u, v), max(u, v)), []).append((t, k))
        flipped = False
        touched: set[int] = set()
        for (u, v), faces in edge_map.items():
            if len(faces) != 2:
                continue
            (t1, k1), (t2, k2) = faces
            if t1 in touched or t2 in touched:
                continue
            if cot[t1, k1] + cot[t2, k2] >= -1e-12:
                continue
            a = tris[t1][k1]
            b = tris[t2][k2]
            # keep orientation of t1: (a, u', v') -> (a, u', b), (a, b, v')
            tri1 = tris[t1]
            up, vp = tri1[(k1 + 1) % 3], tri1[(k1 + 2) % 3]
            tris[t1] = (a, up, b)
            tris[t2] = (a, b, vp)
            touched.update((t1, t2))
            flipped = True
        if not flipped:
            break
    return np.array(tris, dtype=np.int64)


def build_cone_mesh(spec: ConeSpec) -> DomainMesh:
    """Radial-angular triangulation of the cone of total angle ``spec.total_angle``.

    Rings sit at radii ``i*h``; ring ``i`` carries about ``theta*i`` equally
    spaced vertices so cells are near-isotropic, and the apex is joined to the
    first ring by a triangle fan.  Non-Delaunay edges are flipped so all
    cotangent weights are nonnegative.
    """
    theta = float(spec.total_angle)
    n_rings = spec.n_rings
    h = spec.spacing
    sizes = _ring_sizes(theta, n_rings)
    r_list, phi_list, rings = [], [], []
    offset = 0
    for i, m in enumerate(sizes):
        idx = np.arange(offset, offset + m)
        rings.append(idx)
        r_list.append(np.full(m, i * h))
        phi_list.append(np.arange(m) * (theta / m) if i else np.zeros(1))
        offset += m
    r = np.concatenate(r_list)
    r[rings[-1]] = spec.radius
    phi = np.concatenate(phi_list)

    tris: list[tuple[int, int, int]] = []
    ring1 = rings[1]
    for j in range(len(ring1)):
        tris.append((0, int(ring1[j]), int(ring1[(j + 1) % len(ring1)])))
    for i in range(1, n_rings):
        tris.extend(_zipper(rings[i], rings[i + 1]))
    tri_arr = _delaunay_flip(np.array(tris, dtype=np.int64), r, phi, theta)

    side = _side_lengths(tri_arr, r, phi, theta)
    area, cot = _tri_geometry(side)
    if np.any(area <= 0):
        raise DomainError("degenerate triangle in cone mesh")

    n = len(r)
    measure = np.bincount(tri_arr.ravel(), weights=np.repeat(area / 3.0, 3), minlength=n)

    # accumulate half-cotangents per undirected edge
    eu = np.concatenate([tri_arr[:, 1], tri_arr[:, 2], tri_arr[:, 0]])
    ev = np.concatenate([tri_arr[:, 2], tri_arr[:, 0], tri_arr[:, 1]])
    half_cot = 0.5 * np.concatenate([cot[:, 0], cot[:, 1], cot[:, 2]])
    lo, hi = np.minimum(eu, ev), np.maximum(eu, ev)
    key = lo * n + hi
    uniq, inv = np.unique(key, return_inverse=True)
    weights = np.bincount(inv, weights=half_cot)
    edges = np.column_stack([uniq // n, uniq % n])
    lengths = _cone_chord(r[edges[:, 0]], phi[edges[:, 0]], r[edges[:, 1]], phi[edges[:, 1]], theta)
    weights = np.where(np.abs(weights) < 1e-10, 0.0, weights)

    boundary = np.zeros(n, dtype=bool)
    boundary[rings[-1]] = True
    curvature = 0.0 if theta <= 2 * math.pi + 1e-12 else UNBOUNDED_BELOW
    return DomainMesh(
        r=r, phi=phi, edges=edges, weights=weights, lengths=lengths, measure=measure,
        boundary=boundary, curvature_bound=curvature, dimension=2, total_angle=theta,
        triangles=tri_arr, spacing=h,
        meta={"radius": spec.radius, "refinement_level": spec.refinement_level, "base_rings": spec.base_rings},
    )


def geodesic_distance(domain: DomainMesh, x, y) -> float:
    """Distance between two vertices or chart points; shortest path for non-cone meshes."""
    if domain.is_cone:
        r1, p1 = domain._resolve(x)
        r2, p2 = domain._resolve(y)
        return float(domain.cone_distance(r1, p1, r2, p2))
    if np.ndim(x) != 0 or np.ndim(y) != 0:
        raise DomainError("non-cone meshes accept vertex indices only")
    return float(domain.distances_from(int(x), np.array([int(y)]))[0])


def metric_ball(domain: DomainMesh, x, eps: float) -> list[tuple[int, float]]:
    """Vertices ``y`` with ``|xy| < eps`` paired with their measure, in index order."""
    if not eps > 0:
        raise DomainError("ball radius must be positive")
    if domain.spacing and eps < domain.spacing:
        warnings.warn(f"ball radius {eps:g} below mesh spacing {domain.spacing:g}", stacklevel=2)
    idx = domain.ball(x, eps)
    return [(int(v), float(domain.measure[v])) for v in idx]
