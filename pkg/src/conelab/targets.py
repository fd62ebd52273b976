"""NPC target spaces: Euclidean space, the hyperbolic plane, and metric trees.

Points are plain float arrays so that the solver can work on whole batches:

* ``Euclidean(m)``: shape ``(m,)``
* ``HyperbolicPlane``: hyperboloid coordinates ``(x0, x1, x2)`` with
  ``x0^2 - x1^2 - x2^2 = 1`` and ``x0 > 0``
* ``MetricTree``: ``(edge_index, offset)`` with the offset measured from the
  edge's first endpoint

All distance/geodesic methods broadcast over leading axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

__all__ = [
    "TargetError",
    "Euclidean",
    "HyperbolicPlane",
    "MetricTree",
    "QuadrupleResidual",
    "distance",
    "geodesic_point",
    "weighted_barycenter",
    "sturm_barycenter",
    "npc_quadruple_residual",
    "tripod",
    "target_from_dict",
]


class TargetError(ValueError):
    pass


class _Target:
    kind: str
    point_dim: int
    # True when the local energy sum_i w_i d^2(q, P_i) is an exact quadratic
    # along the relaxation path, so over-relaxation needs no safeguard.
    quadratic_relaxation = False

    def check_point(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if P.shape[-1:] != (self.point_dim,):
            raise TypeError(f"{self.kind} target expects points with last axis {self.point_dim}, got shape {P.shape}")
        return P

    def sq_distance(self, P, Q):
        return self.distance(P, Q) ** 2

    def local_energy(self, q, pts, w):
        """``sum_k w_k d^2(q, pts_k)`` for q ``(B, d)``, pts ``(B, K, d)``, w ``(B, K)``."""
        return np.sum(w * self.sq_distance(q[:, None, :], pts), axis=1)

    def relax(self, q, b, omega):
        """Point at ``omega`` times the way from ``q`` to ``b`` along the geodesic through both."""
        raise NotImplementedError

    def random_points(self, rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Euclidean(_Target):
    dim: int = 1
    kind = "euclidean"
    quadratic_relaxation = True

    @property
    def point_dim(self) -> int:
        return self.dim

    def distance(self, P, Q):
        return np.linalg.norm(np.asarray(P, dtype=float) - np.asarray(Q, dtype=float), axis=-1)

    def sq_distance(self, P, Q):
        diff = np.asarray(P, dtype=float) - np.asarray(Q, dtype=float)
        return np.sum(diff * diff, axis=-1)

    def geodesic(self, P, Q, s):
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        s = np.asarray(s, dtype=float)[..., None]
        return P + s * (Q - P)

    def barycenter_batch(self, pts, w, init=None, tol=1e-12):
        W = w.sum(axis=1)
        return np.einsum("bk,bkd->bd", w, pts) / W[:, None]

    def relax(self, q, b, omega):
        return q + omega * (b - q)

    def random_points(self, rng, n, scale=1.0):
        return rng.uniform(-scale, scale, size=(n, self.dim))

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}


def _mink(x, y):
    return -x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] + x[..., 2] * y[..., 2]


@dataclass(frozen=True)
class HyperbolicPlane(_Target):
    """Hyperboloid model of H^2 (curvature -1)."""

    kind = "hyperbolic_plane"
    point_dim = 3

    @staticmethod
    def normalize(x):
        x = np.array(x, dtype=float, copy=True)
        x[..., 0] = np.sqrt(1.0 + x[..., 1] ** 2 + x[..., 2] ** 2)
        return x

    def check_point(self, P):
        P = super().check_point(P)
        if np.any(np.abs(_mink(P, P) + 1.0) > 1e-8 * np.maximum(1.0, P[..., 0] ** 2)) or np.any(P[..., 0] <= 0):
            raise TypeError("point is not on the upper sheet of the hyperboloid")
        return P

    @staticmethod
    def from_polar(rho, psi):
        rho = np.asarray(rho, dtype=float)
        psi = np.asarray(psi, dtype=float)
        return np.stack([np.cosh(rho), np.sinh(rho) * np.cos(psi), np.sinh(rho) * np.sin(psi)], axis=-1)

    def distance(self, P, Q):
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        diff = P - Q
        # chordal Minkowski norm is stable for nearby points: d = 2 asinh(|P-Q|_M / 2)
        q = np.maximum(_mink(diff, diff), 0.0)
        return 2.0 * np.arcsinh(0.5 * np.sqrt(q))

    def log(self, P, Q):
        """Tangent vector at P pointing to Q with length d(P, Q)."""
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        d = self.distance(P, Q)
        c = -_mink(P, Q)
        v = Q - c[..., None] * P
        with np.errstate(invalid="ignore", divide="ignore"):
            fac = np.where(d > 1e-300, d / np.sinh(np.where(d > 0, d, 1.0)), 1.0)
        return fac[..., None] * v

    def exp(self, P, v):
        P = np.asarray(P, dtype=float)
        v = np.asarray(v, dtype=float)
        n = np.sqrt(np.maximum(_mink(v, v), 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(n > 1e-300, np.sinh(n) / np.where(n > 0, n, 1.0), 1.0)
        return self.normalize(np.cosh(n)[..., None] * P + sinc[..., None] * v)

    def geodesic(self, P, Q, s):
        s = np.asarray(s, dtype=float)[..., None]
        return self.exp(P, s * self.log(P, Q))

    def barycenter_batch(self, pts, w, init=None, tol=1e-13, max_iter=200):
        W = w.sum(axis=1)
        q = pts[:, 0, :].copy() if init is None else np.array(init, dtype=float)
        for _ in range(max_iter):
            step = np.einsum("bk,bkd->bd", w, self.log(q[:, None, :], pts)) / W[:, None]
            q = self.exp(q, step)
            if np.max(np.sqrt(np.maximum(_mink(step, step), 0.0)), initial=0.0) < tol:
                break
        return q

    def relax(self, q, b, omega):
        return self.exp(q, omega * self.log(q, b))

    def random_points(self, rng, n, scale=1.0):
        rho = scale * np.sqrt(rng.uniform(0, 1, n))
        psi = rng.uniform(0, 2 * math.pi, n)
        return self.from_polar(rho, psi)


class MetricTree(_Target):
    """Finite metric tree with positive edge lengths.

    ``edges`` is a sequence of ``(a, b, length)`` node pairs; an edge's index in
    this sequence is its identifier.  A point ``(e, s)`` lies at distance ``s``
    from node ``a`` of edge ``e``.
    """

    kind = "metric_tree"
    point_dim = 2

    def __init__(self, n_nodes: int, edges):
        edges = [(int(a), int(b), float(length)) for a, b, length in edges]
        if len(edges) != n_nodes - 1:
            raise TargetError("a tree on n nodes has n-1 edges")
        if any(length <= 0 for _, _, length in edges):
            raise TargetError("tree edge lengths must be positive")
        self.n_nodes = int(n_nodes)
        self.edge_list = edges
        self.a = np.array([e[0] for e in edges], dtype=np.int64)
        self.b = np.array([e[1] for e in edges], dtype=np.int64)
        self.length = np.array([e[2] for e in edges])
        g = coo_matrix((self.length, (self.a, self.b)), shape=(n_nodes, n_nodes)).tocsr()
        if connected_components(g, directed=False)[0] != 1:
            raise TargetError("tree is not connected")
        self.node_dist, self._pred = shortest_path(g, directed=False, return_predecessors=True)
        self._edge_of = {}
        for k, (a, b, _) in enumerate(edges):
            self._edge_of[(a, b)] = self._edge_of[(b, a)] = k

    def __eq__(self, other):
        return isinstance(other, MetricTree) and self.n_nodes == other.n_nodes and self.edge_list == other.edge_list

    def __hash__(self):
        return hash((self.n_nodes, tuple(self.edge_list)))

    def __repr__(self):
        return f"MetricTree(n_nodes={self.n_nodes}, edges={self.edge_list})"

    def to_dict(self):
        return {"kind": self.kind, "nodes": self.n_nodes, "edges": [[k, a, b, ln] for k, (a, b, ln) in enumerate(self.edge_list)]}

    def check_point(self, P):
        P = super().check_point(P)
        e = P[..., 0]
        if np.any(e != np.round(e)) or np.any(e < 0) or np.any(e >= len(self.edge_list)):
            raise TypeError("tree point has an invalid edge identifier")
        ln = self.length[e.astype(np.int64)]
        if np.any(P[..., 1] < -1e-12) or np.any(P[..., 1] > ln + 1e-12):
            raise TypeError("tree point offset outside its edge")
        return P

    def point(self, edge: int, offset: float) -> np.ndarray:
        return self.check_point(np.array([edge, offset], dtype=float))

    def node_point(self, node: int) -> np.ndarray:
        k = int(np.flatnonzero((self.a == node) | (self.b == node))[0])
        return np.array([k, 0.0 if self.a[k] == node else self.length[k]])

    def _split(self, P):
        P = np.asarray(P, dtype=float)
        e = P[..., 0].astype(np.int64)
        return e, P[..., 1]

    def dist_to_nodes(self, P, nodes):
        """Distance from tree points ``P`` to nodes (broadcast)."""
        e, s = self._split(P)
        a, b, ln = self.a[e], self.b[e], self.length[e]
        return np.minimum(s + self.node_dist[a, nodes], (ln - s) + self.node_dist[b, nodes])

    def distance(self, P, Q):
        ep, sp_ = self._split(P)
        eq, sq = self._split(Q)
        ep, sp_, eq, sq = np.broadcast_arrays(ep, sp_, eq, sq)
        lp, lq = self.length[ep], self.length[eq]
        ap, bp, aq, bq = self.a[ep], self.b[ep], self.a[eq], self.b[eq]
        D = self.node_dist
        via = np.minimum.reduce([
            sp_ + D[ap, aq] + sq,
            sp_ + D[ap, bq] + (lq - sq),
            (lp - sp_) + D[bp, aq] + sq,
            (lp - sp_) + D[bp, bq] + (lq - sq),
        ])
        return np.where(ep == eq, np.abs(sp_ - sq), via)

    def geodesic(self, P, Q, s):
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        s = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(P.shape[:-1], Q.shape[:-1], s.shape)
        Pb = np.broadcast_to(P, shape + (2,)).reshape(-1, 2)
        Qb = np.broadcast_to(Q, shape + (2,)).reshape(-1, 2)
        sb = np.broadcast_to(s, shape).ravel()
        out = np.array([self._geodesic1(p, q, t) for p, q, t in zip(Pb, Qb, sb)]).reshape(shape + (2,))
        return out

    def _node_path(self, u: int, v: int) -> list[int]:
        path = [v]
        while path[-1] != u:
            path.append(int(self._pred[u, path[-1]]))
        return path[::-1]

    def _geodesic1(self, P, Q, t):
        ep, sp_ = int(P[0]), float(P[1])
        eq, sq = int(Q[0]), float(Q[1])
        if ep == eq:
            return np.array([ep, sp_ + t * (sq - sp_)])
        total = float(self.distance(P, Q))
        target = t * total
        lp, lq = self.length[ep], self.length[eq]
        best = None
        for up, dp in ((self.a[ep], sp_), (self.b[ep], lp - sp_)):
            for uq, dq in ((self.a[eq], sq), (self.b[eq], lq - sq)):
                cand = dp + self.node_dist[up, uq] + dq
                if best is None or cand < best[0] - 1e-15:
                    best = (cand, int(up), dp, int(uq))
        _, up, dp, uq = best
        # leg on P's edge
        if target <= dp:
            off = sp_ - target if up == self.a[ep] else sp_ + target
            return np.array([ep, off])
        walked = dp
        nodes = self._node_path(up, uq)
        for n0, n1 in zip(nodes[:-1], nodes[1:]):
            k = self._edge_of[(n0, n1)]
            ln = self.length[k]
            if target <= walked + ln:
                x = target - walked
                return np.array([k, x if self.a[k] == n0 else ln - x])
            walked += ln
        x = target - walked
        return np.array([eq, x if self.a[eq] == uq else lq - x])

    def barycenter_batch(self, pts, w, init=None, tol=0.0):
        """Exact minimizer of ``sum_k w_k d^2(q, pts_k)``.

        Restricted to one edge the objective is ``sum_k w_k (s - c_k)^2``: a point
        on the same edge contributes ``c = offset``, a point reached through node
        ``a`` contributes ``c = -d(P, a)`` and through node ``b`` ``c = len + d(P, b)``.
        The clipped minimizer on each edge is compared across edges.
        """
        B = pts.shape[0]
        W = w.sum(axis=1)
        ep, sp_ = self._split(pts)
        best_val = np.full(B, np.finfo(float).max)
        best = np.zeros((B, 2))
        for k in range(len(self.edge_list)):
            ln = self.length[k]
            da = self.dist_to_nodes(pts, self.a[k])
            db = self.dist_to_nodes(pts, self.b[k])
            c = np.where(ep == k, sp_, np.where(da <= db, -da, ln + db))
            s = np.clip(np.einsum("bk,bk->b", w, c) / W, 0.0, ln)
            val = np.einsum("bk,bk->b", w, (s[:, None] - c) ** 2)
            better = val < best_val - 1e-15 * np.maximum(1.0, np.abs(best_val))
            best_val = np.where(better, val, best_val)
            best[better, 0] = k
            best[better, 1] = s[better]
        return best

    def relax(self, q, b, omega):
        # over-relax only along a single edge, where the local energy is an exact quadratic
        same = q[:, 0] == b[:, 0]
        out = b.copy()
        ln = self.length[q[:, 0].astype(np.int64)]
        out[same, 1] = np.clip(q[same, 1] + omega * (b[same, 1] - q[same, 1]), 0.0, ln[same])
        return out

    def random_points(self, rng, n, scale=None):
        e = rng.integers(0, len(self.edge_list), size=n)
        s = rng.uniform(0, 1, size=n) * self.length[e]
        return np.column_stack([e.astype(float), s])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "MetricTree":
        return tree_from_dict(json.loads(Path(path).read_text()))


def tree_from_dict(doc: dict) -> MetricTree:
    edges = sorted(doc["edges"], key=lambda e: e[0])
    if [e[0] for e in edges] != list(range(len(edges))):
        raise TargetError("tree edge identifiers must be 0..E-1")
    return MetricTree(int(doc["nodes"]), [(a, b, ln) for _, a, b, ln in edges])


def tripod(leg: float = 1.0) -> MetricTree:
    """Star with center node 0 and three legs of length ``leg``; offsets measured from the center."""
    return MetricTree(4, [(0, 1, leg), (0, 2, leg), (0, 3, leg)])


def target_from_dict(doc: dict):
    kind = doc["kind"]
    if kind == "euclidean":
        return Euclidean(int(doc.get("dim", 1)))
    if kind == "hyperbolic_plane":
        return HyperbolicPlane()
    if kind == "metric_tree":
        if doc.get("preset") == "tripod":
            return tripod(float(doc.get("leg", 1.0)))
        return tree_from_dict(doc)
    raise TargetError(f"unknown target kind {kind!r}")


# --- module-level operations ---------------------------------------------------


def _same_kind(target, *points):
    return [target.check_point(P) for P in points]


def distance(target, P, Q) -> float:
    P, Q = _same_kind(target, P, Q)
    return float(target.distance(P, Q))


def geodesic_point(target, P, Q, s: float) -> np.ndarray:
    """Point at arclength ``s * d(P, Q)`` from ``P`` on the geodesic to ``Q``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"geodesic parameter {s} outside [0, 1]")
    P, Q = _same_kind(target, P, Q)
    return target.geodesic(P, Q, s)


def _objective(target, q, pts, w):
    return float(np.sum(w * target.sq_distance(q[None, :], pts)))


def weighted_barycenter(target, points, weights, tol: float = 1e-10) -> np.ndarray:
    """Minimizer of ``sum_i w_i d^2(q, P_i)``.

    Euclidean and tree targets are solved in closed form; the hyperbolic plane
    uses the fixed-point iteration ``q <- exp_q(sum w log_q P / W)`` started at
    the heaviest point.
    """
    pts = np.stack(_same_kind(target, *points))
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not w.sum() > 0:
        raise ValueError("degenerate input: all weights are zero")
    init = pts[int(np.argmax(w))][None, :]
    return target.barycenter_batch(pts[None], w[None], init=init, tol=min(tol, 1e-12))[0]


def sturm_barycenter(target, points, weights, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Cyclic pairwise geodesic averaging (inductive mean).

    Step ``j`` moves the running estimate toward ``P_{j mod m}`` by the fraction
    ``w_i / (accumulated weight)``.  Converges at a sublinear rate, so this is
    kept as an independent check rather than the solver's inner step.
    """
    pts = np.stack(_same_kind(target, *points))
    w = np.asarray(weights, dtype=float)
    if not w.sum() > 0:
        raise ValueError("degenerate input: all weights are zero")
    keep = w > 0
    pts, w = pts[keep], w[keep]
    q = pts[0].copy()
    acc = w[0]
    m = len(w)
    for j in range(1, max_iter):
        i = j % m
        acc += w[i]
        new = target.geodesic(q, pts[i], w[i] / acc)
        step = float(target.distance(q, new))
        q = new
        if j >= m and i == m - 1 and step < tol:
            break
    return q


@dataclass(frozen=True)
class QuadrupleResidual:
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs


def npc_quadruple_residual(target, P, Q, R, S) -> QuadrupleResidual:
    """Quadruple comparison ``(d_PS - d_QR) d_QR >= (d2_PQm - d2_PQ - d2_QmQ) + (d2_SQm - d2_SR - d2_QmR)``."""
    P, Q, R, S = _same_kind(target, P, Q, R, S)
    Qm = target.geodesic(Q, R, 0.5)
    d = target.distance
    dqr = float(d(Q, R))
    lhs = (float(d(P, S)) - dqr) * dqr
    rhs = (float(d(P, Qm)) ** 2 - float(d(P, Q)) ** 2 - float(d(Qm, Q)) ** 2) + (
        float(d(S, Qm)) ** 2 - float(d(S, R)) ** 2 - float(d(Qm, R)) ** 2
    )
    return QuadrupleResidual(lhs, rhs)


def npc_quadruple_residuals(target, P, Q, R, S) -> np.ndarray:
    """Vectorized residuals for batches of quadruples (arrays with leading batch axis)."""
    Qm = target.geodesic(Q, R, np.full(len(Q), 0.5))
    d = target.distance
    dqr = d(Q, R)
    lhs = (d(P, S) - dqr) * dqr
    rhs = (d(P, Qm) ** 2 - d(P, Q) ** 2 - d(Qm, Q) ** 2) + (d(S, Qm) ** 2 - d(S, R) ** 2 - d(Qm, R) ** 2)
    return lhs - rhs
