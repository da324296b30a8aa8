"""Certified bracket estimation of the approximation moduli.

Every modulus here is a sup-inf: an outer supremum over almost-attaining
pairs of an inner infimum (distance to the nearest attaining pair).  For
polyhedral spaces the inner infimum is computed EXACTLY:

* functionals: attaining pairs decompose by faces of the unit ball; the
  per-face minimization splits into two independent convex distance
  problems (point to face, functional to conjugate face).
* operators from the two-dimensional taxicab space: an attaining operator
  either attains at a ball vertex (column pinned to the codomain sphere)
  or along a whole sphere edge (both columns pinned to one codomain
  facet), so the infimum is a finite minimum of closed forms and tiny
  convex programs.

The outer supremum is bracketed by Lipschitz certification: the objective
and the constraint are 1-Lipschitz, so either a covering net (functional
case) or adaptive branch-and-bound over chart boxes (operator case)
yields [lo, hi] with sup guaranteed inside.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .beta import BetaStructure
from .bounds import bound as bound_formula
from .bounds import psi_construction_coefficient
from .errors import (
    ConstructionError,
    InputError,
    RefusalError,
    UnsupportedDimensionError,
)
from .spaces import PolyhedralSpace

_STRICT_MARGIN = 1e-12


@dataclass(frozen=True)
class ModulusBracket:
    """Certified interval for a modulus value at one epsilon."""

    epsilon: float
    lo: float
    hi: float
    kind: str  # functional[-spherical] | operator[-spherical] | modified[-spherical]
    outer_mesh: float
    inner_mesh: float
    certified: bool
    stats: dict = field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= value <= self.hi + slack


@dataclass(frozen=True)
class SearchConfig:
    """Budget knobs for the outer search."""

    width_target: float = 0.05
    max_evals: int = 400_000
    time_budget_s: float = 240.0
    batch: int = 96
    outer_mesh: float = 0.02
    inner_tol: float = 1e-10
    seed: int = 0
    jobs: int = 1


# ---------------------------------------------------------------------------
# vectorized distances


def _batch_norm(fam, pts):
    return np.max(np.abs(pts @ fam.T), axis=-1)


def _batch_dist_segment(fam, pts, u, v, lo=0.0, hi=1.0):
    """Exact distance from each row of pts to {u + t(v-u): t in [lo,hi]}
    in the norm max_i |fam_i . |.  Piecewise-linear envelope minimization."""
    pts = np.atleast_2d(pts)
    n = pts.shape[0]
    consts = (pts - u) @ fam.T  # (n, m)
    slopes = -(fam @ (v - u))  # (m,)
    ds_same = slopes[:, None] - slopes[None, :]
    ds_opp = slopes[:, None] + slopes[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_same = (consts[:, None, :] - consts[:, :, None]) / ds_same[None, :, :]
        t_opp = -(consts[:, :, None] + consts[:, None, :]) / ds_opp[None, :, :]
    cands = np.concatenate(
        [t_same.reshape(n, -1), t_opp.reshape(n, -1),
         np.full((n, 1), lo), np.full((n, 1), hi)], axis=1)
    cands = np.clip(np.nan_to_num(cands, nan=lo, posinf=hi, neginf=lo), lo, hi)
    vals = np.max(
        np.abs(consts[:, None, :] + cands[:, :, None] * slopes[None, None, :]),
        axis=2)
    return np.min(vals, axis=1)


def _batch_dist_point(fam, pts, v):
    return _batch_norm(fam, np.atleast_2d(pts) - v)


def _batch_dist_hull(space, pts, verts):
    """Distance from many points to conv(verts); vectorized for <=2
    vertices, LP loop otherwise."""
    verts = np.atleast_2d(verts)
    if verts.shape[0] == 1:
        return _batch_dist_point(space.functionals, pts, verts[0])
    if verts.shape[0] == 2:
        return _batch_dist_segment(space.functionals, pts, verts[0], verts[1])
    from .spaces import dist_point_to_hull

    return np.array([dist_point_to_hull(space, p, verts) for p in np.atleast_2d(pts)])


def _batch_dist_ray(space, pts, gen):
    """Distance to {c * gen : c >= 0}."""
    pts = np.atleast_2d(pts)
    gn = space.norm(gen)
    if gn <= 1e-14:
        return _batch_norm(space.functionals, pts)
    hi = float(2.0 * np.max(_batch_norm(space.functionals, pts)) / gn + 1.0)
    return _batch_dist_segment(space.functionals, pts, np.zeros_like(gen),
                               hi * np.asarray(gen, float))


def _batch_dist_cone(space, pts, gens):
    """Distance to the nonnegative span of gens (free-scaling attainment).

    dim-2 wedges resolve到 membership plus two ray distances; anything
    larger falls back to one LP per point."""
    gens = np.atleast_2d(gens)
    pts = np.atleast_2d(pts)
    if gens.shape[0] == 1:
        return _batch_dist_ray(space, pts, gens[0])
    if gens.shape[0] == 2 and space.dim == 2:
        mat = np.column_stack([gens[0], gens[1]])
        det = float(np.linalg.det(mat))
        d1 = _batch_dist_ray(space, pts, gens[0])
        d2 = _batch_dist_ray(space, pts, gens[1])
        out = np.minimum(d1, d2)
        if abs(det) > 1e-12:
            nus = pts @ np.linalg.inv(mat).T
            inside = np.all(nus >= -1e-12, axis=1)
            out = np.where(inside, 0.0, out)
        return out
    from .spaces import dist_point_to_cone

    return np.array([dist_point_to_cone(space, p, gens) for p in pts])


# ---------------------------------------------------------------------------
# functional-type engine (covers the functional moduli and 1-dim codomains)


def _face_tables(space, x_pts, f_pts, convention):
    """D1[i, F] = dist(x_i, face F); D2[j, F] = dist(f_j, admissible
    functionals of face F) under the attainment convention:
    'plus' y*(y)=1 unit, 'abs' |y*(y)|=1 unit, 'abs-free' |y*(y)|=||y*||."""
    dual = space.dual()
    faces = space.faces
    d1 = np.column_stack([
        _batch_dist_hull(space, x_pts, fc.vertices) for fc in faces])
    cols = []
    for fc in faces:
        conj = fc.conjugate_vertices
        if convention == "plus":
            cols.append(_batch_dist_hull(dual, f_pts, conj))
        elif convention == "abs":
            cols.append(np.minimum(
                _batch_dist_hull(dual, f_pts, conj),
                _batch_dist_hull(dual, f_pts, -conj)))
        elif convention == "abs-free":
            cols.append(np.minimum(
                _batch_dist_cone(dual, f_pts, conj),
                _batch_dist_cone(dual, f_pts, -conj)))
        else:
            raise InputError(f"unknown attainment convention {convention!r}")
    d2 = np.column_stack(cols)
    return d1, d2


def _pairwise_supremum(x_pts, f_pts, d1, d2, admissible, relaxed, chunk=256):
    """lo = max G over strictly admissible net pairs; raw_hi = max G over
    relaxed pairs (those a covering ball away from admissibility)."""
    lo = 0.0
    hi_raw = 0.0
    n = x_pts.shape[0]
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        g = np.min(
            np.maximum(d1[sl][:, None, :], d2[None, :, :]), axis=2)
        a = admissible[sl]
        r = relaxed[sl]
        if np.any(a):
            lo = max(lo, float(np.max(g[a])))
        if np.any(r):
            hi_raw = max(hi_raw, float(np.max(g[r])))
    return lo, hi_raw


def _eval_functional_pairs(space, xs, fs, convention):
    d1, d2 = _face_tables(space, np.atleast_2d(xs), np.atleast_2d(fs),
                          convention)
    return np.min(np.maximum(d1, d2), axis=1)


def _functional_seeds(space, eps, convention, spherical):
    """Known near-extremal pairs, evaluated exactly to push lo up."""
    if space.dim != 2:
        return np.zeros((0, 2)), np.zeros((0, 2))
    ep = space.extreme_points
    is_l1 = (
        ep.shape[0] == 4
        and np.allclose(sorted(map(tuple, np.abs(ep).round(9))),
                        [(0.0, 1.0), (0.0, 1.0), (1.0, 0.0), (1.0, 0.0)])
    )
    if not is_l1:
        return np.zeros((0, 2)), np.zeros((0, 2))
    xs, fs = [], []
    for frac in (1 - 1e-9, 1 - 1e-6, 0.999, 0.99, 0.9, 0.75, 0.5):
        e0 = min(eps * frac, 0.4999)
        if convention == "abs-free":
            x = np.array([1 - np.sqrt(e0) / 2, np.sqrt(e0) / 2])
            f = np.array([1.0, 1.0 - 2 * np.sqrt(e0)])
        else:
            x = np.array([1 - np.sqrt(e0 / 2), np.sqrt(e0 / 2)])
            f = np.array([1.0, 1.0 - np.sqrt(2 * e0)])
        xs.append(x)
        fs.append(f)
    return np.array(xs), np.array(fs)


def _functional_bracket(space, eps, spherical, convention, mesh_x, mesh_f,
                        inner_tol=1e-10, kind="functional") -> ModulusBracket:
    if space.dim > 3:
        raise UnsupportedDimensionError("functional engine supports dim <= 3")
    dual = space.dual()
    x_pts = space.sphere_net(mesh_x) if spherical else space.ball_net(mesh_x)
    f_pts = dual.sphere_net(mesh_f) if spherical else dual.ball_net(mesh_f)
    vals = x_pts @ f_pts.T
    admissible = vals > 1.0 - eps + _STRICT_MARGIN
    slack = mesh_x + mesh_f
    relaxed = vals > 1.0 - eps - slack
    d1, d2 = _face_tables(space, x_pts, f_pts, convention)
    lo, hi_raw = _pairwise_supremum(x_pts, f_pts, d1, d2, admissible, relaxed)
    sx, sf = _functional_seeds(space, eps, convention, spherical)
    n_seeds = 0
    if sx.shape[0]:
        sv = np.einsum("ij,ij->i", sx, sf)
        ok = (sv > 1.0 - eps + _STRICT_MARGIN)
        ok &= np.abs(space.norm_many(sx) - 1.0) <= 1e-9
        ok &= np.abs(dual.norm_many(sf) - 1.0) <= 1e-9
        if np.any(ok):
            g = _eval_functional_pairs(space, sx[ok], sf[ok], convention)
            lo = max(lo, float(np.max(g)))
            n_seeds = int(np.sum(ok))
    cap = 1.0 if convention == "abs-free" else 2.0
    hi = min(max(hi_raw + slack, lo), cap)
    return ModulusBracket(
        epsilon=eps, lo=lo, hi=hi, kind=kind,
        outer_mesh=max(mesh_x, mesh_f), inner_mesh=inner_tol, certified=True,
        stats={"net_x": len(x_pts), "net_f": len(f_pts), "seeds": n_seeds,
               "convention": convention},
    )


def functional_modulus(space: PolyhedralSpace, eps: float,
                       spherical: bool = True,
                       outer_mesh: float = 0.02,
                       inner_mesh: float = 1e-10) -> ModulusBracket:
    """Certified bracket for the functional modulus at eps in (0, 2).

    The inner infimum over attaining pairs is exact (face decomposition);
    the outer net carries Lipschitz slack outer_mesh per component.
    """
    if not 0.0 < eps < 2.0:
        raise InputError(f"eps must lie in (0,2), got {eps}")
    kind = "functional-spherical" if spherical else "functional"
    return _functional_bracket(space, eps, spherical, "plus",
                               outer_mesh, outer_mesh, inner_mesh, kind)


# ---------------------------------------------------------------------------
# exact inner infimum for operators from the 2-d taxicab domain


def _is_taxicab_2d(space) -> bool:
    if space.dim != 2 or space.extreme_points is None:
        return False
    want = {(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)}
    got = {tuple(np.round(v, 9) + 0.0) for v in space.extreme_points}
    return got == want


class _InnerL1:
    """Exact inf over attaining pairs (z, F) of max{||x-z||, ||T-F||} for
    T from l1^(2), decomposed by the attainment dichotomy: z at a ball
    vertex (one column pinned to S_Y) or F attaining along a sphere edge
    (both columns pinned to a common codomain facet)."""

    def __init__(self, codomain: PolyhedralSpace, kind: str = "pi"):
        if codomain.extreme_points is None or codomain.faces is None:
            raise UnsupportedDimensionError(
                f"codomain {codomain.name!r} lacks face data")
        self.Y = codomain
        self.kind = kind
        self.facets = [fc.vertices for fc in codomain.facets]
        # negation pairing: dist(-w, facet_j) = dist(w, facet_sigma(j))
        self.sigma = []
        for verts in self.facets:
            found = None
            for j2, other in enumerate(self.facets):
                if len(other) == len(verts):
                    a = sorted(map(tuple, np.round(-verts, 9)))
                    b = sorted(map(tuple, np.round(other, 9)))
                    if a == b:
                        found = j2
                        break
            if found is None:
                raise ConstructionError("ball facets are not sign-symmetric")
            self.sigma.append(found)
        self.sigma = np.array(self.sigma)
        self.dom_fam = np.array(
            [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
        self.e = np.eye(2)

    def facet_dists(self, ws):
        cols = [
            _batch_dist_hull(self.Y, ws, verts) for verts in self.facets
        ]
        return np.column_stack(cols)

    def _edge_dists(self, xs):
        """Distance of each x to the four sphere edges of the domain."""
        e1, e2 = self.e
        segs = [(e1, e2), (e1, -e2), (-e1, e2), (-e1, -e2)]
        return np.column_stack([
            _batch_dist_segment(self.dom_fam, xs, u, v) for u, v in segs
        ])

    def _facet_scaled_dists(self, w1s, w2s):
        """Modified mode: per facet, min over the scale c >= 0 and points
        of c*facet of max column distance.  One LP per (pair, facet)."""
        from scipy.optimize import linprog

        fam = self.Y.functionals
        m = fam.shape[0]
        n = w1s.shape[0]
        out = np.empty((n, len(self.facets)))
        for j, verts in enumerate(self.facets):
            k = verts.shape[0]
            fv = fam @ verts.T  # (m, k)
            # vars: mu1 (k), mu2 (k), t; constraints sum mu1 = sum mu2 (= c)
            a_eq = np.concatenate([np.ones(k), -np.ones(k), [0.0]])[None, :]
            bounds = [(0, None)] * (2 * k) + [(None, None)]
            cost = np.concatenate([np.zeros(2 * k), [1.0]])
            for i in range(n):
                f1 = fam @ w1s[i]
                f2 = fam @ w2s[i]
                a_ub = np.block([
                    [fv, np.zeros((m, k)), -np.ones((m, 1))],
                    [-fv, np.zeros((m, k)), -np.ones((m, 1))],
                    [np.zeros((m, k)), fv, -np.ones((m, 1))],
                    [np.zeros((m, k)), -fv, -np.ones((m, 1))],
                ])
                b_ub = np.concatenate([f1, -f1, f2, -f2])
                res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq,
                              b_eq=[0.0], bounds=bounds, method="highs")
                if not res.success:
                    raise ConstructionError(
                        f"scaled-facet LP failed: {res.message}")
                out[i, j] = res.x[-1]
        return out

    def evaluate(self, xs, w1s, w2s):
        """(G values, ||T x|| values) for batches of outer points."""
        xs = np.atleast_2d(xs)
        w1s = np.atleast_2d(w1s)
        w2s = np.atleast_2d(w2s)
        Y = self.Y
        n1 = Y.norm_many(w1s)
        n2 = Y.norm_many(w2s)
        xd = self._edge_dists(xs)  # (n, 4): [e1e2, e1-e2, -e1e2, -e1-e2]
        vx = np.abs(xs - self.e[0]).sum(axis=1)
        vx2 = np.abs(xs + self.e[0]).sum(axis=1)
        vy = np.abs(xs - self.e[1]).sum(axis=1)
        vy2 = np.abs(xs + self.e[1]).sum(axis=1)
        feas = Y.norm_many(xs[:, :1] * w1s + xs[:, 1:] * w2s)

        if self.kind == "pi":
            c1 = np.maximum(np.abs(1.0 - n1), np.maximum(n2 - 1.0, 0.0))
            c2 = np.maximum(np.abs(1.0 - n2), np.maximum(n1 - 1.0, 0.0))
            branch_a = np.min(np.column_stack([
                np.maximum(vx, c1), np.maximum(vx2, c1),
                np.maximum(vy, c2), np.maximum(vy2, c2),
            ]), axis=1)
            d1 = self.facet_dists(w1s)
            d2 = self.facet_dists(w2s)
            d1n = d1[:, self.sigma]
            d2n = d2[:, self.sigma]
            pairs = [
                (0, d1, d2), (1, d1, d2n), (2, d1n, d2), (3, d1n, d2n),
            ]
            branch_b = np.min(np.column_stack([
                np.maximum(xd[:, idx],
                           np.min(np.maximum(a, b), axis=1))
                for idx, a, b in pairs
            ]), axis=1)
            return np.minimum(branch_a, branch_b), feas

        # modified attainment: norms are free
        gap12 = np.maximum(n2 - n1, 0.0) / 2.0
        gap21 = np.maximum(n1 - n2, 0.0) / 2.0
        branch_a = np.min(np.column_stack([
            np.maximum(vx, gap12), np.maximum(vx2, gap12),
            np.maximum(vy, gap21), np.maximum(vy2, gap21),
        ]), axis=1)
        zero_branch = np.maximum(
            np.abs(1.0 - np.abs(xs).sum(axis=1)), np.maximum(n1, n2))
        # facets come in +- pairs, so flipping both columns hits the same
        # facet family: only two distinct scaled-distance batches needed
        min_same = np.min(self._facet_scaled_dists(w1s, w2s), axis=1)
        min_flip = np.min(self._facet_scaled_dists(w1s, -w2s), axis=1)
        branch_b = np.min(np.column_stack([
            np.maximum(xd[:, 0], min_same),
            np.maximum(xd[:, 1], min_flip),
            np.maximum(xd[:, 2], min_flip),
            np.maximum(xd[:, 3], min_same),
        ]), axis=1)
        g = np.minimum(np.minimum(branch_a, branch_b), zero_branch)
        return g, feas


# ---------------------------------------------------------------------------
# chart parametrization of the outer feasible set


@dataclass
class _Chart:
    cid: int
    lo: np.ndarray
    hi: np.ndarray
    x_factors: np.ndarray   # per-param contribution to ||dx||
    w1_factors: np.ndarray  # per-param contribution to ||dw1||
    w2_factors: np.ndarray


class _OperatorProblem:
    """Spherical/full outer set for operators from l1^(2), chartwise.

    Spherical charts: x = (1-d, d) on the fundamental edge; one column on
    a codomain facet (unit), the other a scaled facet point r*q(s).
    Full charts add radial scalings of x and both columns.
    """

    def __init__(self, inner: _InnerL1, spherical: bool):
        self.inner = inner
        self.spherical = spherical
        Y = inner.Y
        self.segments = []
        for verts in inner.facets:
            if verts.shape[0] != 2:
                raise UnsupportedDimensionError(
                    "branch-and-bound charts need segment facets (dim-2 "
                    "codomain); higher dimensions go through the heuristic")
            self.segments.append((verts[0], verts[1],
                                  Y.norm(verts[1] - verts[0])))
        # half of the facets modulo sign flip (w -> -w leaves G invariant)
        seen = set()
        self.half = []
        for j in range(len(self.segments)):
            if j not in seen:
                self.half.append(j)
                seen.add(j)
                seen.add(int(inner.sigma[j]))
        self.charts = []
        self._specs = {}
        cid = 0
        for swapped in (False, True):
            unit_range = self.half if not swapped else range(len(self.segments))
            scaled_range = range(len(self.segments)) if not swapped else self.half
            for j in unit_range:
                for k in scaled_range:
                    self.charts.append(self._make_chart(cid, j, k, swapped))
                    cid += 1

    def _make_chart(self, cid, j, k, swapped):
        lj = self.segments[j][2]
        lk = self.segments[k][2]
        if self.spherical:
            # params: delta, s_unit-column, s_scaled-column, r
            lo = np.zeros(4)
            hi = np.array([0.5, 1.0, 1.0, 1.0])
            xf = np.array([2.0, 0.0, 0.0, 0.0])
            if not swapped:
                w1f = np.array([0.0, lj, 0.0, 0.0])
                w2f = np.array([0.0, 0.0, lk, 1.0])
            else:
                w1f = np.array([0.0, lj, 0.0, 1.0])
                w2f = np.array([0.0, 0.0, lk, 0.0])
        else:
            # params: delta, t, s1, r1, s2, r2
            lo = np.zeros(6)
            hi = np.array([0.5, 1.0, 1.0, 1.0, 1.0, 1.0])
            xf = np.array([2.0, 1.0, 0.0, 0.0, 0.0, 0.0])
            w1f = np.array([0.0, 0.0, lj, 1.0, 0.0, 0.0])
            w2f = np.array([0.0, 0.0, 0.0, 0.0, lk, 1.0])
        self._specs[cid] = (j, k, swapped)
        return _Chart(cid, lo, hi, xf, w1f, w2f)

    def structural_ub(self, cid, blo, bhi):
        """Interval bound on sup G over the box from the vertex branch of
        the inner decomposition: G <= max(||x - e1||, |1 - ||col1|| |, ...),
        which depends only on delta and the radial scale."""
        _, _, swapped = self._specs[cid]
        kind = self.inner.kind
        if self.spherical:
            d_hi = bhi[0]
            r_lo = blo[3]
            xdist = 2.0 * d_hi
            if not swapped:
                return xdist  # unit first column: the e1 branch costs 2 delta
            gap = (1.0 - r_lo) if kind == "pi" else 0.5 * (1.0 - r_lo)
            return max(xdist, gap)
        d_hi, t_lo, t_hi = bhi[0], blo[1], bhi[1]
        r1_lo = blo[3]
        xdist = (1.0 - t_lo * (1.0 - d_hi)) + t_hi * d_hi
        gap = (1.0 - r1_lo) if kind == "pi" else 0.5 * (1.0 - r1_lo)
        return max(xdist, gap)

    def structural_feasible(self, cid, blo, bhi, eps):
        """False when ||T x|| <= 1 - eps across the whole box, by the
        triangle bound ||T x|| <= (1-delta)||col1|| + delta||col2||."""
        _, _, swapped = self._specs[cid]
        if self.spherical:
            d_lo, d_hi = blo[0], bhi[0]
            r_hi = bhi[3]
            if not swapped:
                cap = (1.0 - d_lo) + d_lo * r_hi
            else:
                cap = (1.0 - d_hi) * r_hi + d_hi
        else:
            d_lo, d_hi = blo[0], bhi[0]
            t_hi = bhi[1]
            r1_hi, r2_hi = bhi[3], bhi[5]
            cap = t_hi * max(
                (1.0 - d_lo) * r1_hi + d_lo * r2_hi,
                (1.0 - d_hi) * r1_hi + d_hi * r2_hi,
            )
        return cap > 1.0 - eps + _STRICT_MARGIN

    def materialize(self, cid, params):
        """params (n, ndim) -> (xs, w1s, w2s)."""
        j, k, swapped = self._specs[cid]
        u1, v1, _ = self.segments[j]
        u2, v2, _ = self.segments[k]
        p = np.atleast_2d(params)
        if self.spherical:
            delta, s1, s2, r = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
            xs = np.column_stack([1.0 - delta, delta])
            q1 = u1 + s1[:, None] * (v1 - u1)
            q2 = u2 + s2[:, None] * (v2 - u2)
            if not swapped:
                return xs, q1, r[:, None] * q2
            return xs, r[:, None] * q1, q2
        delta, t, s1, r1, s2, r2 = (p[:, i] for i in range(6))
        xs = t[:, None] * np.column_stack([1.0 - delta, delta])
        q1 = u1 + s1[:, None] * (v1 - u1)
        q2 = u2 + s2[:, None] * (v2 - u2)
        return xs, r1[:, None] * q1, r2[:, None] * q2


# ---------------------------------------------------------------------------
# branch-and-bound over chart boxes


@dataclass
class _Box:
    cid: int
    lo: np.ndarray
    hi: np.ndarray
    value: float
    r_x: float
    r_t: float

    @property
    def radius(self):
        return max(self.r_x, self.r_t)

    @property
    def ub(self):
        return self.value + self.radius


def _box_radii(chart, lo, hi):
    hw = 0.5 * (hi - lo)
    r_x = float(chart.x_factors @ hw)
    r_t = float(max(chart.w1_factors @ hw, chart.w2_factors @ hw))
    return r_x, r_t


def _bb_supremum(problem, eps, cfg: SearchConfig, seeds=None):
    """Branch-and-bound sup of G over the feasible charts.

    Returns (lo, hi, stats).  lo comes from exact evaluations at feasible
    points (strictly inside the constraint); hi = max over surviving boxes
    of value + Lipschitz radius, a true upper bound for the supremum.
    """
    inner = problem.inner
    lo = 0.0
    evals = 0
    t0 = time.monotonic()

    if seeds is not None and len(seeds[0]):
        xs, w1s, w2s = seeds
        g, feas = inner.evaluate(xs, w1s, w2s)
        nx = np.abs(xs).sum(axis=1)
        nt = np.maximum(inner.Y.norm_many(w1s), inner.Y.norm_many(w2s))
        ok = feas > 1.0 - eps + _STRICT_MARGIN
        if problem.spherical:
            ok &= (np.abs(nx - 1.0) <= 1e-9) & (np.abs(nt - 1.0) <= 1e-9)
        else:
            ok &= (nx <= 1.0 + 1e-9) & (nt <= 1.0 + 1e-9)
        if np.any(ok):
            lo = max(lo, float(np.max(g[ok])))
        evals += len(xs)

    heap = []
    counter = itertools.count()

    def push_boxes(boxes):
        nonlocal lo, evals
        params = []
        metas = []
        for cid, blo, bhi in boxes:
            params.append(0.5 * (blo + bhi))
            metas.append((cid, blo, bhi))
        by_chart = {}
        for idx, (cid, blo, bhi) in enumerate(metas):
            by_chart.setdefault(cid, []).append(idx)
        values = np.empty(len(metas))
        feass = np.empty(len(metas))
        for cid, idxs in by_chart.items():
            pp = np.array([params[i] for i in idxs])
            xs, w1s, w2s = problem.materialize(cid, pp)
            g, feas = inner.evaluate(xs, w1s, w2s)
            values[idxs] = g
            feass[idxs] = feas
        evals += len(metas)
        for i, (cid, blo, bhi) in enumerate(metas):
            chart = problem.charts[cid]
            r_x, r_t = _box_radii(chart, blo, bhi)
            slack = r_x + r_t
            if feass[i] <= 1.0 - eps - slack:
                continue  # entire box infeasible (Lipschitz)
            if not problem.structural_feasible(cid, blo, bhi, eps):
                continue  # entire box infeasible (interval bound)
            if feass[i] > 1.0 - eps + _STRICT_MARGIN:
                lo = max(lo, float(values[i]))
            box = _Box(cid, blo, bhi, float(values[i]), r_x, r_t)
            ub = min(box.ub, problem.structural_ub(cid, blo, bhi))
            if ub > lo:
                heapq.heappush(heap, (-ub, next(counter), box))

    push_boxes([(c.cid, c.lo.copy(), c.hi.copy()) for c in problem.charts])

    while heap:
        top_ub = -heap[0][0]
        if top_ub <= lo + cfg.width_target:
            break
        if evals >= cfg.max_evals or time.monotonic() - t0 > cfg.time_budget_s:
            break
        wave = []
        while heap and len(wave) < cfg.batch:
            neg_ub, _, box = heapq.heappop(heap)
            if -neg_ub <= lo:
                continue
            wave.append(box)
        if not wave:
            break
        children = []
        for box in wave:
            chart = problem.charts[box.cid]
            hw = box.hi - box.lo
            scale = np.maximum.reduce([
                chart.x_factors * hw, chart.w1_factors * hw,
                chart.w2_factors * hw])
            dim = int(np.argmax(scale))
            mid = 0.5 * (box.lo[dim] + box.hi[dim])
            lo1, hi1 = box.lo.copy(), box.hi.copy()
            hi1[dim] = mid
            lo2, hi2 = box.lo.copy(), box.hi.copy()
            lo2[dim] = mid
            children.append((box.cid, lo1, hi1))
            children.append((box.cid, lo2, hi2))
        push_boxes(children)

    hi = lo
    if heap:
        hi = max(hi, -heap[0][0])
    stats = {
        "evals": evals,
        "boxes_left": len(heap),
        "elapsed_s": time.monotonic() - t0,
        "resolution": max((b.radius for _, _, b in heap), default=0.0),
    }
    return lo, hi, stats


# ---------------------------------------------------------------------------
# seed families (known near-extremal constructions)


def _operator_seeds(domain, codomain, beta, eps, kind, rng, spherical=True):
    """Outer pairs near the known lower-bound constructions, plus random
    feasible probes.  Returns (xs, w1s, w2s)."""
    xs, w1s, w2s = [], [], []
    fracs = (1 - 1e-9, 1 - 1e-6, 0.999, 0.99, 0.95, 0.9, 0.8, 0.6, 0.4)
    for frac in fracs:
        e0 = min(eps * frac, 0.4999)
        root = np.sqrt(2 * e0) if kind == "pi" else 2 * np.sqrt(e0)
        dx = np.sqrt(e0 / 2) if kind == "pi" else np.sqrt(e0) / 2
        for xi in codomain.extreme_points:
            xs.append([1 - dx, dx])
            w1s.append(xi)
            w2s.append((1 - root) * xi)
    rho_q = getattr(beta, "rho", None) if beta is not None else None
    if rho_q is not None and rho_q >= 0.5 and codomain.dim == 2:
        # hexagon-style corner construction
        bvert = None
        for v in codomain.extreme_points:
            if abs(v[0] - v[1]) < 1e-9 and v[0] > 0:
                bvert = v
        if bvert is not None:
            cap = (1 - rho_q) / (2 * rho_q)
            for frac in fracs:
                e0 = min(eps * frac, cap * (1 - 1e-9))
                q = np.sqrt(2 * rho_q * e0 / (1 - rho_q))
                if q >= 1:
                    continue
                dc = q / 2
                xs.append([1 - dc, dc])
                w1s.append(q * np.eye(2)[0] + (1 - q) * bvert)
                w2s.append(q * np.eye(2)[1] + (1 - q) * bvert)
    n_rand = 160
    re0 = rng.uniform(0.0, eps, n_rand)
    deltas = rng.uniform(0.0, 0.5, n_rand)
    sphere = codomain.random_sphere_points(2 * n_rand, rng)
    for i in range(n_rand):
        x = np.array([1 - deltas[i], deltas[i]])
        w1 = sphere[2 * i]
        w2 = sphere[2 * i + 1] * rng.uniform(0, 1) if not spherical else \
            sphere[2 * i + 1]
        # blend toward attainment at x to land inside the constraint
        lam = re0[i]
        w2b = (1 - lam) * w1 + lam * w2
        xs.append(x)
        w1s.append(w1)
        w2s.append(w2b / max(codomain.norm(w2b), 1.0))
    return np.array(xs), np.array(w1s), np.array(w2s)


# ---------------------------------------------------------------------------
# public operator moduli


def _resolve_beta(Y, beta):
    if isinstance(beta, BetaStructure):
        return beta
    if beta is None:
        from .zoo import canonical_beta

        try:
            return canonical_beta(Y)
        except InputError:
            return None
    return beta


def operator_modulus(X: PolyhedralSpace, Y: PolyhedralSpace, eps: float,
                     spherical: bool = True,
                     config: SearchConfig | None = None,
                     beta: BetaStructure | None = None,
                     allow_heuristic: bool = False) -> ModulusBracket:
    """Certified bracket for the operator modulus of the pair (X, Y).

    Certified mode needs X = l1^(2) (the attainment dichotomy driving the
    exact inner infimum) and codomain dim <= 2 for the chart search; a
    one-dimensional codomain routes through the functional engine with the
    |y*(y)| = 1 convention.  Anything else needs allow_heuristic=True and
    returns an uncertified bound-based bracket.
    """
    cfg = config or SearchConfig()
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0,1), got {eps}")
    kind = "operator-spherical" if spherical else "operator"
    if Y.dim == 1:
        mesh = cfg.outer_mesh
        br = _functional_bracket(X, eps, spherical, "abs", mesh, mesh,
                                 cfg.inner_tol, kind)
        return br
    if _is_taxicab_2d(X) and Y.dim == 2 and Y.extreme_points is not None:
        inner = _InnerL1(Y, kind="pi")
        problem = _OperatorProblem(inner, spherical)
        rng = np.random.default_rng(cfg.seed)
        seeds = _operator_seeds(X, Y, _resolve_beta(Y, beta), eps, "pi", rng,
                                spherical)
        lo, hi, stats = _bb_supremum(problem, eps, cfg, seeds)
        hi = min(max(hi, lo), 2.0)
        return ModulusBracket(
            epsilon=eps, lo=lo, hi=hi, kind=kind,
            outer_mesh=stats["resolution"], inner_mesh=cfg.inner_tol,
            certified=True, stats=stats,
        )
    if not allow_heuristic:
        raise RefusalError(
            "certified operator brackets need domain l1:2 and codomain of "
            "dimension <= 2 (or 1); pass allow_heuristic=True for an "
            "uncertified bound-based bracket",
        )
    return _heuristic_bracket(X, Y, eps, spherical, kind, beta)


def modified_modulus(X: PolyhedralSpace, Y: PolyhedralSpace, eps: float,
                     spherical: bool = True,
                     config: SearchConfig | None = None,
                     beta: BetaStructure | None = None,
                     allow_heuristic: bool = False) -> ModulusBracket:
    """Bracket for the modified modulus: the approximant only needs to
    attain its own norm (any positive scale; the zero operator attains
    everywhere)."""
    cfg = config or SearchConfig()
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0,1), got {eps}")
    kind = "modified-spherical" if spherical else "modified"
    if Y.dim == 1:
        mesh = cfg.outer_mesh
        return _functional_bracket(X, eps, spherical, "abs-free", mesh, mesh,
                                   cfg.inner_tol, kind)
    if _is_taxicab_2d(X) and Y.dim == 2 and Y.extreme_points is not None:
        inner = _InnerL1(Y, kind="modified")
        problem = _OperatorProblem(inner, spherical)
        rng = np.random.default_rng(cfg.seed)
        seeds = _operator_seeds(X, Y, _resolve_beta(Y, beta), eps, "modified",
                                rng, spherical)
        lo, hi, stats = _bb_supremum(problem, eps, cfg, seeds)
        hi = min(max(hi, lo), 1.0)
        return ModulusBracket(
            epsilon=eps, lo=lo, hi=hi, kind=kind,
            outer_mesh=stats["resolution"], inner_mesh=cfg.inner_tol,
            certified=True, stats=stats,
        )
    if not allow_heuristic:
        raise RefusalError(
            "certified modified brackets need domain l1:2 and codomain of "
            "dimension <= 2 (or 1); pass allow_heuristic=True",
        )
    return _heuristic_bracket(X, Y, eps, spherical, kind, beta)


def _heuristic_bracket(X, Y, eps, spherical, kind, beta):
    """Uncertified: lo = 0, hi = best applicable closed-form bound."""
    beta = _resolve_beta(Y, beta)
    cap = 1.0 if kind.startswith("modified") else 2.0
    his = [cap]
    if beta is not None:
        rho = beta.rho
        if kind.startswith("modified"):
            his.append(bound_formula("modified_upper", rho=rho, eps=eps).value)
        else:
            his.append(bound_formula("thm_beta_upper", rho=rho, eps=eps).value)
            if _is_taxicab_2d(X):
                his.append(bound_formula("thm_ell1_upper", rho=rho,
                                         eps=eps).value)
    return ModulusBracket(
        epsilon=eps, lo=0.0, hi=min(his), kind=kind,
        outer_mesh=float("nan"), inner_mesh=float("nan"), certified=False,
        stats={"heuristic": True},
    )


# ---------------------------------------------------------------------------
# derived experiments


def psi_ratio(X: PolyhedralSpace, Y: PolyhedralSpace, epsilons,
              config: SearchConfig | None = None,
              beta: BetaStructure | None = None):
    """Brackets of the normalized ratio modulus / sqrt(2 eps) along a
    decreasing epsilon grid, with the asymptotic-parameter bounds."""
    eps_list = list(epsilons)
    if any(e <= 0 or e > 0.1 for e in eps_list):
        raise InputError("psi_ratio expects epsilons in (0, 0.1]")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise InputError("psi_ratio expects a strictly decreasing grid")
    beta = _resolve_beta(Y, beta)
    rho = beta.rho if beta is not None else None
    rows = []
    for eps in eps_list:
        br = operator_modulus(X, Y, eps, spherical=True, config=config,
                              beta=beta)
        scale = np.sqrt(2 * eps)
        row = {
            "eps": eps,
            "bracket": br,
            "ratio_lo": br.lo / scale,
            "ratio_hi": br.hi / scale,
        }
        if rho is not None:
            row["psi_upper"] = np.sqrt((1 + rho) / (1 - rho))
            row["psi_lower"] = min(np.sqrt(2 * rho / (1 - rho)), 1.0)
        rows.append(row)
    return rows


@dataclass(frozen=True)
class PsiConstructionReport:
    n: int
    rho: float
    eps: float
    eps0: float
    theta: float
    k_cut: int
    t: float
    delta: float
    point_branch: float
    face_branch: float
    residual: float
    face_lp_dist: float
    coefficient: float
    ratio: float
    in_pi_s_eps: bool
    operator_norm: float
    tx_value: float


def psi_construction_experiment(n: int, rho: float, eps: float,
                                eps0: float | None = None,
                                delta: float | None = None
                                ) -> PsiConstructionReport:
    """Instantiate the sum-functional lower-bound construction on the pair
    (l1^(2), Z_rho^(n)) and verify its defining identities.

    The cut k is the nearest natural to n(1-rho)/2 + 1 (theta the rounding
    offset); delta solves 2 delta = 2 n rho (eps0/delta) / (n(1-rho)+2+2theta),
    which balances the vertex-approximation cost against the face-distance
    bound.  eps0 defaults to the largest admissible value <= 0.98 eps
    keeping the second column inside the unit ball (|t| <= 1).
    """
    from .zoo import make_z

    if n < 2:
        raise InputError("n must be >= 2")
    if not 1.0 / n <= rho < 1.0:
        raise InputError(f"need 1/n <= rho < 1, got rho={rho}")
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0,1), got {eps}")
    k_cut = int(np.floor(n * (1 - rho) / 2.0 + 1.0 + 0.5))
    theta = k_cut - (n * (1 - rho) / 2.0 + 1.0)
    dd = n * (1 - rho) + 2.0 + 2.0 * theta
    # t >= -1  <=>  2 sqrt(n rho eps0 dd) <= 4 + 4 theta
    eps0_cap = (4.0 + 4.0 * theta) ** 2 / (4.0 * n * rho * dd)
    if eps0 is None:
        eps0 = min(0.98 * eps, 0.95 * eps0_cap)
    if not 0.0 < eps0 < eps:
        raise InputError(f"need 0 < eps0 < eps, got eps0={eps0}")
    delta_eq = float(np.sqrt(n * rho * eps0 / dd))
    if delta is None:
        delta = delta_eq
    if not 0.0 < delta <= 0.5:
        raise InputError(f"delta = {delta:.6g} outside (0, 1/2]")
    t = -1.0 + (4.0 + 4.0 * theta - 2.0 * n * rho * eps0 / delta) / dd
    if abs(t) > 1.0 + 1e-12:
        raise InputError(
            f"construction infeasible: |t| = {abs(t):.6g} > 1; "
            f"reduce eps0 below {eps0_cap:.6g}"
        )

    bundle = make_z(n, rho)
    Z = bundle.space
    col1 = np.full(n, rho)
    col2 = np.concatenate([np.full(k_cut, t), np.ones(n - k_cut)])
    x = np.array([1.0 - delta, delta])
    tx = (1.0 - delta) * col1 + delta * col2
    zstar = np.full(n, 1.0 / (rho * n))
    tx_val = float(zstar @ tx)
    op_norm = max(Z.norm(col1), Z.norm(col2))
    in_pi = (
        abs(op_norm - 1.0) <= 1e-9
        and Z.norm(tx) > 1.0 - eps + _STRICT_MARGIN
    )

    point_branch = 2.0 * delta
    face_branch = 2.0 * n * rho * (eps0 / delta) / dd
    residual = abs(point_branch - face_branch)

    # independent check of the face-distance bound: true distance from the
    # second column to the face {h : |h_i| <= 1, sum h = rho n}
    face_lp = _z_face_distance(Z, rho, n, col2)

    coeff = psi_construction_coefficient(eps0, rho, n, theta)
    return PsiConstructionReport(
        n=n, rho=rho, eps=eps, eps0=eps0, theta=theta, k_cut=k_cut, t=t,
        delta=delta, point_branch=point_branch, face_branch=face_branch,
        residual=residual, face_lp_dist=face_lp, coefficient=coeff,
        ratio=coeff / np.sqrt(2 * eps0), in_pi_s_eps=in_pi,
        operator_norm=op_norm, tx_value=tx_val,
    )


def _z_face_distance(Z, rho, n, point):
    from scipy.optimize import linprog

    fam = Z.functionals
    m = fam.shape[0]
    fp = fam @ point
    # rows: +-fam (h - point) <= t  ->  +-fam h - t <= +-fam point
    a_ub = np.block([
        [fam, -np.ones((m, 1))],
        [-fam, -np.ones((m, 1))],
    ])
    b_ub = np.concatenate([fp, -fp])
    a_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    res = linprog(
        np.concatenate([np.zeros(n), [1.0]]),
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[rho * n],
        bounds=[(-1, 1)] * n + [(None, None)], method="highs",
    )
    if not res.success:
        raise ConstructionError(f"face LP failed: {res.message}")
    return float(res.x[-1])


def noncontinuity_table(eps: float, rhos, bm_budget: int = 400,
                        bm_seed: int = 0):
    """Per rho: the hexagon lower bound, the square-codomain upper bound
    sqrt(2 eps), a Banach-Mazur distance upper bound to l1^(2), and the
    gap between them: the moduli jump although the spaces converge."""
    from .zoo import make_hexagon, make_l1

    if not 0.0 < eps < 0.5:
        raise InputError(f"eps must lie in (0, 1/2), got {eps}")
    l1 = make_l1(2)
    rows = []
    for rho in rhos:
        bundle = make_hexagon(rho)
        hx_lower = bound_formula("thm_hexagon_lower", rho=rho, eps=eps).value
        l1_upper = float(np.sqrt(2 * eps))
        from .zoo import banach_mazur_upper

        bm = banach_mazur_upper(l1, bundle.space, budget=bm_budget,
                                seed=bm_seed)
        rows.append({
            "rho": rho,
            "hexagon_lower": hx_lower,
            "l1_upper": l1_upper,
            "bm_upper": bm,
            "gap": hx_lower - l1_upper,
        })
    return rows
