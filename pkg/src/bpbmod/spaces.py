"""Finite-dimensional real Banach spaces with polyhedral norms.

A space is described by a finite *norming family* of functionals
f_1, ..., f_m; the norm is ||x|| = max_i |f_i(x)|.  The unit ball is the
H-polytope {x : |f_i(x)| <= 1} and the dual unit ball is the convex hull
of {+-f_i}.  Everything downstream (operator norms, attainment faces,
certified sup-inf searches) rests on the exact vertex / face data
computed here at construction time.  All objects are immutable and safe
to share across workers.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstructionError,
    DimensionMismatchError,
    InputError,
    InvalidSpaceError,
    UnsupportedDimensionError,
)

# Global numerical tolerances (see module docs: identities vs geometric dedup).
IDENTITY_TOL = 1e-12
DEDUP_TOL = 1e-10

_MAX_ENUM_DIM = 4


def _as_row(x, dim, what="vector"):
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != dim:
        raise DimensionMismatchError(
            f"{what} has length {arr.shape[0]}, expected {dim}"
        )
    return arr


def _frozen(arr):
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def minimize_abs_affine(consts, slopes, lo, hi):
    """Exactly minimize  s |-> max_i |consts_i + slopes_i * s|  over [lo, hi].

    The objective is the upper envelope of 2*len(consts) affine functions,
    hence convex piecewise-linear; its minimum over an interval is attained
    at an endpoint or at a crossing of two envelope lines.  Returns
    (min_value, argmin).
    """
    a = np.concatenate([consts, -consts])
    b = np.concatenate([slopes, -slopes])
    # candidate points: endpoints plus all pairwise line crossings
    db = b[:, None] - b[None, :]
    da = a[None, :] - a[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = da / db
    cand = cross[np.isfinite(cross)]
    cand = cand[(cand > lo) & (cand < hi)]
    cand = np.concatenate([[lo, hi], cand])
    vals = np.max(np.abs(a[None, :] + np.outer(cand, b)), axis=1)
    k = int(np.argmin(vals))
    return float(vals[k]), float(cand[k])


def enumerate_ball_vertices(functionals, dedup_tol=DEDUP_TOL):
    """All extreme points of {x : |f_i(x)| <= 1} by constraint-subset
    intersection (double-description style), exact in dim <= 4.

    Raises if the family is rank-deficient (unbounded ball).
    """
    fam = np.asarray(functionals, dtype=float)
    m, dim = fam.shape
    if dim > _MAX_ENUM_DIM:
        raise UnsupportedDimensionError(
            f"generic vertex enumeration supports dim <= {_MAX_ENUM_DIM}, got {dim}"
        )
    if np.linalg.matrix_rank(fam, tol=1e-9) < dim:
        raise InvalidSpaceError("norming family is rank-deficient: ball unbounded")
    rows = np.vstack([fam, -fam])
    verts: list[np.ndarray] = []
    for idx in itertools.combinations(range(rows.shape[0]), dim):
        sub = rows[list(idx)]
        try:
            x = np.linalg.solve(sub, np.ones(dim))
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(x)):
            continue
        if np.max(np.abs(fam @ x)) <= 1.0 + 1e-9:
            verts.append(x)
    if not verts:
        raise InvalidSpaceError("no vertices found; degenerate norming family")
    # dedup, then symmetrize
    uniq: list[np.ndarray] = []
    for v in verts:
        if not any(np.max(np.abs(v - u)) <= dedup_tol for u in uniq):
            uniq.append(v)
    sym = list(uniq)
    for v in uniq:
        if not any(np.max(np.abs(v + u)) <= dedup_tol for u in sym):
            sym.append(-v)
    return np.array(sym)


def _convex_position_filter(points, tol=1e-9):
    """Indices of points that are extreme in conv(points) (LP test each)."""
    from scipy.optimize import linprog

    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    keep = []
    for i in range(n):
        others = np.delete(pts, i, axis=0)
        if others.shape[0] == 0:
            keep.append(i)
            continue
        # feasibility: pts[i] = others^T lam, lam >= 0, sum lam = 1
        a_eq = np.vstack([others.T, np.ones(others.shape[0])])
        b_eq = np.concatenate([pts[i], [1.0]])
        res = linprog(
            np.zeros(others.shape[0]), A_eq=a_eq, b_eq=b_eq,
            bounds=[(0, None)] * others.shape[0], method="highs",
        )
        if not res.success:
            keep.append(i)
        else:
            # reconstruct and double-check: degenerate LPs can "succeed" loosely
            recon = others.T @ res.x
            if np.max(np.abs(recon - pts[i])) > tol:
                keep.append(i)
    return keep


@dataclass(frozen=True)
class Face:
    """A face of the unit ball: the set where `supporting_functional`
    (dual norm one) attains the value 1.

    `vertices` are the ball extreme points on the face; `conjugate_vertices`
    are the dual-ball extreme points equal to 1 on the whole face (the
    vertex set of the conjugate dual face).  `anchor` + `span` give the
    affine description of the patch.
    """

    supporting_functional: np.ndarray
    vertex_indices: tuple[int, ...]
    vertices: np.ndarray
    conjugate_vertices: np.ndarray
    anchor: np.ndarray
    span: np.ndarray

    @property
    def dim(self) -> int:
        return self.span.shape[0]


@dataclass(frozen=True)
class PolyhedralSpace:
    """Immutable polyhedral normed space.

    Use :func:`make_space` (or the zoo factories) instead of the raw
    constructor so that extreme points, faces and dual data are computed
    and validated once, at construction.
    """

    name: str
    dim: int
    functionals: np.ndarray
    extreme_points: np.ndarray | None = None
    _dual_vertices: np.ndarray | None = field(default=None, repr=False)
    _faces: tuple[Face, ...] | None = field(default=None, repr=False)

    # -- core norm computations ------------------------------------------

    def norm(self, x) -> float:
        """max_i |f_i(x)|; zero iff x = 0."""
        v = _as_row(x, self.dim)
        return float(np.max(np.abs(self.functionals @ v)))

    def norm_many(self, xs) -> np.ndarray:
        arr = np.asarray(xs, dtype=float)
        return np.max(np.abs(arr @ self.functionals.T), axis=-1)

    def norming_witness(self, x) -> int:
        """Lowest index i with |f_i(x)| = ||x|| (ties to lowest index)."""
        v = _as_row(x, self.dim)
        return int(np.argmax(np.abs(self.functionals @ v)))

    def dual_norm(self, f) -> float:
        """Operator norm of the functional f, i.e. max over the unit ball.

        Exact via extreme points when available, otherwise by direct linear
        maximization over the constraint representation.
        """
        g = _as_row(f, self.dim, "functional")
        if self.extreme_points is not None:
            return float(np.max(np.abs(self.extreme_points @ g)))
        return self._dual_norm_lp(g)

    def dual_norm_many(self, fs) -> np.ndarray:
        arr = np.asarray(fs, dtype=float)
        if self.extreme_points is not None:
            return np.max(np.abs(arr @ self.extreme_points.T), axis=-1)
        return np.array([self._dual_norm_lp(g) for g in np.atleast_2d(arr)])

    def _dual_norm_lp(self, g) -> float:
        from scipy.optimize import linprog

        # the ball is symmetric, so max g = max -g: one LP suffices
        rows = np.vstack([self.functionals, -self.functionals])
        res = linprog(
            -g, A_ub=rows, b_ub=np.ones(rows.shape[0]),
            bounds=[(None, None)] * self.dim, method="highs",
        )
        if not res.success:
            raise InvalidSpaceError("dual norm LP failed; ball unbounded?")
        return float(-res.fun)

    # -- derived geometric data ------------------------------------------

    @property
    def dual_vertices(self) -> np.ndarray:
        if self._dual_vertices is None:
            raise UnsupportedDimensionError(
                f"space {self.name!r} was built without dual-ball data"
            )
        return self._dual_vertices

    @property
    def faces(self) -> tuple[Face, ...]:
        if self._faces is None:
            raise UnsupportedDimensionError(
                f"space {self.name!r} was built without face-lattice data"
            )
        return self._faces

    @property
    def facets(self) -> tuple[Face, ...]:
        top = max(f.dim for f in self.faces)
        return tuple(f for f in self.faces if f.dim == top)

    def dual(self) -> "PolyhedralSpace":
        """The dual space: norming family = primal extreme points, ball =
        conv(+-f_i).  Reuses the same machinery for dual-side searches."""
        if self.extreme_points is None:
            raise UnsupportedDimensionError(
                f"dual() needs extreme points; space {self.name!r} has none"
            )
        return make_space(
            self.name + "*", self.dim, self.extreme_points,
            extreme_points=self.dual_vertices,
        )

    def support_face(self, f) -> Face:
        """The face of the unit ball where f attains its dual norm,
        normalized so the supporting functional has dual norm 1."""
        g = _as_row(f, self.dim, "functional")
        mu = self.dual_norm(g)
        if mu <= IDENTITY_TOL:
            raise InputError("support_face of the zero functional")
        g = g / mu
        vals = self.extreme_points @ g
        on = np.nonzero(vals >= 1.0 - 1e-9)[0]
        if on.size == 0:  # attains at -v only; flip
            g = -g
            vals = -vals
            on = np.nonzero(vals >= 1.0 - 1e-9)[0]
        return _build_face(self, tuple(int(i) for i in on), g)

    # -- nets --------------------------------------------------------------

    def sphere_net(self, mesh: float) -> np.ndarray:
        """Finite subset of the unit sphere with covering radius <= mesh in
        this space's own norm, built by meshing every facet of the ball."""
        if mesh <= 0:
            raise InputError("mesh must be positive")
        pts = [_mesh_face_points(self, fc, mesh) for fc in self.facets]
        return np.vstack(pts)

    def ball_net(self, mesh: float) -> np.ndarray:
        """Net of the closed unit ball with covering radius <= mesh:
        radial shells of sphere nets plus the origin."""
        if mesh <= 0:
            raise InputError("mesh must be positive")
        shell = self.sphere_net(mesh / 2.0)
        n_r = int(np.ceil(2.0 / mesh))
        radii = np.linspace(0.0, 1.0, n_r + 1)[1:]
        pts = [np.zeros((1, self.dim))]
        pts += [r * shell for r in radii]
        return np.vstack(pts)

    def random_sphere_points(self, count: int, rng) -> np.ndarray:
        raw = rng.standard_normal((count, self.dim))
        norms = self.norm_many(raw)
        norms[norms == 0] = 1.0
        return raw / norms[:, None]

    def contains(self, x, tol=1e-9) -> bool:
        return self.norm(x) <= 1.0 + tol


# -- wrapped element types -------------------------------------------------


@dataclass(frozen=True)
class Vector:
    coords: tuple[float, ...]
    space: PolyhedralSpace

    def __post_init__(self):
        if len(self.coords) != self.space.dim:
            raise DimensionMismatchError(
                f"vector length {len(self.coords)} != dim {self.space.dim}"
            )

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def norm(self) -> float:
        return self.space.norm(self.array)


@dataclass(frozen=True)
class Functional:
    coords: tuple[float, ...]
    space: PolyhedralSpace

    def __post_init__(self):
        if len(self.coords) != self.space.dim:
            raise DimensionMismatchError(
                f"functional length {len(self.coords)} != dim {self.space.dim}"
            )

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def __call__(self, x) -> float:
        v = x.array if isinstance(x, Vector) else _as_row(x, self.space.dim)
        return float(self.array @ v)

    def dual_norm(self) -> float:
        return self.space.dual_norm(self.array)


def coords_of(x, space, what="vector"):
    """Accept a Vector/Functional or raw coordinates; return an ndarray."""
    if isinstance(x, (Vector, Functional)):
        if x.space.dim != space.dim:
            raise DimensionMismatchError("element belongs to a different space")
        return x.array
    return _as_row(x, space.dim, what)


# -- construction ----------------------------------------------------------


def make_space(name, dim, functionals, extreme_points=None,
               want_faces=True, dedup_tol=DEDUP_TOL) -> PolyhedralSpace:
    """Validate and build a PolyhedralSpace with all caches filled.

    extreme_points may be supplied (closed-form families like Z spaces);
    otherwise they are enumerated when dim <= 4.  Spaces of higher
    dimension without supplied vertices carry norming data only.
    """
    fam = np.atleast_2d(np.asarray(functionals, dtype=float))
    if fam.shape[1] != dim:
        raise DimensionMismatchError(
            f"functionals have {fam.shape[1]} columns, expected {dim}"
        )
    if np.linalg.matrix_rank(fam, tol=1e-9) < dim:
        raise InvalidSpaceError(
            f"norming family of {name!r} has rank < {dim}: not a norm"
        )
    if extreme_points is None and dim <= _MAX_ENUM_DIM:
        extreme_points = enumerate_ball_vertices(fam, dedup_tol)
    ep = None
    dual_verts = None
    faces = None
    if extreme_points is not None:
        ep = np.atleast_2d(np.asarray(extreme_points, dtype=float))
        space0 = PolyhedralSpace(name, dim, _frozen(fam), _frozen(ep))
        bad = np.abs(space0.norm_many(ep) - 1.0) > 1e-9
        if np.any(bad):
            raise InvalidSpaceError(
                f"supplied extreme point {ep[np.argmax(bad)]} is not on the sphere"
            )
        dual_verts = _dual_ball_vertices(fam, ep, dedup_tol)
        if want_faces:
            faces = _face_lattice(space0, dual_verts)
    return PolyhedralSpace(
        name, dim, _frozen(fam),
        _frozen(ep) if ep is not None else None,
        _frozen(dual_verts) if dual_verts is not None else None,
        tuple(faces) if faces is not None else None,
    )


def _dual_ball_vertices(fam, extreme_points, dedup_tol):
    """Extreme points of conv(+-f_i) = the dual unit ball."""
    cand = np.vstack([fam, -fam])
    uniq: list[np.ndarray] = []
    for v in cand:
        if not any(np.max(np.abs(v - u)) <= dedup_tol for u in uniq):
            uniq.append(v)
    cand = np.array(uniq)
    # functionals with dual norm < 1 are redundant, never extreme
    vals = np.max(cand @ extreme_points.T, axis=1)
    cand = cand[vals >= 1.0 - 1e-9]
    keep = _convex_position_filter(cand)
    return cand[keep]


def _build_face(space, vert_idx, supporting):
    verts = space.extreme_points[list(vert_idx)]
    dv = space.dual_vertices
    on = np.nonzero(np.all(np.abs(dv @ verts.T - 1.0) <= 1e-9, axis=1))[0]
    conj = dv[on]
    anchor = verts.mean(axis=0)
    diffs = verts - anchor
    if verts.shape[0] == 1:
        span = np.zeros((0, space.dim))
    else:
        u, s, vt = np.linalg.svd(diffs, full_matrices=False)
        span = vt[s > 1e-9]
    return Face(
        supporting_functional=_frozen(supporting),
        vertex_indices=tuple(vert_idx),
        vertices=_frozen(verts),
        conjugate_vertices=_frozen(conj),
        anchor=_frozen(anchor),
        span=_frozen(span),
    )


def _face_lattice(space, dual_verts):
    """All proper nonempty faces of the unit ball, as intersections of
    facets.  Small polytopes only; sizes here are a few dozen faces."""
    ep = space.extreme_points
    rows = np.vstack([space.functionals, -space.functionals])
    facet_sets: list[frozenset[int]] = []
    for g in rows:
        vals = ep @ g
        if np.max(vals) >= 1.0 - 1e-9:
            s = frozenset(int(i) for i in np.nonzero(vals >= 1.0 - 1e-9)[0])
            if s and s not in facet_sets:
                facet_sets.append(s)
    closure: set[frozenset[int]] = set(facet_sets)
    frontier = list(facet_sets)
    while frontier:
        new: list[frozenset[int]] = []
        for a in frontier:
            for b in facet_sets:
                c = a & b
                if c and c not in closure:
                    closure.add(c)
                    new.append(c)
        frontier = new
    # provisional space carrying dual vertices, for conjugate lookups
    tmp = PolyhedralSpace(space.name, space.dim, space.functionals,
                          space.extreme_points, _frozen(dual_verts))
    faces = []
    for s in sorted(closure, key=lambda s: (len(s), sorted(s))):
        idx = tuple(sorted(s))
        active = [g for g in rows if np.all(np.abs(ep[list(idx)] @ g - 1.0) <= 1e-9)]
        supporting = np.mean(active, axis=0)
        faces.append(_build_face(tmp, idx, supporting))
    return faces


# -- face meshing ------------------------------------------------------------


def _mesh_face_points(space, face, mesh):
    verts = face.vertices
    k = verts.shape[0]
    if k == 1:
        return verts.copy()
    if k == 2:
        length = space.norm(verts[1] - verts[0])
        n = max(1, int(np.ceil(length / mesh)))
        ts = np.linspace(0.0, 1.0, n + 1)
        return verts[0][None, :] + ts[:, None] * (verts[1] - verts[0])[None, :]
    # polygon or 3-polytope facet: simplex decomposition, then weight grids
    simplices = _triangulate(verts)
    pts = []
    for simp in simplices:
        pts.append(_mesh_simplex(space, verts[simp], mesh))
    return np.vstack(pts)


def _triangulate(verts):
    """Index simplices decomposing conv(verts) for small vertex sets."""
    k, dim = verts.shape
    center = verts.mean(axis=0)
    diffs = verts - center
    u, s, vt = np.linalg.svd(diffs, full_matrices=False)
    rank = int(np.sum(s > 1e-9))
    proj = diffs @ vt[:rank].T
    if rank == 1:
        order = np.argsort(proj[:, 0])
        return [[order[i], order[i + 1]] for i in range(k - 1)]
    if rank == 2:
        ang = np.arctan2(proj[:, 1], proj[:, 0])
        order = list(np.argsort(ang))
        return [[order[0], order[i], order[i + 1]] for i in range(1, k - 1)]
    from scipy.spatial import Delaunay

    tri = Delaunay(proj)
    return [list(s) for s in tri.simplices]


def _mesh_simplex(space, verts, mesh):
    k = verts.shape[0]
    diam = max(
        space.norm(verts[i] - verts[j])
        for i in range(k) for j in range(i + 1, k)
    )
    n = max(1, int(np.ceil((k - 1) * diam / mesh)))
    grids = []
    for combo in itertools.combinations(range(n + k - 1), k - 1):
        weights = np.diff([-1, *combo, n + k - 1]) - 1
        grids.append(weights / n)
    lam = np.array(grids)
    return lam @ verts


# -- distances to faces and cones -------------------------------------------


def dist_point_to_segment(space, p, a, b, interval=(0.0, 1.0)):
    """Exact min over s in [interval] of ||p - (a + s (b-a))|| in `space`."""
    fam = space.functionals
    consts = fam @ (np.asarray(p, float) - np.asarray(a, float))
    slopes = -fam @ (np.asarray(b, float) - np.asarray(a, float))
    val, s = minimize_abs_affine(consts, slopes, *interval)
    return val, s


def dist_point_to_hull(space, p, verts):
    """Exact distance (in space's norm) from p to conv(verts)."""
    verts = np.atleast_2d(np.asarray(verts, dtype=float))
    k = verts.shape[0]
    p = np.asarray(p, dtype=float)
    if k == 1:
        return space.norm(p - verts[0])
    if k == 2:
        return dist_point_to_segment(space, p, verts[0], verts[1])[0]
    from scipy.optimize import linprog

    fam = space.functionals
    m = fam.shape[0]
    # vars: lam (k), t ; minimize t  s.t. +-fam(p - V^T lam) <= t, sum lam = 1
    fv = fam @ verts.T  # (m, k)
    fp = fam @ p
    a_ub = np.block([
        [-fv, -np.ones((m, 1))],
        [fv, -np.ones((m, 1))],
    ])
    b_ub = np.concatenate([-fp, fp])
    a_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
    res = linprog(
        np.concatenate([np.zeros(k), [1.0]]),
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=[(0, None)] * k + [(None, None)], method="highs",
    )
    if not res.success:
        raise ConstructionError(f"hull-distance LP failed: {res.message}")
    return float(res.x[-1])


def dist_point_to_cone(space, p, verts):
    """Exact distance from p to {sum nu_j v_j : nu >= 0} (free scaling)."""
    verts = np.atleast_2d(np.asarray(verts, dtype=float))
    k = verts.shape[0]
    p = np.asarray(p, dtype=float)
    if k == 1:
        fam = space.functionals
        consts = fam @ p
        slopes = -fam @ verts[0]
        hi = 2.0 * space.norm(p) / max(space.norm(verts[0]), 1e-12) + 1.0
        val, c = minimize_abs_affine(consts, slopes, 0.0, hi)
        return val
    from scipy.optimize import linprog

    fam = space.functionals
    m = fam.shape[0]
    fv = fam @ verts.T
    fp = fam @ p
    a_ub = np.block([
        [-fv, -np.ones((m, 1))],
        [fv, -np.ones((m, 1))],
    ])
    b_ub = np.concatenate([-fp, fp])
    res = linprog(
        np.concatenate([np.zeros(k), [1.0]]),
        A_ub=a_ub, b_ub=b_ub,
        bounds=[(0, None)] * k + [(None, None)], method="highs",
    )
    if not res.success:
        raise ConstructionError(f"cone-distance LP failed: {res.message}")
    return float(res.x[-1])


# -- JSON interface ----------------------------------------------------------


def space_to_json(space) -> str:
    return json.dumps(
        {
            "name": space.name,
            "dim": space.dim,
            "functionals": space.functionals.tolist(),
        },
        sort_keys=True,
    )


def space_from_json(text_or_obj) -> PolyhedralSpace:
    """Parse {"name", "dim", "functionals"}; rejects rank-deficient input."""
    obj = (
        json.loads(text_or_obj) if isinstance(text_or_obj, (str, bytes))
        else text_or_obj
    )
    try:
        name = obj["name"]
        dim = int(obj["dim"])
        fam = obj["functionals"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed space description: {exc}") from exc
    return make_space(name, dim, fam)
