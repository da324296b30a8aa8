"""Factories for the concrete spaces used throughout the package.

Provides l1/linf/one-dimensional spaces, the hexagonal family Y_rho on
R^2 (rho in [1/2, 1)), the family Z_rho^(n) on R^n whose norm adds the
averaged-sum functional to the sup norm, canonical property-beta
structures for each, and a Banach-Mazur distance upper-bound estimator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .beta import BetaStructure
from .errors import (
    DimensionMismatchError,
    InputError,
    UnsupportedDimensionError,
)
from .spaces import PolyhedralSpace, make_space

_MAX_Z_VERTEX_N = 10


def make_l1(n: int) -> PolyhedralSpace:
    """l1^(n): norming family = all 2^n sign vectors.  Supported n <= 4."""
    if not 1 <= n <= 4:
        raise UnsupportedDimensionError(f"make_l1 supports 1 <= n <= 4, got {n}")
    fam = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
    return make_space(f"l1:{n}", n, fam)


def make_linf(n: int) -> PolyhedralSpace:
    """linf^(n): norming family = coordinate functionals.  n <= 16."""
    if not 1 <= n <= 16:
        raise UnsupportedDimensionError(f"make_linf supports 1 <= n <= 16, got {n}")
    if n <= 4:
        return make_space(f"linf:{n}", n, np.eye(n))
    verts = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
    return make_space(f"linf:{n}", n, np.eye(n), extreme_points=verts,
                      want_faces=(n <= 8))


def make_r() -> PolyhedralSpace:
    """The scalars as a 1-dimensional space (norming family {1})."""
    return make_space("r:1", 1, np.array([[1.0]]))


def canonical_beta(space: PolyhedralSpace) -> BetaStructure:
    """The standard property-beta structure of a zoo space, by name."""
    kind = space.name.split(":")[0]
    n = space.dim
    if kind == "linf" or kind == "r":
        return BetaStructure(
            points=np.eye(n), functionals=np.eye(n), rho=0.0, space=space,
        )
    if kind == "l1":
        if n == 2:
            pts = np.array([[0.5, 0.5], [0.5, -0.5]])
            funs = np.array([[1.0, 1.0], [1.0, -1.0]])
            return BetaStructure(pts, funs, rho=0.0, space=space)
        funs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
        # sign vector sigma attains its dual norm at sigma / n
        return BetaStructure(funs / n, funs, rho=1.0 - 2.0 / n, space=space)
    raise InputError(f"no canonical beta structure for {space.name!r}")


# -- hexagon spaces Y_rho ----------------------------------------------------


@dataclass(frozen=True)
class HexagonSpaceBundle:
    rho: float
    space: PolyhedralSpace
    dual_vertices: np.ndarray
    beta: BetaStructure

    @property
    def vertices(self) -> np.ndarray:
        return self.space.extreme_points


def hexagon_norm_cases(rho, x) -> float:
    """Case-split form of the Y_rho norm, used as a cross-check oracle."""
    x1, x2 = float(x[0]), float(x[1])
    c = 2.0 - 1.0 / rho
    if x1 * x2 <= 0:
        return abs(x1 - x2)
    if abs(x1) > abs(x2):
        return abs(x1 + c * x2)
    return abs(x2 + c * x1)


def make_hexagon(rho: float) -> HexagonSpaceBundle:
    """The space Y_rho: max{|x1 + (2-1/rho) x2|, |x2 + (2-1/rho) x1|,
    |x1 - x2|}, whose ball is a symmetric hexagon.

    The primal vertex printed as e in the source material carries a sign
    typo; the ball of a norm is symmetric, so e = -b here.
    """
    if not 0.5 <= rho < 1.0:
        raise InputError(f"hexagon parameter must satisfy 1/2 <= rho < 1, got {rho}")
    c = 2.0 - 1.0 / rho
    fam = np.array([
        [1.0, c],
        [c, 1.0],
        [1.0, -1.0],
    ])
    q = rho / (3.0 * rho - 1.0)
    a = np.array([1.0, 0.0])
    b = np.array([q, q])
    cc = np.array([0.0, 1.0])
    verts = np.array([a, b, cc, -a, -b, -cc])
    space = make_space(f"hex:{rho:g}", 2, fam, extreme_points=verts)
    dual_verts = np.array([
        [1.0, c], [c, 1.0], [-1.0, 1.0],
        [-1.0, -c], [-c, -1.0], [1.0, -1.0],
    ])
    y1 = np.array([2 * rho**2, rho - rho**2]) / (3 * rho - 1)
    y2 = y1[::-1].copy()
    y3 = np.array([-0.5, 0.5])
    beta = BetaStructure(
        points=np.array([y1, y2, y3]),
        functionals=np.array([[1.0, c], [c, 1.0], [-1.0, 1.0]]),
        rho=rho,
        space=space,
    )
    return HexagonSpaceBundle(rho=rho, space=space,
                              dual_vertices=dual_verts, beta=beta)


# -- Z spaces ----------------------------------------------------------------


@dataclass(frozen=True)
class ZSpaceBundle:
    n: int
    rho: float
    space: PolyhedralSpace
    beta: BetaStructure


def z_norm_formula(n, rho, x) -> float:
    """max{|x_1|, ..., |x_n|, |sum x_i| / (rho n)} as a direct oracle."""
    x = np.asarray(x, dtype=float)
    return max(float(np.max(np.abs(x))), abs(float(np.sum(x))) / (rho * n))


def _z_vertices(n, rho):
    """Closed-form extreme points of the Z ball: hypercube vertices with
    |sum| <= rho n, plus points where the sum constraint is active and all
    but one coordinate sit at +-1."""
    c = rho * n
    verts = []
    for sigma in itertools.product((1.0, -1.0), repeat=n):
        if abs(sum(sigma)) <= c + 1e-12:
            verts.append(np.array(sigma))
    for j in range(n):
        for sigma in itertools.product((1.0, -1.0), repeat=n - 1):
            rest = sum(sigma)
            for tau in (1.0, -1.0):
                xj = tau * c - rest
                if abs(xj) <= 1.0 - 1e-12:
                    v = np.empty(n)
                    v[:j] = sigma[:j]
                    v[j] = xj
                    v[j + 1:] = sigma[j:]
                    verts.append(v)
    arr = np.array(verts)
    # dedup
    uniq = []
    for v in arr:
        if not any(np.max(np.abs(v - u)) <= 1e-10 for u in uniq):
            uniq.append(v)
    return np.array(uniq)


def make_z(n: int, rho: float) -> ZSpaceBundle:
    """Z_rho^(n) with its n+1 pair beta structure."""
    if n < 2:
        raise InputError(f"Z spaces need n >= 2, got {n}")
    if not 1.0 / n <= rho < 1.0:
        raise InputError(
            f"Z parameter must satisfy 1/n <= rho < 1, got rho={rho}, n={n}"
        )
    fam = np.vstack([np.eye(n), np.full((1, n), 1.0 / (rho * n))])
    if n <= _MAX_Z_VERTEX_N:
        verts = _z_vertices(n, rho)
        space = make_space(f"z:{n}:{rho:g}", n, fam, extreme_points=verts,
                           want_faces=(n <= 4))
    else:
        space = make_space(f"z:{n}:{rho:g}", n, fam, extreme_points=None)
    coef = 1.0 / (n - 1 + rho * n)
    pts = np.full((n, n), -coef) + np.eye(n) * (1.0 + coef)
    pts = np.vstack([pts, np.full((1, n), rho)])
    funs = np.vstack([np.eye(n), np.full((1, n), 1.0 / (rho * n))])
    beta = BetaStructure(points=pts, functionals=funs, rho=rho, space=space)
    return ZSpaceBundle(n=n, rho=rho, space=space, beta=beta)


# -- named lookup ------------------------------------------------------------


def space_from_name(name: str):
    """Resolve zoo names: "l1:2", "linf:3", "hex:0.75", "z:10:0.5", "r:1".

    Returns (space, bundle_or_None); bundles carry beta structures.
    """
    parts = name.split(":")
    kind = parts[0]
    try:
        if kind == "l1" and len(parts) == 2:
            return make_l1(int(parts[1])), None
        if kind == "linf" and len(parts) == 2:
            return make_linf(int(parts[1])), None
        if kind == "r" and len(parts) in (1, 2):
            if len(parts) == 2 and int(parts[1]) != 1:
                raise InputError("r spaces are one-dimensional: use r:1")
            return make_r(), None
        if kind == "hex" and len(parts) == 2:
            bundle = make_hexagon(float(parts[1]))
            return bundle.space, bundle
        if kind == "z" and len(parts) == 3:
            bundle = make_z(int(parts[1]), float(parts[2]))
            return bundle.space, bundle
    except (ValueError, TypeError) as exc:
        raise InputError(f"cannot parse space name {name!r}: {exc}") from exc
    raise InputError(f"unknown space name {name!r}")


def beta_for_space(name: str) -> BetaStructure:
    space, bundle = space_from_name(name)
    if bundle is not None:
        return bundle.beta
    return canonical_beta(space)


# -- Banach-Mazur distance ----------------------------------------------------


def _product_norms(mat, X, Y):
    """||T|| * ||T^{-1}|| for T = mat : X -> Y, or inf if singular."""
    try:
        inv = np.linalg.inv(mat)
    except np.linalg.LinAlgError:
        return np.inf
    tn = float(np.max(Y.norm_many(X.extreme_points @ mat.T)))
    itn = float(np.max(X.norm_many(Y.extreme_points @ inv.T)))
    return tn * itn


def banach_mazur_upper(X: PolyhedralSpace, Y: PolyhedralSpace,
                       budget: int = 400, seed: int = 0) -> float:
    """Upper bound on the Banach-Mazur distance d(X, Y) = inf ||T|| ||T^-1||.

    Minimizes over a candidate family (identity, axis scalings, random
    local perturbations within `budget` evaluations).  Only an upper
    bound is produced; it is never below 1 - 1e-9.
    """
    if X.dim != Y.dim:
        raise DimensionMismatchError("Banach-Mazur distance needs equal dims")
    if X.dim > 3:
        raise UnsupportedDimensionError("banach_mazur_upper supports dim <= 3")
    n = X.dim
    rng = np.random.default_rng(seed)
    best_mat = np.eye(n)
    best = _product_norms(best_mat, X, Y)
    for scale in (0.5, 0.8, 1.25, 2.0):
        for axis in range(n):
            d = np.ones(n)
            d[axis] = scale
            val = _product_norms(np.diag(d), X, Y)
            if val < best:
                best, best_mat = val, np.diag(d)
    step = 0.3
    evals = 0
    while evals < budget:
        cand = best_mat + step * rng.standard_normal((n, n))
        val = _product_norms(cand, X, Y)
        evals += 1
        if val < best:
            best, best_mat = val, cand
        elif evals % 40 == 0:
            step = max(step * 0.5, 1e-3)
    return max(best, 1.0 - 1e-9)
