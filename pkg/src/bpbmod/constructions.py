"""Constructive approximation steps behind the operator moduli bounds.

The scalar step replaces the transfinite Phelps construction by an
exhaustive search over faces of the unit ball: in a finite-dimensional
polyhedral space every functional attains its norm, attaining pairs
(y, zeta) decompose by faces (y in a face G, zeta constant 1 on G), and
distances to a face / its conjugate dual face are exact small convex
problems.  Only the output contract of the classical results is promised.

On top of the scalar step sit the operator perturbations into a codomain
with property beta: the rank-one correction S(v) = T(v) +
[(1+eta) z*(v) - (T* y*_a0)(v)] y_a0 and its modified (norm-free)
variant, plus the uniform non-squareness machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beta import BetaStructure
from .errors import ConstructionError, InputError, RefusalError, UnsupportedDimensionError
from .operators import LinearOperator, operator_norm_of_matrix
from .spaces import (
    PolyhedralSpace,
    coords_of,
    dist_point_to_cone,
    dist_point_to_hull,
    dist_point_to_segment,
)

_TOL = 1e-10


# ---------------------------------------------------------------------------
# face-search primitives


def _nearest_in_hull(space, p, verts):
    """(distance, witness point) for conv(verts) in space's norm."""
    verts = np.atleast_2d(verts)
    if verts.shape[0] == 1:
        return space.norm(p - verts[0]), verts[0].copy()
    if verts.shape[0] == 2:
        d, s = dist_point_to_segment(space, p, verts[0], verts[1])
        return d, verts[0] + s * (verts[1] - verts[0])
    from scipy.optimize import linprog

    fam = space.functionals
    m, k = fam.shape[0], verts.shape[0]
    fv = fam @ verts.T
    fp = fam @ np.asarray(p, float)
    a_ub = np.block([[-fv, -np.ones((m, 1))], [fv, -np.ones((m, 1))]])
    b_ub = np.concatenate([-fp, fp])
    a_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
    res = linprog(
        np.concatenate([np.zeros(k), [1.0]]),
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=[(0, None)] * k + [(None, None)], method="highs",
    )
    if not res.success:
        raise ConstructionError(f"face-distance LP failed: {res.message}")
    return float(res.x[-1]), verts.T @ res.x[:k]


def _nearest_in_cone(space, p, verts):
    """(distance, witness) for the cone {sum nu_j v_j : nu >= 0}."""
    verts = np.atleast_2d(verts)
    if verts.shape[0] == 1:
        hi = 2.0 * space.norm(p) / max(space.norm(verts[0]), 1e-12) + 1.0
        fam = space.functionals
        consts = fam @ np.asarray(p, float)
        slopes = -fam @ verts[0]
        from .spaces import minimize_abs_affine

        d, c = minimize_abs_affine(consts, slopes, 0.0, hi)
        return d, c * verts[0]
    from scipy.optimize import linprog

    fam = space.functionals
    m, k = fam.shape[0], verts.shape[0]
    fv = fam @ verts.T
    fp = fam @ np.asarray(p, float)
    a_ub = np.block([[-fv, -np.ones((m, 1))], [fv, -np.ones((m, 1))]])
    b_ub = np.concatenate([-fp, fp])
    res = linprog(
        np.concatenate([np.zeros(k), [1.0]]),
        A_ub=a_ub, b_ub=b_ub,
        bounds=[(0, None)] * k + [(None, None)], method="highs",
    )
    if not res.success:
        raise ConstructionError(f"cone-distance LP failed: {res.message}")
    return float(res.x[-1]), verts.T @ res.x[:k]


# ---------------------------------------------------------------------------
# scalar steps


@dataclass(frozen=True)
class ScalarBpbResult:
    z: np.ndarray
    z_star: np.ndarray
    achieved_x_dist: float
    achieved_f_dist: float
    guarantee_x: float
    guarantee_f: float
    diagnostics: dict = field(default_factory=dict)


def phelps_step(space: PolyhedralSpace, x, f, eta: float, k: float):
    """Find (y, zeta) with zeta attaining its dual norm at the unit vector
    y, ||x - y|| < eta/k and ||f - zeta||* < k, given f(x) > 1 - eta with
    ||f||* = 1 and k in (0, 1).

    Searches every face G of the unit ball: y ranges over G, zeta over the
    functionals constant 1 on G (unit dual norm) or their nonnegative
    multiples (free norm), minimizing max{||x-y||/(eta/k), ||f-zeta||/k}.
    """
    x = coords_of(x, space)
    f = coords_of(f, space, "functional")
    if not 0.0 < k < 1.0:
        raise InputError(f"k must lie in (0,1), got {k}")
    if eta <= 0:
        raise InputError(f"eta must be positive, got {eta}")
    fx = float(f @ x)
    if fx <= 1.0 - eta:
        raise InputError(f"need f(x) > 1 - eta; got f(x)={fx:.6g}, eta={eta:.6g}")
    if abs(space.dual_norm(f) - 1.0) > 1e-9:
        raise InputError("phelps_step expects a unit functional")
    bound_x = eta / k
    dual = space.dual()
    best = None  # (scaled_max, y, zeta)
    deferred = []
    for face in space.faces:
        d1, y = _nearest_in_hull(space, x, face.vertices)
        if d1 >= bound_x:
            continue
        d2u, zeta = _nearest_in_hull(dual, f, face.conjugate_vertices)
        if d2u < k:
            scaled = max(d1 / bound_x, d2u / k)
            if best is None or scaled < best[0]:
                best = (scaled, y, zeta)
        else:
            deferred.append((d1, face))
    if best is None or best[0] > 0.0:
        # free-norm refinement on faces that were not settled by the fast path
        for d1, face in deferred:
            d2c, zeta = _nearest_in_cone(dual, f, face.conjugate_vertices)
            if d2c < k:
                scaled = max(d1 / bound_x, d2c / k)
                if best is None or scaled < best[0]:
                    y = _nearest_in_hull(space, x, face.vertices)[1]
                    best = (scaled, y, zeta)
    if best is None:
        raise ConstructionError(
            "face search exhausted without meeting the Phelps contract; "
            f"eta={eta:.6g} k={k:.6g}"
        )
    _, y, zeta = best
    return y, zeta


def bpb_scalar(space: PolyhedralSpace, x, f, eps: float, ktilde: float,
               tol: float = _TOL) -> ScalarBpbResult:
    """Unit pair (z, z*) with z*(z) = 1, ||x - z|| < eps/ktilde and
    ||f - z*|| < 2 ktilde, for f(x) > 1 - eps and ktilde in [eps/2, 1).

    Runs the Phelps step on (x, f/||f||) with the internal
    k = ktilde (||f|| - (1-eps)) / (eps ||f||), then normalizes the
    returned functional.  For ktilde < eps/2 the x-guarantee degrades to
    the triangle bound 2 and only the functional distance is promised.
    """
    x = coords_of(x, space)
    f = coords_of(f, space, "functional")
    if not 0.0 < eps:
        raise InputError("eps must be positive")
    nf = space.dual_norm(f)
    fx = float(f @ x)
    if fx <= 1.0 - eps:
        raise InputError(f"need f(x) > 1 - eps; got {fx:.6g} vs {1 - eps:.6g}")
    if ktilde >= 1.0 or ktilde <= 0.0:
        raise InputError(f"ktilde must lie in (0,1), got {ktilde}")

    if ktilde < eps / 2.0:
        return _bpb_scalar_trivial(space, x, f, nf, eps, ktilde)

    k = ktilde * (nf - (1.0 - eps)) / (eps * nf)
    eta = 1.0 - (1.0 - eps) / nf
    y, zeta = phelps_step(space, x, f / nf, eta, k)
    nz = space.dual_norm(zeta)
    z_star = zeta / nz
    dx = space.norm(x - y)
    df = space.dual_norm(f - z_star)
    gx, gf = eps / ktilde, 2.0 * ktilde
    res = ScalarBpbResult(
        z=y, z_star=z_star, achieved_x_dist=dx, achieved_f_dist=df,
        guarantee_x=gx, guarantee_f=gf,
        diagnostics={"internal_k": k, "f_norm": nf},
    )
    _check_scalar(space, res, tol)
    return res


def _bpb_scalar_trivial(space, x, f, nf, eps, ktilde):
    """ktilde < eps/2: the x-distance promise is weaker than the triangle
    inequality, so return the attaining pair nearest to f alone."""
    gf = 2.0 * ktilde
    dual = space.dual()
    best = None
    for face in space.faces:
        d2, zeta = _nearest_in_hull(dual, f, face.conjugate_vertices)
        if best is None or d2 < best[0]:
            d1, y = _nearest_in_hull(space, x, face.vertices)
            best = (d2, d1, y, zeta)
    d2, d1, y, zeta = best
    if d2 >= gf:
        raise InputError(
            f"no unit attaining functional within 2*ktilde={gf:.6g} of f "
            f"(||f||={nf:.6g}); the shortcut needs ||f|| > 1 - 2*ktilde"
        )
    res = ScalarBpbResult(
        z=y, z_star=zeta, achieved_x_dist=space.norm(x - y),
        achieved_f_dist=d2, guarantee_x=2.0, guarantee_f=gf,
        diagnostics={"shortcut": True, "f_norm": nf},
    )
    _check_scalar(space, res, _TOL)
    return res


def _check_scalar(space, res, tol):
    if abs(space.norm(res.z) - 1.0) > tol:
        raise ConstructionError("scalar step produced a non-unit vector")
    if abs(space.dual_norm(res.z_star) - 1.0) > tol:
        raise ConstructionError("scalar step produced a non-unit functional")
    if abs(float(res.z_star @ res.z) - 1.0) > tol:
        raise ConstructionError("scalar step functional does not attain at z")
    if res.achieved_x_dist > res.guarantee_x or res.achieved_f_dist > res.guarantee_f:
        raise ConstructionError(
            f"scalar step missed its contract: "
            f"x {res.achieved_x_dist:.6g}/{res.guarantee_x:.6g}, "
            f"f {res.achieved_f_dist:.6g}/{res.guarantee_f:.6g}"
        )


# ---------------------------------------------------------------------------
# uniform non-squareness


@dataclass(frozen=True)
class NonSquarenessEstimate:
    alpha_lo: float
    alpha_hi: float
    mesh: float

    def certifies(self, alpha0: float) -> bool:
        return self.alpha_lo > alpha0


def nonsquareness_parameter(space: PolyhedralSpace,
                            mesh: float = 0.01) -> NonSquarenessEstimate:
    """Certified bracket for alpha(X) = 2 - sup {(||x+y|| + ||x-y||)/2}.

    The objective is jointly convex, so its sup over the ball square equals
    the max over extreme-point pairs; that max is what any covering net of
    mesh `mesh` containing the extreme points reports.  alpha_hi is exact;
    alpha_lo subtracts the 1-Lipschitz-per-argument net slack 2*mesh.
    """
    if space.dim > 3:
        raise UnsupportedDimensionError("nonsquareness_parameter needs dim <= 3")
    if mesh <= 0:
        raise InputError("mesh must be positive")
    ep = space.extreme_points
    sums = ep[:, None, :] + ep[None, :, :]
    diffs = ep[:, None, :] - ep[None, :, :]
    vals = 0.5 * (space.norm_many(sums) + space.norm_many(diffs))
    sup = float(np.max(vals))
    hi = 2.0 - sup
    lo = max(0.0, hi - 2.0 * mesh)
    return NonSquarenessEstimate(alpha_lo=lo, alpha_hi=max(hi, lo), mesh=mesh)


def bpb_scalar_nonsquare(space: PolyhedralSpace, x, f, eps: float, k: float,
                         alpha0: float,
                         certificate: NonSquarenessEstimate | None = None,
                         tol: float = _TOL) -> ScalarBpbResult:
    """Sharpened scalar step on a uniformly non-square domain:
    ||x - z|| < eps/k and ||f - z*|| < 2 k (1 - alpha0/3), for unit x,
    f(x) > 1 - eps and k in [eps / (2 (1 - alpha0/3)), 1/2].

    alpha(X) > alpha0 must be certified by a non-squareness bracket.
    """
    x = coords_of(x, space)
    f = coords_of(f, space, "functional")
    if certificate is None:
        certificate = nonsquareness_parameter(space)
    if alpha0 <= 0 or not certificate.certifies(alpha0):
        raise RefusalError(
            f"alpha(X) > {alpha0:.6g} is not certified "
            f"(bracket [{certificate.alpha_lo:.6g}, {certificate.alpha_hi:.6g}])",
            certificate=certificate,
        )
    fac = 1.0 - alpha0 / 3.0
    if not eps / (2.0 * fac) <= k <= 0.5:
        raise InputError(
            f"k must lie in [eps/(2(1-alpha0/3)), 1/2] = "
            f"[{eps / (2 * fac):.6g}, 0.5], got {k}"
        )
    if abs(space.norm(x) - 1.0) > 1e-9:
        raise InputError("bpb_scalar_nonsquare needs a unit x")
    nf = space.dual_norm(f)
    fx = float(f @ x)
    if fx <= 1.0 - eps:
        raise InputError(f"need f(x) > 1 - eps; got {fx:.6g}")
    gx, gf = eps / k, 2.0 * k * fac

    # pipeline: Phelps with the internal parameter, then normalize; the
    # normalization cost is bounded by the non-squareness contract
    kt_int = k * (nf - (1.0 - eps)) / (eps * nf)
    eta = 1.0 - (1.0 - eps) / nf
    y, zeta = phelps_step(space, x, f / nf, eta, kt_int)
    z_star = zeta / space.dual_norm(zeta)
    dx = space.norm(x - y)
    df = space.dual_norm(f - z_star)
    if dx < gx and df < gf:
        res = ScalarBpbResult(y, z_star, dx, df, gx, gf,
                              {"route": "pipeline", "internal_k": kt_int})
        _check_scalar(space, res, tol)
        return res

    # direct search fallback: optimize the scaled max over all faces
    dual = space.dual()
    best = None
    for face in space.faces:
        d1, yy = _nearest_in_hull(space, x, face.vertices)
        if d1 >= gx:
            continue
        d2, zz = _nearest_in_hull(dual, f, face.conjugate_vertices)
        if d2 >= gf:
            continue
        scaled = max(d1 / gx, d2 / gf)
        if best is None or scaled < best[0]:
            best = (scaled, yy, zz)
    if best is None:
        raise ConstructionError(
            "non-square scalar step found no pair within both bounds"
        )
    _, y, z_star = best
    res = ScalarBpbResult(
        y, z_star, space.norm(x - y), space.dual_norm(f - z_star), gx, gf,
        {"route": "direct"},
    )
    _check_scalar(space, res, tol)
    return res


# ---------------------------------------------------------------------------
# face projection inside a property-beta codomain


def face_projection(beta: BetaStructure, y, alpha0: int, r: float,
                    tol: float = _TOL) -> np.ndarray:
    """Push y in B_Y onto the face {y*_a0 = 1} along y_a0:
    z = (r0/(1-rho+rho r0)) y_a0 + (1 - r0 rho/(1-rho+rho r0)) y with
    r0 = 1 - y*_a0(y).  Requires y*_a0(y) >= 1 - r, r in (0,1).

    Postconditions (checked): y*_a0(z) = 1, ||z|| = 1,
    |y*_a(z)| <= 1 for every a, and ||y - z|| <= r(1+rho)/(1-rho+rho r).
    """
    space = beta.space
    y = coords_of(y, space)
    if not 0.0 < r < 1.0:
        raise InputError(f"r must lie in (0,1), got {r}")
    if space.norm(y) > 1.0 + 1e-9:
        raise InputError("face_projection needs ||y|| <= 1")
    ys = beta.functionals[alpha0]
    val = float(ys @ y)
    if val < 1.0 - r - 1e-12:
        raise InputError(
            f"need y*_a0(y) >= 1 - r; got {val:.6g} vs {1 - r:.6g}"
        )
    rho = beta.rho
    r0 = max(0.0, 1.0 - val)
    denom = 1.0 - rho + rho * r0
    z = (r0 / denom) * beta.points[alpha0] + (1.0 - r0 * rho / denom) * y

    if abs(float(ys @ z) - 1.0) > tol:
        raise ConstructionError("face projection missed the target face")
    if abs(space.norm(z) - 1.0) > tol:
        raise ConstructionError("face projection left the unit sphere")
    if np.max(np.abs(beta.functionals @ z)) > 1.0 + tol:
        raise ConstructionError("face projection exceeded the dual bounds")
    bound = r * (1.0 + rho) / (1.0 - rho + rho * r)
    if space.norm(y - z) > bound + tol:
        raise ConstructionError("face projection moved farther than promised")
    return z


# ---------------------------------------------------------------------------
# operator perturbations


@dataclass(frozen=True)
class PerturbationResult:
    z: np.ndarray
    F: LinearOperator
    S: LinearOperator
    alpha0: int
    eta: float
    mode: str
    achieved_x_dist: float
    achieved_op_dist: float
    guarantee_x: float
    guarantee_op: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def max_dist(self) -> float:
        return max(self.achieved_x_dist, self.achieved_op_dist)


def _select_alpha0(beta: BetaStructure, tx, eps):
    vals = beta.functionals @ tx
    a0 = int(np.argmax(np.abs(vals)))
    if abs(vals[a0]) <= 1.0 - eps:
        raise InputError(
            f"||Tx|| = {np.max(np.abs(vals)):.6g} does not exceed 1 - eps"
        )
    sign = 1.0 if vals[a0] >= 0 else -1.0
    return a0, sign * beta.points[a0], sign * beta.functionals[a0]


def _as_operator(T, domain, codomain) -> LinearOperator:
    if isinstance(T, LinearOperator):
        return T
    return LinearOperator(np.asarray(T, dtype=float), domain, codomain)


def lindenstrauss_perturbation(domain: PolyhedralSpace, beta: BetaStructure,
                               T, x, eps: float, k: float | None = None,
                               tol: float = _TOL) -> PerturbationResult:
    """Norm-one approximant: from ||Tx|| > 1 - eps produce (z, F) with
    ||F|| = ||F z|| = 1, ||x - z|| < eps/k and
    ||T - F|| < 2 k (1+rho)/(1-rho).

    With the canonical k = sqrt(eps/2 * (1-rho)/(1+rho)) both distances
    stay below sqrt(2 eps) sqrt((1+rho)/(1-rho)); that k is admissible
    only for eps <= 2(1-rho)/(1+rho), beyond which the triangle-inequality
    fallback (guarantee 2) applies.
    """
    codomain = beta.space
    T = _as_operator(T, domain, codomain)
    x = coords_of(x, domain)
    rho = beta.rho
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0,1), got {eps}")
    if domain.norm(x) > 1.0 + 1e-9 or T.cached_norm > 1.0 + 1e-9:
        raise InputError("lindenstrauss_perturbation needs ||x||, ||T|| <= 1")
    tx = T.matrix @ x
    if codomain.norm(tx) <= 1.0 - eps:
        raise InputError("need ||Tx|| > 1 - eps")
    threshold = 2.0 * (1.0 - rho) / (1.0 + rho)
    if k is None:
        if eps >= threshold:
            return _trivial_attaining_pair(domain, codomain, T, x, eps)
        k = np.sqrt((eps / 2.0) * (1.0 - rho) / (1.0 + rho))
    if not eps / 2.0 <= k < 1.0:
        raise InputError(f"k must lie in [eps/2, 1), got {k}")

    a0, y_a, ys_a = _select_alpha0(beta, tx, eps)
    xstar = ys_a @ T.matrix
    scalar = bpb_scalar(domain, x, xstar, eps, ktilde=k)
    z, zstar = scalar.z, scalar.z_star
    eta = 2.0 * k * rho / (1.0 - rho)
    s_mat = T.matrix + np.outer(y_a, (1.0 + eta) * zstar - xstar)
    S = LinearOperator(s_mat, domain, codomain)
    F = LinearOperator(s_mat / S.cached_norm, domain, codomain)

    if abs(S.cached_norm - (1.0 + eta)) > 1e-10:
        raise ConstructionError(
            f"||S|| = {S.cached_norm:.12g} != 1 + eta = {1 + eta:.12g}"
        )
    if abs(codomain.norm(s_mat @ z) - S.cached_norm) > 1e-10:
        raise ConstructionError("S does not attain its norm at z")
    dx = domain.norm(x - z)
    dT = T.distance_to(F)
    gx = eps / k
    gT = 2.0 * k * (1.0 + rho) / (1.0 - rho)
    if dx >= gx or dT >= gT:
        raise ConstructionError(
            f"perturbation missed its guarantees: x {dx:.6g}/{gx:.6g}, "
            f"op {dT:.6g}/{gT:.6g}"
        )
    return PerturbationResult(
        z=z, F=F, S=S, alpha0=a0, eta=eta, mode="exact",
        achieved_x_dist=dx, achieved_op_dist=dT,
        guarantee_x=gx, guarantee_op=gT,
        diagnostics={
            "k": k, "rho": rho, "scalar": scalar,
            "bound": min(np.sqrt(2 * eps) * np.sqrt((1 + rho) / (1 - rho)), 2.0),
        },
    )


def _trivial_attaining_pair(domain, codomain, T, x, eps):
    """Triangle-inequality fallback: nearest attaining pair from a small
    candidate family of rank-one and column-normalized operators."""
    best = None
    cand_w = list(codomain.extreme_points) if codomain.extreme_points is not None \
        else [c / codomain.norm(c) for c in T.matrix.T if codomain.norm(c) > 1e-12]
    for v in domain.extreme_points:
        i = domain.norming_witness(v)
        zeta = domain.functionals[i]
        zeta = zeta if zeta @ v > 0 else -zeta
        images = [T.matrix @ v] + list(cand_w)
        for w in images:
            nw = codomain.norm(w)
            if nw <= 1e-12:
                continue
            f_mat = np.outer(w / nw, zeta)
            F = LinearOperator(f_mat, domain, codomain)
            if abs(F.cached_norm - 1.0) > 1e-9:
                continue
            dx = domain.norm(x - v)
            dT = T.distance_to(F)
            score = max(dx, dT)
            if best is None or score < best[0]:
                best = (score, v, F, dx, dT)
    score, v, F, dx, dT = best
    return PerturbationResult(
        z=v, F=F, S=F, alpha0=-1, eta=0.0, mode="exact",
        achieved_x_dist=dx, achieved_op_dist=dT,
        guarantee_x=2.0, guarantee_op=2.0,
        diagnostics={"trivial": True, "bound": 2.0},
    )


def lindenstrauss_perturbation_nonsquare(
        domain: PolyhedralSpace, beta: BetaStructure, T, x, eps: float,
        alpha0: float | None = None,
        certificate: NonSquarenessEstimate | None = None,
        k: float | None = None, tol: float = _TOL) -> PerturbationResult:
    """Variant for a uniformly non-square domain: the scalar step tightens
    to 2 k (1 - alpha0/3) and the final bound gains the factor
    sqrt(1 - alpha0/3).  Requires eps below the admissibility threshold
    min{2/(1-alpha0/3) * (1-rho)/(1+rho), (1+rho)/(2(1-rho)) * (1-alpha0/3)}.
    """
    codomain = beta.space
    T = _as_operator(T, domain, codomain)
    x = coords_of(x, domain)
    rho = beta.rho
    if certificate is None:
        certificate = nonsquareness_parameter(domain)
    if alpha0 is None:
        if certificate.alpha_lo <= 0:
            raise RefusalError(
                "domain is not certifiably uniformly non-square "
                f"(bracket [{certificate.alpha_lo:.6g}, {certificate.alpha_hi:.6g}])",
                certificate=certificate,
            )
        alpha0 = 0.9 * certificate.alpha_lo
    if alpha0 <= 0 or not certificate.certifies(alpha0):
        raise RefusalError(
            f"alpha(X) > {alpha0:.6g} is not certified",
            certificate=certificate,
        )
    fac = 1.0 - alpha0 / 3.0
    eps_threshold = min(
        (2.0 / fac) * (1.0 - rho) / (1.0 + rho),
        0.5 * (1.0 + rho) / (1.0 - rho) * fac,
    )
    if eps >= eps_threshold:
        raise RefusalError(
            f"eps = {eps:.6g} is not below the admissibility threshold "
            f"{eps_threshold:.6g}",
            threshold=eps_threshold,
        )
    if abs(domain.norm(x) - 1.0) > 1e-9 or abs(T.cached_norm - 1.0) > 1e-9:
        raise InputError("non-square perturbation needs a spherical pair")
    tx = T.matrix @ x
    if codomain.norm(tx) <= 1.0 - eps:
        raise InputError("need ||Tx|| > 1 - eps")
    if k is None:
        k = np.sqrt(eps / (2.0 * fac) * (1.0 - rho) / (1.0 + rho))
    if not eps / (2.0 * fac) <= k <= 0.5:
        raise InputError(
            f"k must lie in [eps/(2(1-alpha0/3)), 1/2], got {k}"
        )

    a0, y_a, ys_a = _select_alpha0(beta, tx, eps)
    xstar = ys_a @ T.matrix
    scalar = bpb_scalar_nonsquare(domain, x, xstar, eps, k, alpha0, certificate)
    z, zstar = scalar.z, scalar.z_star
    eta = 2.0 * k * fac * rho / (1.0 - rho)
    s_mat = T.matrix + np.outer(y_a, (1.0 + eta) * zstar - xstar)
    S = LinearOperator(s_mat, domain, codomain)
    F = LinearOperator(s_mat / S.cached_norm, domain, codomain)
    dx = domain.norm(x - z)
    dT = T.distance_to(F)
    gx = eps / k
    gT = 2.0 * k * fac * (1.0 + rho) / (1.0 - rho)
    if dx >= gx or dT >= gT:
        raise ConstructionError(
            f"non-square perturbation missed its guarantees: "
            f"x {dx:.6g}/{gx:.6g}, op {dT:.6g}/{gT:.6g}"
        )
    return PerturbationResult(
        z=z, F=F, S=S, alpha0=a0, eta=eta, mode="exact",
        achieved_x_dist=dx, achieved_op_dist=dT,
        guarantee_x=gx, guarantee_op=gT,
        diagnostics={
            "k": k, "rho": rho, "alpha0": alpha0, "scalar": scalar,
            "bound": np.sqrt(2 * eps * fac) * np.sqrt((1 + rho) / (1 - rho)),
        },
    )


def modified_perturbation(domain: PolyhedralSpace, beta: BetaStructure,
                          T, x, eps: float, ktilde: float | None = None,
                          tol: float = _TOL) -> PerturbationResult:
    """Norm-free approximant: (z, S) with ||S z|| = ||S|| (S need not be
    norm one).  For eps < (1-rho)/(1+rho) and the canonical
    ktilde = sqrt(eps (1-rho)/(1+rho)) the distances stay within
    sqrt(eps (1+rho)/(1-rho)); otherwise the pair (x/||x||, 0) works with
    bound 1 (the zero operator attains its norm everywhere).
    """
    codomain = beta.space
    T = _as_operator(T, domain, codomain)
    x = coords_of(x, domain)
    rho = beta.rho
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0,1), got {eps}")
    if domain.norm(x) > 1.0 + 1e-9 or T.cached_norm > 1.0 + 1e-9:
        raise InputError("modified_perturbation needs ||x||, ||T|| <= 1")
    tx = T.matrix @ x
    if codomain.norm(tx) <= 1.0 - eps:
        raise InputError("need ||Tx|| > 1 - eps")
    trivial_threshold = (1.0 - rho) / (1.0 + rho)
    if ktilde is None:
        if eps >= trivial_threshold:
            nx = domain.norm(x)
            z = x / nx
            zero = LinearOperator(np.zeros_like(T.matrix), domain, codomain)
            return PerturbationResult(
                z=z, F=zero, S=zero, alpha0=-1, eta=0.0, mode="modified",
                achieved_x_dist=domain.norm(x - z),
                achieved_op_dist=T.cached_norm,
                guarantee_x=1.0, guarantee_op=1.0,
                diagnostics={"trivial": True, "bound": 1.0},
            )
        ktilde = np.sqrt(eps * (1.0 - rho) / (1.0 + rho))
    if not eps <= ktilde < 1.0:
        raise InputError(f"ktilde must lie in [eps, 1), got {ktilde}")

    a0, y_a, ys_a = _select_alpha0(beta, tx, eps)
    xstar = ys_a @ T.matrix
    nxs = domain.dual_norm(xstar)
    k = ktilde * (nxs - (1.0 - eps)) / (eps * nxs)
    eta_phelps = 1.0 - (1.0 - eps) / nxs
    y, zeta = phelps_step(domain, x, xstar / nxs, eta_phelps, k)
    zstar = nxs * zeta  # free norm, attains at y
    nzs = domain.dual_norm(zstar)
    eta = rho * (k * nxs + nxs * abs(1.0 - nzs)) / (nzs * (1.0 - rho)) + 1e-12
    s_mat = nzs * T.matrix + np.outer(
        y_a, (1.0 + eta) * zstar - nzs * xstar
    )
    S = LinearOperator(s_mat, domain, codomain)
    if abs(S.cached_norm - (1.0 + eta) * nzs) > 1e-10:
        raise ConstructionError(
            f"||S|| = {S.cached_norm:.12g} != (1+eta)||z*|| = "
            f"{(1 + eta) * nzs:.12g}"
        )
    if abs(codomain.norm(s_mat @ y) - S.cached_norm) > 1e-10:
        raise ConstructionError("modified S does not attain its norm at z")
    dx = domain.norm(x - y)
    dT = T.distance_to(S)
    gx = eps / ktilde
    gT = ktilde * (1.0 + rho) / (1.0 - rho)
    if dx >= gx or dT > gT + 1e-12:
        raise ConstructionError(
            f"modified perturbation missed its guarantees: "
            f"x {dx:.6g}/{gx:.6g}, op {dT:.6g}/{gT:.6g}"
        )
    return PerturbationResult(
        z=y, F=S, S=S, alpha0=a0, eta=eta, mode="modified",
        achieved_x_dist=dx, achieved_op_dist=dT,
        guarantee_x=gx, guarantee_op=gT,
        diagnostics={
            "ktilde": ktilde, "k": k, "rho": rho, "zstar_norm": nzs,
            "bound": min(np.sqrt(eps * (1 + rho) / (1 - rho)), 1.0),
        },
    )
