"""Linear operators between polyhedral spaces.

Operator norms are exact: the norm of T is the maximum of ||Tv|| over the
extreme points v of the domain ball (a convex function attains its sup on
a polytope at a vertex).  Membership in the almost-attainment sets and
the attainment set used by the approximation moduli is decided here, as
is segment attainment (image of a sphere segment inside one face).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InputError, UnsupportedDimensionError
from .spaces import PolyhedralSpace, _frozen, coords_of


@dataclass(frozen=True)
class LinearOperator:
    """Dense matrix operator with cached norm and attainment witnesses."""

    matrix: np.ndarray  # (codomain.dim, domain.dim)
    domain: PolyhedralSpace
    codomain: PolyhedralSpace
    cached_norm: float = field(init=False)
    attainment_witnesses: np.ndarray = field(init=False)

    def __post_init__(self):
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if mat.shape != (self.codomain.dim, self.domain.dim):
            raise DimensionMismatchError(
                f"matrix shape {mat.shape} != "
                f"({self.codomain.dim}, {self.domain.dim})"
            )
        object.__setattr__(self, "matrix", _frozen(mat))
        if self.domain.extreme_points is None:
            raise UnsupportedDimensionError(
                "operator norms need domain extreme points; "
                f"{self.domain.name!r} has none"
            )
        images = self.domain.extreme_points @ mat.T
        vals = self.codomain.norm_many(images)
        nrm = float(np.max(vals))
        wit = self.domain.extreme_points[vals >= nrm - 1e-12]
        object.__setattr__(self, "cached_norm", nrm)
        object.__setattr__(self, "attainment_witnesses", _frozen(wit))

    @property
    def norm(self) -> float:
        return self.cached_norm

    def __call__(self, x) -> np.ndarray:
        v = coords_of(x, self.domain)
        return self.matrix @ v

    def adjoint_row(self, y_star) -> np.ndarray:
        """T*(y*) as a functional on the domain."""
        g = coords_of(y_star, self.codomain, "functional")
        return g @ self.matrix

    def scaled(self, factor: float) -> "LinearOperator":
        return LinearOperator(self.matrix * factor, self.domain, self.codomain)

    def distance_to(self, other: "LinearOperator") -> float:
        if other.domain is not self.domain and other.domain.dim != self.domain.dim:
            raise DimensionMismatchError("operator domains differ")
        return operator_norm_of_matrix(
            self.matrix - other.matrix, self.domain, self.codomain
        )


def operator_norm_of_matrix(mat, domain, codomain) -> float:
    images = domain.extreme_points @ np.atleast_2d(mat).T
    return float(np.max(codomain.norm_many(images)))


def operator_norm(T: LinearOperator) -> float:
    return T.cached_norm


@dataclass(frozen=True)
class PairFlags:
    """Membership of (x, T) in the almost/exact attainment sets at eps."""

    in_pi_eps: bool
    in_pi_s_eps: bool
    in_pi: bool
    eps: float
    tol: float
    norms: dict


def classify_pair(x, T: LinearOperator, eps: float, tol: float = 1e-9) -> PairFlags:
    """Flags per the definitions: Pi_eps needs ||x|| <= 1, ||T|| <= 1 and
    ||Tx|| > 1 - eps; the spherical variant pins both norms to 1; Pi pins
    ||x|| = ||T|| = ||Tx|| = 1.  All comparisons at tolerance `tol`."""
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0,1), got {eps}")
    xv = coords_of(x, T.domain)
    nx = T.domain.norm(xv)
    nt = T.cached_norm
    ntx = T.codomain.norm(T.matrix @ xv)
    in_ball = nx <= 1.0 + tol and nt <= 1.0 + tol
    almost = ntx > 1.0 - eps - tol
    on_spheres = abs(nx - 1.0) <= tol and abs(nt - 1.0) <= tol
    in_pi_eps = in_ball and almost
    in_pi_s_eps = in_pi_eps and on_spheres
    in_pi = on_spheres and abs(ntx - 1.0) <= tol and nx <= 1.0 + tol
    return PairFlags(
        in_pi_eps=in_pi_eps,
        in_pi_s_eps=in_pi_s_eps,
        in_pi=in_pi,
        eps=eps,
        tol=tol,
        norms={"x": nx, "T": nt, "Tx": ntx},
    )


@dataclass(frozen=True)
class OperatorPair:
    x: np.ndarray
    T: LinearOperator
    flags: PairFlags


@dataclass(frozen=True)
class AttainingPair:
    """A pair (z, F) certified to attain: either ||F|| = ||Fz|| = 1
    (mode "exact") or merely ||Fz|| = ||F|| with any norm (mode
    "modified", zero operator allowed)."""

    z: np.ndarray
    F: LinearOperator
    mode: str  # "exact" | "modified"
    tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "z", _frozen(np.asarray(self.z, float)))
        nz = self.F.domain.norm(self.z)
        nfz = self.F.codomain.norm(self.F.matrix @ self.z)
        nf = self.F.cached_norm
        ok = abs(nz - 1.0) <= self.tol and abs(nfz - nf) <= self.tol
        if self.mode == "exact":
            ok = ok and abs(nf - 1.0) <= self.tol
        elif self.mode != "modified":
            raise InputError(f"unknown attainment mode {self.mode!r}")
        if not ok:
            raise InputError(
                f"pair does not certify {self.mode} attainment within "
                f"{self.tol:g}: ||z||={nz:.12g} ||F||={nf:.12g} ||Fz||={nfz:.12g}"
            )


def attains_on_segment(T: LinearOperator, u, v, tol: float = 1e-9) -> bool:
    """True iff ||T|| is attained along the whole segment [u, v] of the
    domain sphere and the image segment sits inside a single face of
    ||T|| B_Y (witnessed by a shared supporting functional)."""
    uu = coords_of(u, T.domain)
    vv = coords_of(v, T.domain)
    nrm = T.cached_norm
    for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
        pt = lam * uu + (1 - lam) * vv
        if abs(T.codomain.norm(T.matrix @ pt) - nrm) > tol:
            return False
    if nrm <= tol:  # zero operator attains everywhere
        return True
    tu = T.matrix @ uu
    tv = T.matrix @ vv
    for g in T.codomain.dual_vertices:
        if g @ tu >= nrm - tol and g @ tv >= nrm - tol:
            return True
    return False


def operator_to_json(T: LinearOperator) -> str:
    return json.dumps(
        {
            "domain": T.domain.name,
            "codomain": T.codomain.name,
            "matrix": T.matrix.tolist(),
        },
        sort_keys=True,
    )


def operator_from_json(text, resolve_space) -> LinearOperator:
    obj = json.loads(text) if isinstance(text, (str, bytes)) else text
    dom = resolve_space(obj["domain"])
    cod = resolve_space(obj["codomain"])
    return LinearOperator(np.asarray(obj["matrix"], dtype=float), dom, cod)
