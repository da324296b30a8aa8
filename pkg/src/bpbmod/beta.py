"""Lindenstrauss property beta: verification, minimal parameter extraction,
and the sup-norm isometry that exists whenever rho < 1/dim.

A structure is a finite list of pairs (y_a, y*_a) with y*_a(y_a) = 1,
|y*_a(y_g)| <= rho off the diagonal, and {y*_a} 1-norming for the space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStructureError
from .spaces import IDENTITY_TOL, PolyhedralSpace, _frozen


@dataclass(frozen=True)
class BetaStructure:
    """Paired families {y_a} in S_Y and {y*_a} in S_Y* with parameter rho."""

    points: np.ndarray       # (k, dim) rows y_a
    functionals: np.ndarray  # (k, dim) rows y*_a
    rho: float
    space: PolyhedralSpace

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        object.__setattr__(self, "functionals", _frozen(self.functionals))
        k, d = self.points.shape
        if self.functionals.shape != (k, d) or d != self.space.dim:
            raise InvalidStructureError("points/functionals shape mismatch")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def gram(self) -> np.ndarray:
        """Matrix of values y*_a(y_g)."""
        return self.functionals @ self.points.T

    def with_rho(self, rho: float) -> "BetaStructure":
        return BetaStructure(self.points, self.functionals, rho, self.space)


@dataclass(frozen=True)
class BetaReport:
    passed: bool
    worst_violation: float
    witness: tuple | None
    details: dict

    def __bool__(self):
        return self.passed


def _norming_defect(structure: BetaStructure, rng=None, samples=512):
    """Largest | max_a |y*_a(y)| - ||y|| | over extreme points and random
    probes.  For a 1-norming family this is zero up to round-off: both
    sides are maxima of finitely many |linear| terms, so agreement on
    extreme points plus homogeneity decides equality globally."""
    space = structure.space
    probes = []
    if space.extreme_points is not None:
        probes.append(space.extreme_points)
    rng = np.random.default_rng(0) if rng is None else rng
    probes.append(rng.standard_normal((samples, space.dim)))
    worst = 0.0
    witness = None
    for batch in probes:
        lhs = np.max(np.abs(batch @ structure.functionals.T), axis=1)
        rhs = space.norm_many(batch)
        gaps = np.abs(lhs - rhs)
        i = int(np.argmax(gaps))
        if gaps[i] > worst:
            worst = float(gaps[i])
            witness = np.array(batch[i])
    return worst, witness


def verify_beta(structure: BetaStructure, tol=IDENTITY_TOL, rng=None) -> BetaReport:
    """Check the three defining conditions; failures are reported, not raised.

    worst_violation is the largest constraint breach; witness identifies
    the offending pair (alpha, gamma) for off-diagonal breaches, the index
    alpha for pairing breaches, or the probe vector for norming breaches.
    """
    gram = structure.gram()
    k = structure.size
    diag = np.abs(np.diag(gram) - 1.0)
    off = np.abs(gram) - structure.rho
    np.fill_diagonal(off, -np.inf)
    point_norms = np.abs(structure.space.norm_many(structure.points) - 1.0)
    fun_norms = np.abs(
        structure.space.dual_norm_many(structure.functionals) - 1.0
    )
    norming_defect, norming_witness = _norming_defect(structure, rng)

    violations = []
    for a in range(k):
        if diag[a] > tol:
            violations.append((float(diag[a]), ("pairing", a)))
        if point_norms[a] > 1e-9:
            violations.append((float(point_norms[a]), ("point-not-unit", a)))
        if fun_norms[a] > 1e-9:
            violations.append((float(fun_norms[a]), ("functional-not-unit", a)))
    if k > 1:
        worst_off = float(np.max(off))
        if worst_off > tol:
            a, g = np.unravel_index(int(np.argmax(off)), off.shape)
            violations.append((worst_off, (int(a), int(g))))
    if norming_defect > tol:
        violations.append((norming_defect, ("not-norming", norming_witness)))

    if violations:
        worst, witness = max(violations, key=lambda t: t[0])
        passed = False
    else:
        worst, witness = 0.0, None
        passed = True
    return BetaReport(
        passed=passed,
        worst_violation=worst,
        witness=witness,
        details={
            "max_pairing_defect": float(np.max(diag)) if k else 0.0,
            "max_offdiag": float(np.max(np.abs(gram) - np.where(
                np.eye(k, dtype=bool), np.inf, 0.0))) if k > 1 else 0.0,
            "norming_defect": norming_defect,
        },
    )


def minimal_rho(points, functionals=None, space=None) -> float:
    """Least rho for which the supplied pairs witness property beta:
    max_{a != g} |y*_a(y_g)|.  Conditions (i) and (iii) must already hold."""
    if isinstance(points, BetaStructure):
        structure = points
    else:
        structure = BetaStructure(points, functionals, rho=1.0 - 1e-9,
                                  space=space)
    # rho = inf disables the off-diagonal check: only (i) and (iii) gate here
    probe = structure.with_rho(float("inf"))
    report = verify_beta(probe)
    if not report.passed:
        raise InvalidStructureError(
            f"pairs do not satisfy beta conditions (i)/(iii): "
            f"worst={report.worst_violation:.3g} at {report.witness}"
        )
    k = structure.size
    if k <= 1:
        return 0.0
    gram = np.abs(structure.gram())
    np.fill_diagonal(gram, -np.inf)
    return float(np.max(gram))


@dataclass(frozen=True)
class IsometryResult:
    success: bool
    matrix: np.ndarray | None
    reason: str
    max_defect: float | None


def linfty_isometry(structure: BetaStructure, rng=None,
                    samples=10_000) -> IsometryResult:
    """For an n-dimensional space with an n-pair structure of parameter
    rho < 1/n, the map U(y) = (y*_1(y), ..., y*_n(y)) is an isometry onto
    the sup-norm space.  Returns the verified map, or a refusal.
    """
    space = structure.space
    n = space.dim
    rho = minimal_rho(structure)
    if rho >= 1.0 / n:
        return IsometryResult(
            False, None,
            f"minimal rho = {rho:.6g} is not below 1/dim = {1.0 / n:.6g}",
            None,
        )
    if structure.size != n:
        raise InvalidStructureError(
            f"structure with rho < 1/n must have exactly n={n} pairs, "
            f"got {structure.size}"
        )
    u = np.array(structure.functionals)
    defect = 0.0
    if space.extreme_points is not None:
        img = np.max(np.abs(space.extreme_points @ u.T), axis=1)
        defect = float(np.max(np.abs(img - 1.0)))
    rng = np.random.default_rng(0) if rng is None else rng
    probes = rng.standard_normal((samples, n))
    lhs = np.max(np.abs(probes @ u.T), axis=1)
    rhs = space.norm_many(probes)
    defect = max(defect, float(np.max(np.abs(lhs - rhs))))
    if defect > 1e-12:
        return IsometryResult(
            False, None,
            f"candidate map fails the isometry check (defect {defect:.3g})",
            defect,
        )
    return IsometryResult(True, _frozen(u), "verified", defect)
