"""Closed-form upper/lower bounds for the approximation moduli.

Every formula is evaluated exactly from its parameters; `bound` is the
single dispatch point so the CLI and the experiments can request bounds
by name and embed them next to computed brackets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InputError


@dataclass(frozen=True)
class BoundFormula:
    name: str
    params: dict
    value: float
    side: str  # "upper" | "lower"


def ell1_upper_coefficient(rho: float, eps: float) -> float:
    """A(rho, eps) = sqrt(2 eps) (1+rho) / (sqrt(1 - rho^2 + eps rho^2 / 2)
    + rho sqrt(eps/2)); increasing in rho, from sqrt(2 eps) at 0 to 2 at 1."""
    if not 0.0 <= rho <= 1.0:
        raise InputError(f"rho must lie in [0,1], got {rho}")
    if not 0.0 < eps < 2.0:
        raise InputError(f"eps must lie in (0,2), got {eps}")
    root = math.sqrt(1.0 - rho**2 + 0.5 * eps * rho**2)
    return math.sqrt(2.0 * eps) * (1.0 + rho) / (root + rho * math.sqrt(eps / 2.0))


def psi_construction_coefficient(eps: float, rho: float, n: int,
                                 theta: float) -> float:
    """C(eps, rho, n, theta) = sqrt(2 eps) sqrt(2 rho / (1 - rho + (2+theta)/n))."""
    if n < 2:
        raise InputError("n must be >= 2")
    if not abs(theta) <= 0.5 + 1e-12:
        raise InputError(f"theta must lie in [-1/2, 1/2], got {theta}")
    denom = 1.0 - rho + (2.0 + theta) / n
    return math.sqrt(2.0 * eps) * math.sqrt(2.0 * rho / denom)


def _require(params, *names):
    missing = [k for k in names if params.get(k) is None]
    if missing:
        raise InputError(f"bound needs parameters {missing}")
    return [float(params[k]) for k in names]


def bound(name: str, **params) -> BoundFormula:
    """Evaluate a named closed-form bound.

    Names: thm_beta_upper, thm_nonsquare_upper, thm_ell1_upper,
    thm_beta0_exact, thm_hexagon_lower, psi_construction, modified_upper,
    modified_ell1R, modified_lower, bpb_functional.
    """
    if name == "thm_beta_upper":
        rho, eps = _require(params, "rho", "eps")
        _check_rho_eps(rho, eps)
        val = min(math.sqrt(2 * eps) * math.sqrt((1 + rho) / (1 - rho)), 2.0)
        return BoundFormula(name, params, val, "upper")
    if name == "thm_nonsquare_upper":
        rho, eps, alpha0 = _require(params, "rho", "eps", "alpha0")
        _check_rho_eps(rho, eps)
        if not 0.0 < alpha0 <= 2.0:
            raise InputError(f"alpha0 must lie in (0,2], got {alpha0}")
        val = math.sqrt(2 * eps * (1 - alpha0 / 3.0)) * math.sqrt(
            (1 + rho) / (1 - rho))
        return BoundFormula(name, params, val, "upper")
    if name == "thm_ell1_upper":
        rho, eps = _require(params, "rho", "eps")
        val = min(ell1_upper_coefficient(rho, eps), 1.0)
        return BoundFormula(name, params, val, "upper")
    if name == "thm_beta0_exact":
        (eps,) = _require(params, "eps")
        if not 0.0 < eps < 1.0:
            raise InputError(f"eps must lie in (0,1), got {eps}")
        return BoundFormula(name, params, min(math.sqrt(2 * eps), 1.0), "upper")
    if name == "thm_hexagon_lower":
        rho, eps = _require(params, "rho", "eps")
        _check_rho_eps(rho, eps, rho_lo=0.5)
        val = min(math.sqrt(2 * rho * eps / (1 - rho)), 1.0)
        return BoundFormula(name, params, val, "lower")
    if name == "psi_construction":
        rho, eps, n, theta = _require(params, "rho", "eps", "n", "theta")
        val = psi_construction_coefficient(eps, rho, int(n), theta)
        return BoundFormula(name, params, val, "lower")
    if name == "modified_upper":
        rho, eps = _require(params, "rho", "eps")
        _check_rho_eps(rho, eps)
        val = min(math.sqrt(eps) * math.sqrt((1 + rho) / (1 - rho)), 1.0)
        return BoundFormula(name, params, val, "upper")
    if name == "modified_ell1R":
        (eps,) = _require(params, "eps")
        if not 0.0 < eps < 1.0:
            raise InputError(f"eps must lie in (0,1), got {eps}")
        return BoundFormula(name, params, math.sqrt(eps), "upper")
    if name == "modified_lower":
        rho, eps = _require(params, "rho", "eps")
        _check_rho_eps(rho, eps, rho_lo=0.5)
        val = min(math.sqrt(eps) * math.sqrt(2 * rho / (1 - rho)), 1.0)
        return BoundFormula(name, params, val, "lower")
    if name == "bpb_functional":
        (eps,) = _require(params, "eps")
        if not 0.0 < eps < 2.0:
            raise InputError(f"eps must lie in (0,2), got {eps}")
        return BoundFormula(name, params, math.sqrt(2 * eps), "upper")
    raise InputError(f"unknown bound name {name!r}")


def _check_rho_eps(rho, eps, rho_lo=0.0):
    if not rho_lo <= rho < 1.0:
        raise InputError(f"rho must lie in [{rho_lo},1), got {rho}")
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0,1), got {eps}")


BOUND_NAMES = (
    "thm_beta_upper", "thm_nonsquare_upper", "thm_ell1_upper",
    "thm_beta0_exact", "thm_hexagon_lower", "psi_construction",
    "modified_upper", "modified_ell1R", "modified_lower", "bpb_functional",
)
