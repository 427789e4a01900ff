"""Large-sample limits of the post-selection distributions.

Along parameter sequences whose rescaled coefficients sqrt(n) theta^(n)
converge in the extended reals to psi, the finite-sample cdfs converge to a
mixture of the same structure, driven by the Gram limit Q, the limit scale
sigma, and psi.  The mixture starts at p_star, the largest tested order whose
rescaled coefficient diverges; orders below it lose all selection mass.
Infinite entries of psi are encoded as IEEE infinities, never as large finite
sentinels, because the limit formulas branch structurally on infiniteness.

Fixed-parameter limits are the special case psi in {0, +-inf}^P; local
alternatives theta + gamma/sqrt(n) give psi entries gamma_j at the orders
where theta vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distribution import DistributionResult, cdf_known_variance, cdf_unknown_variance
from .kernels import DEFAULT_SPEC, QuadratureSpec
from .mixture import MixtureEngine
from .model import (
    ParameterPoint,
    RegressionDesign,
    SelectionFamily,
    TargetFunctional,
    scaled_omitted_bias,
)

__all__ = [
    "LimitParameter",
    "p_star",
    "limit_bias",
    "limit_engine",
    "limit_cdf",
    "limit_selection_prob",
    "local_alternative_limit",
    "local_shift_vector",
    "recentered_cdf",
]

_MIN_EIG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LimitParameter:
    """Limit of rescaled parameters: psi in (R u {-inf, inf})^P, sigma, Gram limit Q."""

    psi: np.ndarray
    sigma: float
    Q: np.ndarray

    def __post_init__(self) -> None:
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if psi.ndim != 1 or np.any(np.isnan(psi)):
            raise ValueError("psi must be a vector of reals or +-inf")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError("sigma must be positive and finite")
        if Q.shape != (psi.size, psi.size):
            raise ValueError("Q shape inconsistent with psi")
        if not np.allclose(Q, Q.T, atol=1e-12, rtol=1e-10):
            raise ValueError("Q must be symmetric")
        eigmin = float(np.linalg.eigvalsh(Q)[0])
        if eigmin <= _MIN_EIG_TOL * max(1.0, float(np.linalg.eigvalsh(Q)[-1])):
            raise ValueError("Q must be positive definite")
        psi_ro = psi.copy()
        psi_ro.setflags(write=False)
        Q_ro = Q.copy()
        Q_ro.setflags(write=False)
        object.__setattr__(self, "psi", psi_ro)
        object.__setattr__(self, "Q", Q_ro)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def P(self) -> int:
        return self.psi.size

    @classmethod
    def from_design(cls, design: RegressionDesign, psi, sigma: float) -> "LimitParameter":
        return cls(psi=psi, sigma=sigma, Q=design.gram)


def p_star(psi, family: SelectionFamily) -> int:
    """Largest tested order whose rescaled coefficient diverges (else the minimal order)."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    out = family.min_order
    for p in range(family.min_order + 1, family.P + 1):
        if math.isinf(psi[p - 1]):
            out = p
    return out


def limit_bias(limit: LimitParameter, p: int) -> np.ndarray:
    """Limit of the scaled bias of the order-p restricted fit.

    Defined whenever all entries of psi above order p are finite; otherwise
    infinite entries would enter and the bias diverges.
    """
    if not 0 <= p <= limit.P:
        raise ValueError(f"order {p} outside [0, {limit.P}]")
    tail = limit.psi[p:]
    if np.any(np.isinf(tail)):
        raise ValueError(f"bias at order {p} undefined: divergent entries above p")
    return scaled_omitted_bias(limit.Q, tail, p)


def limit_engine(
    limit: LimitParameter,
    family: SelectionFamily,
    target: TargetFunctional | None,
) -> MixtureEngine:
    """Mixture engine of the limit distribution (no residual-scale smoothing)."""
    if family.P != limit.P:
        raise ValueError("family order range inconsistent with psi")
    if target is not None and target.P != limit.P:
        raise ValueError("target transform width inconsistent with psi")
    lo = p_star(limit.psi, family)
    biases = {p: limit_bias(limit, p) for p in range(lo, limit.P + 1)}
    shifts = None
    if target is not None:
        shifts = {p: target.A @ biases[p] for p in biases}
    centers = {
        q: biases[q][q - 1] + limit.psi[q - 1] for q in range(lo + 1, limit.P + 1)
    }
    return MixtureEngine(
        gram=limit.Q,
        sigma=limit.sigma,
        family=family,
        p_lo=lo,
        center_args=centers,
        shifts=shifts,
        A=None if target is None else target.A,
        h_df=None,
    )


def limit_cdf(
    limit: LimitParameter,
    family: SelectionFamily,
    target: TargetFunctional,
    t,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> DistributionResult:
    """Limit cdf of the transformed post-selection estimator.

    Component terms below p_star are zero; orders at and above it carry the
    limit biases as mean shifts and the limit interval centers in the
    acceptance probabilities.
    """
    return limit_engine(limit, family, target).cdf(t, spec)


def limit_selection_prob(limit: LimitParameter, family: SelectionFamily, p: int) -> float:
    """Limit of the selection probability of order p (zero below p_star)."""
    if not family.min_order <= p <= family.P:
        raise ValueError(f"order {p} outside [{family.min_order}, {family.P}]")
    lo = p_star(limit.psi, family)
    if p < lo:
        return 0.0
    return limit_engine(limit, family, None).weight(p).value


def local_shift_vector(theta, gamma) -> np.ndarray:
    """psi for local alternatives theta + gamma/sqrt(n).

    Coordinates with nonzero theta diverge (signed infinity); the rest carry
    the finite local shifts gamma.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if theta.shape != gamma.shape:
        raise ValueError("theta and gamma must have the same length")
    with np.errstate(invalid="ignore"):
        diverging = np.sign(theta) * np.inf
    return np.where(theta != 0.0, diverging, gamma)


def local_alternative_limit(
    theta,
    gamma,
    sigma: float,
    Q,
    family: SelectionFamily,
    target: TargetFunctional,
    t,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> DistributionResult:
    """Limit cdf along theta + gamma/sqrt(n) (gamma = 0 gives the fixed-theta limit)."""
    limit = LimitParameter(psi=local_shift_vector(theta, gamma), sigma=sigma, Q=Q)
    return limit_cdf(limit, family, target, t, spec)


def recentered_cdf(
    design: RegressionDesign,
    family: SelectionFamily,
    target: TargetFunctional,
    params: ParameterPoint,
    d,
    t,
    spec: QuadratureSpec = DEFAULT_SPEC,
    variant: str = "unknown",
) -> DistributionResult:
    """Cdf of the estimator centered at d instead of theta (argument shift).

    Divergent centering shifts push all mass to one side: as the shift grows
    in a coordinate, the value at fixed t tends to 1 (or 0 from the other
    side).
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if d.shape != params.theta.shape:
        raise ValueError("d must have the same length as theta")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    shifted = t + math.sqrt(design.n) * (target.A @ (d - params.theta))
    if variant == "unknown":
        return cdf_unknown_variance(design, family, target, params, shifted, spec)
    if variant == "known":
        return cdf_known_variance(design, family, target, params, shifted, spec)
    raise ValueError("variant must be 'known' or 'unknown'")
