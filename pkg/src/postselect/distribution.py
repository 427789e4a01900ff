"""Exact finite-sample distributions of the transformed post-selection estimator.

The object of interest is sqrt(n) A (theta_tilde - theta), where theta_tilde
fits by restricted least squares in the selected model.  Its cdf is a sum
over candidate orders of weighted conditional components; the lowest order
contributes a shifted Gaussian cdf times acceptance probabilities, every
higher order a Gaussian region integral whose integrand carries the rejection
probability of that order's test.  The data-driven (estimated scale) variant
smooths all acceptance probabilities against the scaled-chi law of the
residual scale estimate, turning the known-scale formulas into nested
quadratures.

A two-regressor closed form (one protected regressor, one tested regressor,
scalar target = first coefficient) is provided both as a fast path and as an
independent cross-check of the general machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernels import (
    DEFAULT_SPEC,
    QuadratureSpec,
    delta,
    integrate_against_h,
    norm_pdf,
)
from .mixture import DistributionResult, MixtureEngine
from .model import (
    ParameterPoint,
    RegressionDesign,
    SelectionFamily,
    TargetFunctional,
    design_from_gram,
    restricted_ls_mean,
)

__all__ = [
    "DensityUndefinedError",
    "DistributionResult",
    "TwoRegressorSetting",
    "finite_sample_engine",
    "cdf_known_variance",
    "cdf_unknown_variance",
    "density_known_variance",
    "density_unknown_variance",
    "weighted_conditional_cdf",
    "two_regressor_density",
]

_VARIANTS = ("known", "unknown")


class DensityUndefinedError(ValueError):
    """The distribution has no Lebesgue density for this target transform."""


def _check_consistent(design, family, target, params):
    if family.P != design.P:
        raise ValueError("family order range inconsistent with design")
    if target.P != design.P:
        raise ValueError("target transform width inconsistent with design")
    if params.theta.size != design.P:
        raise ValueError("theta length inconsistent with design")


def finite_sample_engine(
    design: RegressionDesign,
    family: SelectionFamily,
    target: TargetFunctional,
    params: ParameterPoint,
    variant: str,
) -> MixtureEngine:
    """Mixture engine bound to the finite-sample shifts and interval centers."""
    if variant not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}")
    _check_consistent(design, family, target, params)
    rootn = math.sqrt(design.n)
    O = family.min_order
    etas = {p: restricted_ls_mean(design, params.theta, p) for p in range(O, design.P + 1)}
    shifts = {p: rootn * (target.A @ (etas[p] - params.theta)) for p in etas}
    centers = {}
    for q in range(O + 1, design.P + 1):
        eta_q = etas.get(q)
        centers[q] = rootn * eta_q[q - 1]
    return MixtureEngine(
        gram=design.gram,
        sigma=params.sigma,
        family=family,
        p_lo=O,
        center_args=centers,
        shifts=shifts,
        A=target.A,
        h_df=None if variant == "known" else design.n - design.P,
    )


def cdf_known_variance(
    design, family, target, params, t, spec: QuadratureSpec = DEFAULT_SPEC
) -> DistributionResult:
    """Cdf of the transformed estimator under the known-scale selector."""
    return finite_sample_engine(design, family, target, params, "known").cdf(t, spec)


def cdf_unknown_variance(
    design, family, target, params, t, spec: QuadratureSpec = DEFAULT_SPEC
) -> DistributionResult:
    """Cdf of the transformed estimator under the data-driven selector."""
    return finite_sample_engine(design, family, target, params, "unknown").cdf(t, spec)


def _check_density_exists(family: SelectionFamily, target: TargetFunctional) -> None:
    O = family.min_order
    if O == 0:
        raise DensityUndefinedError(
            "minimal order 0 puts an atom at the origin: no Lebesgue density"
        )
    lead = target.A[:, :O]
    s = np.linalg.svd(lead, compute_uv=False)
    tol = max(target.A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if int(np.sum(s > tol)) < target.k:
        raise DensityUndefinedError(
            "leading transform block is rank deficient: some components are degenerate"
        )


def density_known_variance(
    design, family, target, params, t, spec: QuadratureSpec = DEFAULT_SPEC
) -> DistributionResult:
    """Density of the transformed estimator under the known-scale selector."""
    _check_density_exists(family, target)
    return finite_sample_engine(design, family, target, params, "known").density(t, spec)


def density_unknown_variance(
    design, family, target, params, t, spec: QuadratureSpec = DEFAULT_SPEC
) -> DistributionResult:
    """Density of the transformed estimator under the data-driven selector."""
    _check_density_exists(family, target)
    return finite_sample_engine(design, family, target, params, "unknown").density(t, spec)


def weighted_conditional_cdf(
    design,
    family,
    target,
    params,
    p: int,
    t,
    variant: str = "unknown",
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> DistributionResult:
    """Single order-p term of the cdf: conditional cdf times selection weight.

    Its total mass as t -> infinity is the order-p selection probability.
    """
    engine = finite_sample_engine(design, family, target, params, variant)
    if not family.min_order <= p <= family.P:
        raise ValueError(f"order {p} outside [{family.min_order}, {family.P}]")
    res = engine.term_cdf(p, t, spec)
    terms = np.zeros(family.P - family.min_order + 1)
    terms[p - family.min_order] = res.value
    return DistributionResult(
        value=min(max(res.value, 0.0), 1.0),
        per_model_terms=terms,
        err_est=res.err_est,
        converged=res.converged,
    )


@dataclass(frozen=True)
class TwoRegressorSetting:
    """One protected and one tested regressor; target = first coefficient.

    Parameterized by the joint law of the full-model estimators: sigma1 and
    sigma2 are the standard deviations of the two scaled coefficient
    estimates, rho their correlation.  The distribution of the scaled first
    coefficient after selection depends on the model only through these,
    theta2, n and the threshold c2.
    """

    rho: float
    sigma1: float
    sigma2: float
    theta2: float
    n: int
    c2: float

    def __post_init__(self) -> None:
        if not abs(self.rho) < 1.0:
            raise ValueError("need |rho| < 1")
        if self.sigma1 <= 0.0 or self.sigma2 <= 0.0:
            raise ValueError("sigma1, sigma2 must be positive")
        if self.n <= 2:
            raise ValueError("need n > 2")
        if not (0.0 < self.c2 < np.inf):
            raise ValueError("c2 must be positive and finite")

    @cached_property
    def estimator_covariance(self) -> np.ndarray:
        off = self.rho * self.sigma1 * self.sigma2
        return np.array([[self.sigma1**2, off], [off, self.sigma2**2]])

    def components(self, theta1: float = 0.0, seed: int = 0):
        """Equivalent general-model objects (design, family, target, params).

        The error scale is normalized to one, so the Gram matrix is the
        inverse of the estimator covariance.
        """
        gram = np.linalg.inv(self.estimator_covariance)
        design = design_from_gram(self.n, gram, seed=seed)
        family = SelectionFamily(min_order=1, criticals=(self.c2,))
        target = TargetFunctional(np.array([[1.0, 0.0]]))
        params = ParameterPoint(theta=np.array([theta1, self.theta2]), sigma=1.0)
        return design, family, target, params


def two_regressor_density(
    setting: TwoRegressorSetting,
    variant: str,
    t: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float:
    """Closed-form density of the scaled first coefficient after selection.

    ``variant``: "known" and "unknown" give the unconditional densities under
    the known-scale and data-driven selectors; "cond_m1" and "cond_m2" give
    the known-scale densities conditional on selecting the restricted and the
    full model.
    """
    rho, s1, s2, c2 = setting.rho, setting.sigma1, setting.sigma2, setting.c2
    a = math.sqrt(setting.n) * setting.theta2 / s2
    root = math.sqrt(1.0 - rho * rho)
    # density of the order-1 fit (narrower) and the full fit, at their shifts
    phi_restricted = norm_pdf((t + a * rho * s1) / (s1 * root)) / (s1 * root)
    phi_full = norm_pdf(t / s1) / s1

    def keep_prob(s: float):
        return delta(1.0, a, s * c2)

    def drop_given_t(s: float):
        return 1.0 - delta(1.0, (a + rho * t / s1) / root, s * c2 / root)

    if variant == "known":
        return phi_restricted * keep_prob(1.0) + phi_full * drop_given_t(1.0)
    if variant == "unknown":
        m = setting.n - 2
        keep = integrate_against_h(keep_prob, m, spec).value
        drop = integrate_against_h(drop_given_t, m, spec).value
        return phi_restricted * keep + phi_full * drop
    if variant == "cond_m1":
        return phi_restricted
    if variant == "cond_m2":
        return phi_full * drop_given_t(1.0) / (1.0 - keep_prob(1.0))
    raise ValueError("variant must be one of: known, unknown, cond_m1, cond_m2")
