"""General-to-specific model selection and its exact selection probabilities.

The selector tests the highest-order coefficient first: starting from the
full model, order p is selected if its t-ratio clears the threshold c_p and
all higher-order t-ratios failed theirs; if nothing rejects down to the
minimal order, the minimal order is selected.  The residual scale is always
estimated from the full model.  A companion "known scale" selector replaces
the estimate by the true sigma, which makes every t-ratio exactly Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import DEFAULT_SPEC, QuadratureSpec
from .mixture import MixtureEngine
from .model import (
    ParameterPoint,
    RegressionDesign,
    SelectionFamily,
    restricted_ls_mean,
    xi_from_gram,
)

__all__ = [
    "DegenerateResidualError",
    "SelectionOutcome",
    "select_model",
    "select_model_known_sigma",
    "selection_prob_known",
    "selection_prob_unknown",
    "restricted_fit_operators",
    "selection_engine",
]


class DegenerateResidualError(RuntimeError):
    """Y lies exactly in the column space of X (probability zero under the model)."""


@dataclass(frozen=True, eq=False)
class SelectionOutcome:
    """Selected order with the full set of test statistics.

    ``t_stats[p]`` is the t-ratio of order p for 1 <= p <= P (t_stats[0] = 0);
    only entries at orders above the minimal one enter the selection rule.
    ``sigma_hat`` is the scale actually used in the ratios: the full-model
    residual estimate, or the supplied sigma for the known-scale selector.
    """

    p_hat: int
    t_stats: np.ndarray
    sigma_hat: float


def restricted_fit_operators(design: RegressionDesign):
    """Per-order least-squares solve operators from the QR of each leading block.

    Returns a list whose p-th entry (1-based) is the (p, n) matrix mapping Y
    to the nonzero coefficients of the order-p restricted fit.  Recomputed per
    order; the number of candidate orders is small.
    """
    ops = [None]
    for p in range(1, design.P + 1):
        q, r = np.linalg.qr(design.X[:, :p])
        ops.append(solve_triangular(r, q.T))
    return ops


def _tstats_and_scale(design, Y, scale=None):
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (design.n,):
        raise ValueError(f"Y must have length {design.n}")
    ops = restricted_fit_operators(design)
    coef_full = ops[design.P] @ Y
    if scale is None:
        resid = Y - design.X @ coef_full
        rss = float(resid @ resid)
        scale = np.sqrt(rss / (design.n - design.P))
        # degenerate up to roundoff: Y lies in the span of X
        if np.sqrt(rss) <= 1e-12 * max(1.0, float(np.linalg.norm(Y))):
            # an all-zero fit still gives the well-defined ratios 0;
            # anything else has no meaningful t-ratios
            if np.any(coef_full != 0.0):
                raise DegenerateResidualError("zero residual: Y lies in the span of X")
            return np.zeros(design.P + 1), 0.0
    rootn = np.sqrt(design.n)
    t = np.zeros(design.P + 1)
    for p in range(1, design.P + 1):
        coef_p = ops[p] @ Y if p < design.P else coef_full
        t[p] = rootn * coef_p[p - 1] / (scale * xi_from_gram(design.gram, p))
    return t, float(scale)


def _largest_admissible(family: SelectionFamily, t: np.ndarray) -> int:
    for p in range(family.P, family.min_order, -1):
        if abs(t[p]) >= family.critical(p):
            return p
    return family.min_order


def select_model(Y, design: RegressionDesign, family: SelectionFamily) -> SelectionOutcome:
    """Data-driven selected order using the full-model residual scale estimate."""
    if family.P != design.P:
        raise ValueError("family order range inconsistent with design")
    t, scale = _tstats_and_scale(design, Y)
    return SelectionOutcome(p_hat=_largest_admissible(family, t), t_stats=t, sigma_hat=scale)


def select_model_known_sigma(
    Y, design: RegressionDesign, family: SelectionFamily, sigma: float
) -> SelectionOutcome:
    """Idealized selected order using the true error scale in the t-ratios."""
    if family.P != design.P:
        raise ValueError("family order range inconsistent with design")
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    t, scale = _tstats_and_scale(design, Y, scale=float(sigma))
    return SelectionOutcome(p_hat=_largest_admissible(family, t), t_stats=t, sigma_hat=scale)


def selection_engine(
    design: RegressionDesign,
    family: SelectionFamily,
    params: ParameterPoint,
    h_df: int | None,
) -> MixtureEngine:
    """Weights-only mixture engine at the given parameters (no target transform)."""
    if family.P != design.P:
        raise ValueError("family order range inconsistent with design")
    rootn = np.sqrt(design.n)
    O = family.min_order
    centers = {
        q: rootn * restricted_ls_mean(design, params.theta, q)[q - 1]
        for q in range(O + 1, design.P + 1)
    }
    return MixtureEngine(
        gram=design.gram,
        sigma=params.sigma,
        family=family,
        p_lo=O,
        center_args=centers,
        h_df=h_df,
    )


def selection_prob_known(
    design: RegressionDesign,
    family: SelectionFamily,
    params: ParameterPoint,
    p: int,
) -> float:
    """Exact probability that the known-scale selector picks order p."""
    return selection_engine(design, family, params, h_df=None).weight(p).value


def selection_prob_unknown(
    design: RegressionDesign,
    family: SelectionFamily,
    params: ParameterPoint,
    p: int,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float:
    """Exact probability that the data-driven selector picks order p.

    Smooths the known-scale acceptance probabilities against the scaled-chi
    law of the residual scale estimate (n - P degrees of freedom).
    """
    engine = selection_engine(design, family, params, h_df=design.n - design.P)
    return engine.weight(p, spec).value
