"""Regression design, nested model family, and derived moment quantities.

The model is Y = X theta + u with u ~ N(0, sigma^2 I_n) and a fixed n x P
design of full column rank.  Candidate models are nested by order: model p
keeps the first p regressors.  Every deterministic quantity needed by the
distribution formulas is a function of the scaled Gram matrix Q = X'X/n (plus
n), which is why the helpers here take a Gram matrix directly; the
large-sample module reuses them verbatim with the limit matrix in place of
X'X/n.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "IllConditionedError",
    "RegressionDesign",
    "SelectionFamily",
    "TargetFunctional",
    "ParameterPoint",
    "GaussianComponent",
    "order_of",
    "restricted_ls_mean",
    "xi",
    "conditional_quantities",
    "gaussian_component",
    "xi_from_gram",
    "conditional_from_gram",
    "component_covariance",
    "mean_adjustment",
    "scaled_omitted_bias",
    "design_from_gram",
    "load_design_csv",
]

# Relative singular-value threshold used for all numerical rank decisions.
_RANK_REL_TOL = np.finfo(float).eps

# Computed zeta^2 values within ZETA_CLAMP of 0 are snapped to 0 so exactly
# degenerate cases (perfectly predicted test statistic) land on the
# indicator branch despite roundoff; values below -ZETA_CLAMP signal a
# broken input.
_ZETA_CLAMP = 1e-12


class IllConditionedError(ValueError):
    """A required sub-Gram matrix is numerically singular."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _numerical_rank(a: np.ndarray) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    tol = max(a.shape) * _RANK_REL_TOL * s[0]
    return int(np.sum(s > tol))


@dataclass(frozen=True, eq=False)
class RegressionDesign:
    """Fixed n x P regressor matrix with n > P >= 1 and full column rank."""

    X: np.ndarray

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.ndim != 2:
            raise ValueError("X must be a 2-D matrix")
        n, P = X.shape
        if not (n > P >= 1):
            raise ValueError(f"need n > P >= 1, got n={n}, P={P}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X must be finite")
        if _numerical_rank(X) < P:
            raise ValueError("X must have full column rank")
        object.__setattr__(self, "X", _readonly(X))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def P(self) -> int:
        return self.X.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        return _readonly(self.X.T @ self.X / self.n)


@dataclass(frozen=True)
class SelectionFamily:
    """Nested family of candidate orders {min_order, ..., P} with test thresholds.

    ``criticals[i]`` is the threshold c_p for order p = min_order + 1 + i; the
    threshold at the minimal order is fixed at zero, so the smallest candidate
    is always admissible.
    """

    min_order: int
    criticals: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "criticals", tuple(float(c) for c in self.criticals))
        if self.min_order < 0:
            raise ValueError("min_order must be >= 0")
        if len(self.criticals) == 0:
            raise ValueError("need at least one tested order above min_order")
        for c in self.criticals:
            if not (0.0 < c < np.inf):
                raise ValueError("thresholds must be positive and finite")

    @property
    def P(self) -> int:
        return self.min_order + len(self.criticals)

    def critical(self, p: int) -> float:
        if p == self.min_order:
            return 0.0
        if self.min_order < p <= self.P:
            return self.criticals[p - self.min_order - 1]
        raise ValueError(f"order {p} outside [{self.min_order}, {self.P}]")

    @property
    def orders(self) -> range:
        return range(self.min_order, self.P + 1)


@dataclass(frozen=True, eq=False)
class TargetFunctional:
    """Rank-k k x P matrix defining the linear transform of interest."""

    A: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        k, P = A.shape
        if not (1 <= k <= P):
            raise ValueError(f"need 1 <= k <= P, got k={k}, P={P}")
        if not np.all(np.isfinite(A)):
            raise ValueError("A must be finite")
        if _numerical_rank(A) < k:
            raise ValueError("A must have full row rank")
        object.__setattr__(self, "A", _readonly(A))

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def P(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class ParameterPoint:
    """True coefficient vector and error scale."""

    theta: np.ndarray
    sigma: float

    def __post_init__(self) -> None:
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.ndim != 1 or not np.all(np.isfinite(theta)):
            raise ValueError("theta must be a finite vector")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError("sigma must be positive and finite")
        object.__setattr__(self, "theta", _readonly(theta))
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One Gaussian mixture component of the post-selection distribution.

    ``mean_shift`` is the scaled bias of the order-p restricted fit mapped
    through the target transform; ``covariance`` is the (possibly singular)
    k x k covariance of the transform of the order-p fit; ``rank`` its
    numerical rank (0 encodes a point mass at ``mean_shift``).
    """

    mean_shift: np.ndarray
    covariance: np.ndarray
    rank: int

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean_shift, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        k = mean.size
        if cov.shape != (k, k):
            raise ValueError("covariance shape must match mean_shift length")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=1e-10):
            raise ValueError("covariance must be symmetric")
        if self.rank < 0 or self.rank > k:
            raise ValueError("rank out of range")
        object.__setattr__(self, "mean_shift", _readonly(mean))
        object.__setattr__(self, "covariance", _readonly(cov))

    @property
    def k(self) -> int:
        return self.mean_shift.size


def order_of(theta) -> int:
    """Index of the smallest nested model containing theta (exact zero test)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    nz = np.nonzero(theta)[0]
    return int(nz[-1] + 1) if nz.size else 0


def _leading_solve(gram: np.ndarray, p: int, rhs: np.ndarray) -> np.ndarray:
    """Solve gram[:p, :p] x = rhs via Cholesky; raises on numerical non-PD."""
    try:
        chol = cho_factor(gram[:p, :p], lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"leading {p} x {p} Gram block is singular") from exc
    return cho_solve(chol, rhs)


def mean_adjustment(gram: np.ndarray, p: int) -> np.ndarray:
    """p x (P-p) block Q[:p,:p]^{-1} Q[:p,p:] mapping excluded to included means."""
    P = gram.shape[0]
    if p == 0 or p == P:
        return np.zeros((p, P - p))
    return _leading_solve(gram, p, gram[:p, p:])


def scaled_omitted_bias(gram: np.ndarray, tail: np.ndarray, p: int) -> np.ndarray:
    """Bias vector of the order-p fit induced by excluded components ``tail``.

    Returns the length-P vector (Q[:p,:p]^{-1} Q[:p,p:] tail, -tail).  Feeding
    tail = sqrt(n) * theta[p:] gives the scaled finite-sample bias of the
    restricted fit; feeding the tail of a limiting local parameter gives the
    large-sample bias.
    """
    P = gram.shape[0]
    tail = np.asarray(tail, dtype=float)
    if tail.shape != (P - p,):
        raise ValueError("tail must have length P - p")
    out = np.zeros(P)
    if p < P:
        out[p:] = -tail
        if p > 0:
            out[:p] = mean_adjustment(gram, p) @ tail
    return out


def restricted_ls_mean(design: RegressionDesign, theta, p: int) -> np.ndarray:
    """Expected value of the order-p restricted least-squares estimator.

    First p entries theta[:p] + Q[:p,:p]^{-1} Q[:p,p:] theta[p:], rest zero;
    the zero vector at p = 0 and theta itself at p = P.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    P = design.P
    if theta.shape != (P,):
        raise ValueError(f"theta must have length {P}")
    if not 0 <= p <= P:
        raise ValueError(f"order {p} outside [0, {P}]")
    out = np.zeros(P)
    if p > 0:
        out[:p] = theta[:p] + mean_adjustment(design.gram, p) @ theta[p:]
    return out


def xi_from_gram(gram: np.ndarray, p: int) -> float:
    """sqrt of the (p,p) entry of the inverse leading p x p Gram block."""
    P = gram.shape[0]
    if not 0 < p <= P:
        raise ValueError(f"order {p} outside (0, {P}]")
    e = np.zeros(p)
    e[-1] = 1.0
    val = float(_leading_solve(gram, p, e)[-1])
    return float(np.sqrt(val))


def xi(design: RegressionDesign, p: int) -> float:
    """Scale of the p-th coefficient estimate in the order-p fit (times sqrt(n)/sigma)."""
    return xi_from_gram(design.gram, p)


def conditional_from_gram(gram: np.ndarray, A: np.ndarray, p: int):
    """Regression quantities of the p-th coefficient on the transformed fit.

    Returns (C, b, zeta_sq): C is the covariance vector between the
    transformed order-p fit and its p-th coefficient, b the conditional
    regression row (Moore-Penrose generalized inverse), and zeta_sq the
    conditional variance factor xi^2 - b C, clamped at zero when roundoff
    makes an exactly degenerate case slightly negative.
    """
    P = gram.shape[0]
    if not 0 < p <= P:
        raise ValueError(f"order {p} outside (0, {P}]")
    Ap = np.atleast_2d(np.asarray(A, dtype=float))[:, :p]
    e = np.zeros(p)
    e[-1] = 1.0
    S_e = _leading_solve(gram, p, e)
    C = Ap @ S_e
    M = Ap @ _leading_solve(gram, p, Ap.T)
    M = 0.5 * (M + M.T)
    b = C @ np.linalg.pinv(M, rcond=max(M.shape) * _RANK_REL_TOL)
    zeta_sq = xi_from_gram(gram, p) ** 2 - float(b @ C)
    if zeta_sq <= -_ZETA_CLAMP:
        raise IllConditionedError(
            f"conditional variance factor {zeta_sq} significantly negative"
        )
    if abs(zeta_sq) < _ZETA_CLAMP:
        zeta_sq = 0.0
    return C, b, zeta_sq


def conditional_quantities(design: RegressionDesign, target: TargetFunctional, p: int):
    """Conditional-regression quantities (C, b, zeta_sq) for the order-p fit."""
    return conditional_from_gram(design.gram, target.A, p)


def component_covariance(gram: np.ndarray, A: np.ndarray, sigma: float, p: int) -> np.ndarray:
    """sigma^2 A[:p] (gram[:p,:p])^{-1} A[:p]' (k x k, zero matrix at p = 0)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    k = A.shape[0]
    if p == 0:
        return np.zeros((k, k))
    Ap = A[:, :p]
    cov = sigma**2 * (Ap @ _leading_solve(gram, p, Ap.T))
    return 0.5 * (cov + cov.T)


def gaussian_component(
    design: RegressionDesign,
    target: TargetFunctional,
    params: ParameterPoint,
    p: int,
) -> GaussianComponent:
    """Gaussian component of the order-p fit: scaled-bias mean shift and covariance."""
    P = design.P
    if not 0 <= p <= P:
        raise ValueError(f"order {p} outside [0, {P}]")
    rootn = np.sqrt(design.n)
    eta = restricted_ls_mean(design, params.theta, p)
    mean_shift = rootn * (target.A @ (eta - params.theta))
    cov = component_covariance(design.gram, target.A, params.sigma, p)
    rank = 0 if p == 0 else _numerical_rank(target.A[:, :p])
    return GaussianComponent(mean_shift=mean_shift, covariance=cov, rank=rank)


def design_from_gram(n: int, gram: np.ndarray, seed: int = 0) -> RegressionDesign:
    """Deterministic n x P design with X'X/n equal to ``gram`` (up to roundoff).

    Columns are built from an orthonormal basis (QR of a seeded Philox draw)
    scaled by a Cholesky factor of n * gram.
    """
    gram = np.atleast_2d(np.asarray(gram, dtype=float))
    P = gram.shape[0]
    if n <= P:
        raise ValueError("need n > P")
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    basis, _ = np.linalg.qr(gen.standard_normal((n, P)))
    try:
        chol = np.linalg.cholesky(n * gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError("gram must be symmetric positive definite") from exc
    return RegressionDesign(basis @ chol.T)


def load_design_csv(path) -> RegressionDesign:
    """Design matrix from a headerless CSV, one observation per row."""
    X = np.loadtxt(path, delimiter=",", ndmin=2)
    return RegressionDesign(X)
