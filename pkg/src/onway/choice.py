"""Latent-strategy logit: utilities, strategy shares and choice probabilities.

Strategy 0 is the baseline (immediacy-oriented) with strategy utility fixed
at zero; every other strategy ``s`` has its own alpha vector over
``(constant, aware, regular, morning, regular*aware*morning)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .errors import EmptyChoiceSet, IndexOutOfRange

FEATURES = ("detour", "direct", "comp", "aggl", "quality")
STRATEGY_TERMS = ("constant", "aware", "regular", "morning", "morning_commute")


@dataclass(frozen=True)
class OutletFeatures:
    detour: float
    direct: float
    comp: float
    aggl: float
    quality: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("features must be finite")
        if self.comp < 0:
            raise ValueError("comp must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.detour, self.direct, self.comp, self.aggl, self.quality], dtype=float)


@dataclass(frozen=True)
class StrategyContext:
    regular: bool = False
    aware_before: bool = False
    morning: bool = False

    def as_array(self) -> np.ndarray:
        r, a, m = float(self.regular), float(self.aware_before), float(self.morning)
        return np.array([1.0, a, r, m, r * a * m])


def context_matrix(regular, aware_before, morning) -> np.ndarray:
    """Stack strategy covariates for many trips into an ``(n, 5)`` array."""
    r = np.asarray(regular, dtype=float)
    a = np.asarray(aware_before, dtype=float)
    m = np.asarray(morning, dtype=float)
    return np.column_stack([np.ones_like(r), a, r, m, r * a * m])


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Per-strategy outlet coefficients and strategy-selection coefficients.

    ``betas`` has shape ``(S, 5)``; ``alphas`` has shape ``(S - 1, 5)``.
    ``sigmas`` holds random-coefficient standard deviations for mixed logit.
    """

    betas: np.ndarray
    alphas: np.ndarray | None = None
    sigmas: np.ndarray | None = None

    def __post_init__(self):
        betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if betas.shape[1] != len(FEATURES) or betas.shape[0] < 1:
            raise ValueError(f"betas must have shape (S, 5), got {betas.shape}")
        s = betas.shape[0]
        if self.alphas is None:
            alphas = np.zeros((0, len(STRATEGY_TERMS)))
        else:
            alphas = np.atleast_2d(np.asarray(self.alphas, dtype=float)).reshape(-1, len(STRATEGY_TERMS))
        if alphas.shape[0] != s - 1:
            raise ValueError(f"{s} strategies need {s - 1} alpha vectors, got {alphas.shape[0]}")
        sigmas = None if self.sigmas is None else np.asarray(self.sigmas, dtype=float).reshape(len(FEATURES))
        for arr in (betas, alphas) + ((sigmas,) if sigmas is not None else ()):
            if not np.all(np.isfinite(arr)):
                raise ValueError("coefficients must be finite")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def n_strategies(self) -> int:
        return self.betas.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CoefficientSet):
            return NotImplemented
        same_sig = (self.sigmas is None) == (other.sigmas is None) and (
            self.sigmas is None or np.array_equal(self.sigmas, other.sigmas)
        )
        return (
            np.array_equal(self.betas, other.betas)
            and np.array_equal(self.alphas, other.alphas)
            and same_sig
        )

    def canonical(self) -> "CoefficientSet":
        """Reorder strategies by detour coefficient, least negative first.

        The new baseline gets utility zero, so the alphas are re-expressed
        relative to it.
        """
        if self.n_strategies == 1:
            return self
        order = np.argsort(-self.betas[:, 0], kind="stable")
        full = np.vstack([np.zeros(len(STRATEGY_TERMS)), self.alphas])
        full = full[order] - full[order[0]]
        return CoefficientSet(self.betas[order], full[1:], self.sigmas)


def systematic_utility(beta, f) -> float:
    x = f.as_array() if isinstance(f, OutletFeatures) else np.asarray(f, dtype=float)
    return float(np.dot(np.asarray(beta, dtype=float), x))


def strategy_utility(alpha, z) -> float:
    zz = z.as_array() if isinstance(z, StrategyContext) else np.asarray(z, dtype=float)
    return float(np.dot(np.asarray(alpha, dtype=float), zz))


def log_strategy_probabilities(alphas: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """``(n, S)`` log shares for covariates ``Z`` of shape ``(n, 5)``."""
    u = np.column_stack([np.zeros(len(Z)), Z @ np.asarray(alphas).T])
    m = u.max(axis=1, keepdims=True)
    return u - m - np.log(np.exp(u - m).sum(axis=1, keepdims=True))


def strategy_probabilities(coeffs: CoefficientSet, z) -> np.ndarray:
    zz = z.as_array() if isinstance(z, StrategyContext) else np.asarray(z, dtype=float)
    if coeffs.n_strategies == 1:
        return np.ones(1)
    if coeffs.n_strategies == 2:
        p = expit(float(coeffs.alphas[0] @ zz))
        return np.array([1.0 - p, p])
    return np.exp(log_strategy_probabilities(coeffs.alphas, zz[None, :])[0])


def _feature_matrix(features) -> np.ndarray:
    if len(features) == 0:
        raise EmptyChoiceSet("choice set is empty")
    if isinstance(features, np.ndarray):
        return features.reshape(-1, len(FEATURES)).astype(float)
    return np.array(
        [f.as_array() if isinstance(f, OutletFeatures) else np.asarray(f, float) for f in features]
    )


def log_conditional(betas: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Log choice probabilities under each strategy.

    ``X`` is ``(..., J, 5)``; ``betas`` is ``(S, 5)``. Returns ``(S, ..., J)``.
    """
    v = np.einsum("...jk,sk->s...j", X, betas)
    return v - logsumexp(v, axis=-1, keepdims=True)


def conditional_choice_probabilities(beta, features) -> np.ndarray:
    X = _feature_matrix(features)
    return np.exp(log_conditional(np.atleast_2d(beta), X)[0])


def choice_probabilities(coeffs: CoefficientSet, z, features) -> np.ndarray:
    X = _feature_matrix(features)
    q = strategy_probabilities(coeffs, z)
    p = np.exp(log_conditional(coeffs.betas, X))
    return q @ p


def posterior_strategy(coeffs: CoefficientSet, z, features, chosen: int) -> np.ndarray:
    X = _feature_matrix(features)
    if not 0 <= chosen < len(X):
        raise IndexOutOfRange(f"chosen index {chosen} outside choice set of size {len(X)}")
    zz = z.as_array() if isinstance(z, StrategyContext) else np.asarray(z, dtype=float)
    logq = log_strategy_probabilities(coeffs.alphas, zz[None, :])[0]
    logp = log_conditional(coeffs.betas, X)[:, chosen]
    joint = logq + logp
    return np.exp(joint - logsumexp(joint))


def table1_coefficients(family: str = "latent2") -> CoefficientSet:
    """Published point estimates for the empirical model family."""
    if family == "latent2":
        return CoefficientSet(
            betas=[[-0.34, -0.93, -0.03, -1.00, 0.13], [-10.84, 0.77, -0.31, 6.38, 0.18]],
            alphas=[[-1.40, 1.30, -0.67, -0.47, 1.07]],
        )
    if family == "single":
        return CoefficientSet([[-1.15, -0.46, -0.14, -0.03, 0.12]])
    if family == "xgravity":
        return CoefficientSet([[0.0, -0.73, -0.62, -0.01, 0.10]])
    if family == "gravity":
        # pure gravity is unreported; its distance and quality mirror xgravity
        return CoefficientSet([[0.0, -0.73, 0.0, 0.0, 0.10]])
    if family == "mixed":
        return CoefficientSet(
            [[-2.12, -0.52, -0.07, 0.30, 0.13]], sigmas=[0.90, 0.40, 0.01, 0.20, 0.00]
        )
    raise ValueError(f"no published coefficients for {family!r}")
