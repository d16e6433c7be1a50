"""
Special functions and closed-form constants for PD-power genealogies.

Thin validated wrappers over scipy.special plus the asymptotic constants of the
Poisson-Dirichlet power-weight model. Every Gamma-ratio formula is evaluated in
log space and exponentiated last.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
EM_ORACLE_N = 100_000
EM_ORACLE_TOLERANCE = 1e-8
THEOREM_RANGE_RULE = "alpha/2 < gamma <= alpha"


@dataclass(frozen=True)
class PDParams:
    """Poisson-Dirichlet parameters (alpha, theta) and the power exponent gamma."""

    alpha: float
    theta: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.theta > -self.alpha:
            raise ValueError(f"theta must satisfy theta > -alpha, got theta={self.theta}, alpha={self.alpha}")
        if not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")

    @property
    def in_theorem_range(self) -> bool:
        return self.alpha / 2.0 < self.gamma <= self.alpha

    def require_theorem_range(self) -> None:
        if not self.in_theorem_range:
            raise ValueError(f"gamma={self.gamma} with alpha={self.alpha} violates {THEOREM_RANGE_RULE}")

    def shifted(self, dtheta: float) -> PDParams:
        return replace(self, theta=self.theta + dtheta)


def _require_positive(name: str, x: float) -> None:
    if not (math.isfinite(x) and x > 0.0):
        raise ValueError(f"{name} requires a positive argument, got {x}")


def log_gamma(x: float) -> float:
    _require_positive("log_gamma", x)
    return float(special.gammaln(x))


def digamma(x: float) -> float:
    _require_positive("digamma", x)
    return float(special.digamma(x))


def log_beta(a: float, b: float) -> float:
    """log B(a, b); arguments are ordered first so B(a, b) == B(b, a) bit for bit."""
    _require_positive("log_beta", a)
    _require_positive("log_beta", b)
    lo, hi = sorted((a, b))
    return float(special.betaln(lo, hi))


def beta_fn(a: float, b: float) -> float:
    return math.exp(log_beta(a, b))


def beta_moment(a: float, b: float, k: int) -> float:
    """E[X^k] for X ~ Beta(a, b)."""
    return math.prod((a + j) / (a + b + j) for j in range(k))


def em_const_partial_sum(a: float, N: int) -> float:
    """-log N + sum_{i=1}^N 1/(a+i), the sequence defining the constant kappa_a."""
    terms = 1.0 / (a + np.arange(1, N + 1, dtype=float))
    return math.fsum(terms) - math.log(N)


def em_const_oracle(a: float, N: int = EM_ORACLE_N) -> float:
    """Richardson extrapolation of the partial sums (cancels the 1/N defect)."""
    return 2.0 * em_const_partial_sum(a, 2 * N) - em_const_partial_sum(a, N)


@lru_cache(maxsize=256)
def _validate_em_identity(a: float) -> None:
    closed = -float(special.digamma(a + 1.0))
    oracle = em_const_oracle(a)
    if abs(closed - oracle) > EM_ORACLE_TOLERANCE:
        raise ArithmeticError(f"-digamma(a+1) = {closed!r} disagrees with the partial-sum limit {oracle!r} at a={a}")
    logger.debug("em_const identity validated at a=%s (|diff|=%.3e)", a, abs(closed - oracle))


def em_const(a: float) -> float:
    """
    The constant kappa_a = lim (-log N + sum_{i<=N} 1/(a+i)).

    Evaluated as -digamma(a+1). That closed form is derived here, not given by
    the defining limit, so the first call for each ``a`` checks it against the
    extrapolated partial sums.
    """
    if not a > -1.0:
        raise ValueError(f"em_const requires a > -1, got {a}")
    _validate_em_identity(float(a))
    return -float(special.digamma(a + 1.0))


def log_k_const(p: PDParams) -> float:
    return digamma(p.theta + 1.0) + em_const(p.theta / p.alpha) / p.alpha


def k_const(p: PDParams) -> float:
    """
    K_{alpha,theta} = exp{psi(theta+1) + kappa_{theta/alpha}/alpha}.

    The sign of the kappa term is the one for which
    e^{gamma mu_N} alpha^gamma K^{-gamma} N^{-gamma(1-alpha)/alpha} -> 1.
    """
    return math.exp(log_k_const(p))


def ell_inverse(p: PDParams) -> float:
    """1/ell_{alpha,theta,gamma} from the displayed Gamma/Beta product."""
    p.require_theorem_range()
    a, t, g = p.alpha, p.theta, p.gamma
    if not -a < t < a:
        raise ValueError(f"ell_const requires -alpha < theta < alpha, got theta={t}, alpha={a}")
    log_inv = (
        math.log(a / g)
        + (t / a) * log_gamma(1.0 - a)
        - (1.0 + t / a) * log_gamma(1.0 + g - a)
        + log_gamma(((a + t) / a) * (1.0 - g / a) + 1.0)
        - log_gamma((a + t) * (1.0 - g / a) + 1.0)
        + log_gamma(1.0 + t)
        + log_gamma(1.0 - t / a)
        - log_beta(1.0 - t / a, 1.0 + t / a)
    )
    return math.exp(log_inv)


def ell_const(p: PDParams) -> float:
    return 1.0 / ell_inverse(p)


def log_exp_gamma_s_infty(p: PDParams, g: float | None = None) -> float:
    g = p.gamma if g is None else g
    if not g > -(p.theta + p.alpha):
        raise ValueError(f"E[exp(gamma S_inf)] needs gamma > -(theta+alpha), got gamma={g}")
    a, t = p.alpha, p.theta
    return (
        g * log_k_const(p)
        + log_gamma(t + 1.0)
        - log_gamma(t + g + 1.0)
        + log_gamma((t + g) / a + 1.0)
        - log_gamma(t / a + 1.0)
    )


def exp_gamma_s_infty(p: PDParams, g: float | None = None) -> float:
    """E[e^{g S_inf}], with g defaulting to ``p.gamma``."""
    return math.exp(log_exp_gamma_s_infty(p, g))


def expected_y_power(p: PDParams, i: np.ndarray | int, g: float | None = None) -> np.ndarray:
    """E[Y_i^g] for Y_i ~ Beta(1-alpha, theta+i*alpha), vectorized over i."""
    g = p.gamma if g is None else g
    if not 1.0 + g - p.alpha > 0.0:
        raise ValueError(f"E[Y^g] needs 1 + g - alpha > 0, got g={g}")
    second = p.theta + np.asarray(i, dtype=float) * p.alpha
    return np.exp(special.betaln(1.0 + g - p.alpha, second) - special.betaln(1.0 - p.alpha, second))


def pd_sum_limit_mean(p: PDParams) -> float:
    """Limit of E[zeta_{N,gamma}]/u_N: Gamma(1+gamma-alpha)/Gamma(1-alpha) K^{-gamma} E[e^{gamma S_inf}]."""
    return math.exp(
        log_gamma(1.0 + p.gamma - p.alpha)
        - log_gamma(1.0 - p.alpha)
        - p.gamma * log_k_const(p)
        + log_exp_gamma_s_infty(p)
    )


@dataclass(frozen=True)
class EMConstants:
    """The two candidate limits of c_N * sum_{i<=N} i^{-kappa} for the exponential model."""

    displayed: float
    specialized: float

    @property
    def coincide(self) -> bool:
        return abs(self.displayed - self.specialized) <= 1e-9 * max(abs(self.displayed), abs(self.specialized))


def em_model_params(beta: float, kappa: float) -> PDParams:
    if not beta > 1.0:
        raise ValueError(f"beta must satisfy beta > 1, got {beta}")
    if not 0.5 < kappa <= 1.0:
        raise ValueError(f"kappa must lie in (1/2, 1], got {kappa}")
    return PDParams(alpha=1.0 / beta, theta=0.0, gamma=kappa / beta)


def em_theorem_constants(beta: float, kappa: float) -> EMConstants:
    params = em_model_params(beta, kappa)
    displayed = math.exp(
        log_gamma(2.0 - kappa)
        - math.log(kappa)
        - log_gamma(1.0 - (1.0 - kappa) / beta)
        - log_gamma(1.0 + (1.0 + kappa) / beta)
    )
    return EMConstants(displayed=displayed, specialized=ell_inverse(params))
