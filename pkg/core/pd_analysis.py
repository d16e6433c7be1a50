"""
Stick-breaking analysis of Poisson-Dirichlet size-biased picks.

Paths of Y_i ~ Beta(1-alpha, theta+i*alpha) give the picks
V_i = (1-Y_1)...(1-Y_{i-1}) Y_i. On top of them live the normalizer u_N, the
centering mu_N, the log-stick martingale S_N = mu_N + sum log(1-Y_i), and the
split of the power sum zeta_{N,gamma} into a martingale and a predictable part.
Everything per path is carried in log space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, partial
from typing import NamedTuple

import numpy as np
from opentelemetry import trace
from scipy import special

from core.montecarlo import EstimateWithError, difference_zscore, run_replicates
from core.reporting import (
    Z_TOLERANCE,
    CheckReport,
    CheckRow,
    absolute_row,
    info_row,
    make_report,
    relative_row,
    statistical_row,
)
from core.special_fn import (
    PDParams,
    beta_moment,
    digamma,
    exp_gamma_s_infty,
    expected_y_power,
    pd_sum_limit_mean,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

IDENTITY_RTOL = 1e-9


def _log_gamma_variates(rng: np.random.Generator, shape: np.ndarray) -> np.ndarray:
    """log of Gamma(shape) draws; shapes below 1 use G_a = G_{a+1} U^{1/a} so tiny draws never underflow."""
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    out = np.log(rng.standard_gamma(np.where(small, shape + 1.0, shape)))
    if small.any():
        u = 1.0 - rng.random(shape.shape)
        out = out + np.where(small, np.log(u) / shape, 0.0)
    return out


@dataclass(frozen=True, eq=False)
class StickBreakingPath:
    """One path Y_1..Y_N with derived picks, martingale values and centerings."""

    params: PDParams
    log_y: np.ndarray
    log_1my: np.ndarray

    @property
    def N(self) -> int:
        return int(self.log_y.size)

    @cached_property
    def Y(self) -> np.ndarray:
        return np.exp(self.log_y)

    @cached_property
    def log_prefix(self) -> np.ndarray:
        """sum_{j<i} log(1-Y_j), i.e. S_{i-1} - mu_{i-1}."""
        return np.concatenate(([0.0], np.cumsum(self.log_1my)[:-1]))

    @cached_property
    def log_v(self) -> np.ndarray:
        return self.log_y + self.log_prefix

    @cached_property
    def V(self) -> np.ndarray:
        return np.exp(self.log_v)

    @cached_property
    def mu(self) -> np.ndarray:
        return mu_sequence(self.params, self.N)

    @cached_property
    def S(self) -> np.ndarray:
        return self.mu + np.cumsum(self.log_1my)


def stick_breaking(params: PDParams, N: int, rng: np.random.Generator) -> StickBreakingPath:
    """
    Sample Y_1..Y_N through the Gamma-ratio representation.

    Y = G1/(G1+G2) with G1 ~ Gamma(1-alpha), G2 ~ Gamma(theta+i*alpha); log Y and
    log(1-Y) are formed from the log-Gamma draws so neither loses precision when
    Y concentrates near 0 for large i.
    """
    if N < 1:
        raise ValueError(f"stick_breaking needs N >= 1, got {N}")
    i = np.arange(1, N + 1, dtype=float)
    lg1 = _log_gamma_variates(rng, np.full(N, 1.0 - params.alpha))
    lg2 = _log_gamma_variates(rng, params.theta + i * params.alpha)
    total = np.logaddexp(lg1, lg2)
    return StickBreakingPath(params=params, log_y=lg1 - total, log_1my=lg2 - total)


def u_n(params: PDParams, N: int) -> float:
    """u_N = sum_{i<=N} i^{-gamma/alpha}."""
    if N < 1:
        raise ValueError(f"u_n needs N >= 1, got {N}")
    i = np.arange(1, N + 1, dtype=float)
    return math.fsum((i ** (-params.gamma / params.alpha)).tolist())


def mu_sequence(params: PDParams, N: int) -> np.ndarray:
    """mu_1..mu_N with mu_k = psi(theta+1) - psi(theta+k*alpha) + sum_{i<k} 1/(theta+i*alpha)."""
    a, t = params.alpha, params.theta
    k = np.arange(1, N + 1, dtype=float)
    harmonic = np.concatenate(([0.0], np.cumsum(1.0 / (t + a * np.arange(1, N, dtype=float)))))
    return special.digamma(t + 1.0) - special.digamma(t + a * k) + harmonic


def mu_n(params: PDParams, N: int) -> float:
    """mu_N; equals sum_i -E[log(1-Y_i)] by the Beta log-moment identity."""
    if N < 1:
        raise ValueError(f"mu_n needs N >= 1, got {N}")
    a, t = params.alpha, params.theta
    tail = 1.0 / (t + a * np.arange(1, N, dtype=float))
    return digamma(t + 1.0) - digamma(t + N * a) + math.fsum(tail.tolist())


def exp_gamma_s_n(params: PDParams, N: int, g: float | None = None) -> float:
    """Exact E[e^{g S_N}] = e^{g mu_N} prod_i E[(1-Y_i)^g]."""
    g = params.gamma if g is None else g
    if not g > -(params.theta + params.alpha):
        raise ValueError(f"E[exp(gamma S_N)] needs gamma > -(theta+alpha), got gamma={g}")
    first = params.theta + params.alpha * np.arange(1, N + 1, dtype=float)
    log_moments = special.betaln(first + g, 1.0 - params.alpha) - special.betaln(first, 1.0 - params.alpha)
    return math.exp(g * mu_n(params, N) + math.fsum(log_moments.tolist()))


def zeta(path: StickBreakingPath, g: float) -> float:
    """zeta_{N,g} = sum_i V_i^g."""
    if g == 0.0:
        return float(path.N)
    return math.fsum(np.exp(g * path.log_v).tolist())


class ZetaDecomposition(NamedTuple):
    m_bar: float
    sigma_sum: float


def martingale_decomposition(
    path: StickBreakingPath, g: float, expected: np.ndarray | None = None
) -> ZetaDecomposition:
    """
    zeta_{N,g} = M_bar + Sigma, pathwise.

    The weight e^{-g mu_{i-1}} e^{g S_{i-1}} equals prod_{j<i} (1-Y_j)^g. M_bar
    sums (Y_i^g - E[Y_i^g]) against it, Sigma sums E[Y_i^g].
    """
    ey = expected if expected is not None else expected_y_power(path.params, np.arange(1, path.N + 1), g)
    weight = np.exp(g * path.log_prefix)
    y_g = np.exp(g * path.log_y)
    return ZetaDecomposition(
        m_bar=math.fsum(((y_g - ey) * weight).tolist()),
        sigma_sum=math.fsum((ey * weight).tolist()),
    )


def lower_bound_constant(cn: float, u: float) -> float:
    """c_N u_N^2, the constant B in c_N >= B u_N^{-2}."""
    return cn * u * u


def _exp_gamma_s_sample(params: PDParams, N: int, mu_N: float, rng: np.random.Generator) -> float:
    path = stick_breaking(params, N, rng)
    return math.exp(params.gamma * (mu_N + math.fsum(path.log_1my.tolist())))


def s_infty_check(params: PDParams, N: int, replicates: int, seed: int) -> EstimateWithError:
    """Monte Carlo mean of e^{gamma S_N}, to be held against exp_gamma_s_infty."""
    if not params.gamma > -(params.theta + params.alpha):
        raise ValueError(f"s_infty_check needs gamma > -(theta+alpha), got gamma={params.gamma}")
    if params.gamma == 0.0:
        return EstimateWithError.exact(1.0, replicates)
    with tracer.start_as_current_span("pd.s_infty_check") as span:
        span.set_attribute("N", N)
        span.set_attribute("replicates", replicates)
        fn = partial(_exp_gamma_s_sample, params, N, mu_n(params, N))
        return EstimateWithError.from_samples(run_replicates(fn, replicates, seed, "pd-s-infty"))


def _martingale_sample(params: PDParams, N: int, u_N: float, expected: np.ndarray, rng: np.random.Generator) -> float:
    m_bar = martingale_decomposition(stick_breaking(params, N, rng), params.gamma, expected).m_bar
    return (m_bar / u_N) ** 2


def martingale_ratio(params: PDParams, N: int, replicates: int, seed: int) -> EstimateWithError:
    """E[M_bar^2]/u_N^2, which vanishes as N grows."""
    with tracer.start_as_current_span("pd.martingale_ratio") as span:
        span.set_attribute("N", N)
        span.set_attribute("replicates", replicates)
        expected = expected_y_power(params, np.arange(1, N + 1), params.gamma)
        fn = partial(_martingale_sample, params, N, u_n(params, N), expected)
        return EstimateWithError.from_samples(run_replicates(fn, replicates, seed, "pd-martingale"))


def _change_of_param_sample(params: PDParams, N: int, rng: np.random.Generator) -> np.ndarray:
    base = stick_breaking(params, max(N, 2), rng)
    shifted = stick_breaking(params.shifted(params.alpha), max(N, 2), rng)
    v1 = base.V[0]
    log_rest = np.log(-np.expm1(base.log_v[0])) if v1 < 1.0 else -np.inf
    ratio = float(np.exp(base.log_v[1] - log_rest)) if v1 < 1.0 else 0.0
    w1 = shifted.V[0]
    return np.array([ratio, ratio**2, ratio**3, w1, w1**2, w1**3, float(v1 >= 1.0)])


def change_of_param_check(params: PDParams, N: int, replicates: int, seed: int) -> CheckReport:
    """V_2/(1-V_1) under (alpha, theta) against V_1 under (alpha, theta+alpha), moments 1..3."""
    with tracer.start_as_current_span("pd.change_of_param_check"):
        samples = np.array(
            run_replicates(partial(_change_of_param_sample, params, N), replicates, seed, "pd-change-of-param")
        )
    a, b = 1.0 - params.alpha, params.theta + 2.0 * params.alpha
    rows = []
    for k in (1, 2, 3):
        ratio = EstimateWithError.from_samples(samples[:, k - 1])
        shifted = EstimateWithError.from_samples(samples[:, k + 2])
        exact = beta_moment(a, b, k)
        rows.append(statistical_row(f"E[(V2/(1-V1))^{k}] under (alpha,theta)", ratio, exact))
        rows.append(statistical_row(f"E[V1^{k}] under (alpha,theta+alpha)", shifted, exact))
        z = difference_zscore(ratio, shifted)
        rows.append(
            CheckRow(
                quantity=f"moment {k}: ratio minus shifted V1",
                estimate=ratio.value - shifted.value,
                stderr=math.hypot(ratio.stderr, shifted.stderr),
                target=0.0,
                zscore=z if math.isfinite(z) else None,
                tolerance=f"|z| < {Z_TOLERANCE:g}",
                status="pass" if abs(z) < Z_TOLERANCE else "fail",
            )
        )
    rows.append(absolute_row("paths with V1 = 1", float(samples[:, 6].sum()), 0.0, 0.0))
    return make_report(
        "change-of-parameter",
        {"alpha": params.alpha, "theta": params.theta, "N": N, "replicates": replicates, "seed": seed},
        rows,
    )


def _pd_path_statistics(
    params: PDParams, N: int, mu_N: float, u_N: float, expected: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    path = stick_breaking(params, N, rng)
    g = params.gamma
    log_stick = math.fsum(path.log_1my.tolist())
    z = zeta(path, g)
    m_bar, sigma_sum = martingale_decomposition(path, g, expected)
    residual = abs(m_bar + sigma_sum - z) / z
    v2 = path.V[1] if N >= 2 else 0.0
    return np.array(
        [path.V[0], v2, -log_stick, math.exp(g * (mu_N + log_stick)), z / u_N, m_bar / u_N, sigma_sum / u_N, residual]
    )


def _second_moment(values: np.ndarray) -> tuple[float, float]:
    est = EstimateWithError.from_samples(values**2)
    return est.value, est.stderr


def pd_summary(params: PDParams, N: int, replicates: int, seed: int) -> CheckReport:
    """
    One pass of stick-breaking paths checked against every closed form.

    Rows: first picks, the centering mu_N, E[e^{gamma S_N}] (exact finite-N and
    limit), E[zeta/u_N] against its limit, E[M_bar/u_N] and the pathwise
    decomposition residual.
    """
    g = params.gamma
    with tracer.start_as_current_span("pd.summary") as span:
        span.set_attribute("N", N)
        span.set_attribute("replicates", replicates)
        mu_N, u_N = mu_n(params, N), u_n(params, N)
        expected = expected_y_power(params, np.arange(1, N + 1), g)
        fn = partial(_pd_path_statistics, params, N, mu_N, u_N, expected)
        samples = np.array(run_replicates(fn, replicates, seed, "pd-paths"))

    est = [EstimateWithError.from_samples(samples[:, j]) for j in range(samples.shape[1] - 1)]
    a, t = params.alpha, params.theta
    rows = [
        statistical_row("E[V1]", est[0], (1.0 - a) / (1.0 + t), N=N),
        statistical_row("mu_N (Monte Carlo centering)", est[2], mu_N, N=N),
        statistical_row("E[exp(gamma S_N)] (exact at N)", est[3], exp_gamma_s_n(params, N), N=N),
        info_row("E[exp(gamma S_inf)] (limit)", est[3].value, est[3].stderr, exp_gamma_s_infty(params), N=N),
        statistical_row("E[M_bar/u_N]", est[5], 0.0, N=N),
        info_row("E[(M_bar/u_N)^2]", *_second_moment(samples[:, 5]), N=N),
        info_row("E[Sigma/u_N]", est[6].value, est[6].stderr, N=N),
        absolute_row("max decomposition residual (relative)", float(samples[:, -1].max()), 0.0, IDENTITY_RTOL, N=N),
    ]
    if N >= 2:
        ev2 = (1.0 - (1.0 - a) / (1.0 + t)) * (1.0 - a) / (1.0 + t + a)
        rows.insert(1, statistical_row("E[V2]", est[1], ev2, N=N))
    if params.alpha / 2.0 < g <= params.alpha:
        target = pd_sum_limit_mean(params)
        rows.append(relative_row("E[zeta/u_N] vs limit", est[4].value, target, 0.05, est[4].stderr, N=N))
    else:
        rows.append(info_row("E[zeta/u_N]", est[4].value, est[4].stderr, N=N))
    return make_report(
        "pd",
        {"alpha": a, "theta": t, "gamma": g, "N": N, "replicates": replicates, "seed": seed},
        rows,
    )


def _zeta_pair_sample(params: PDParams, n_small: int, n_large: int, rng: np.random.Generator) -> np.ndarray:
    path = stick_breaking(params, n_large, rng)
    terms = np.exp(params.gamma * path.log_v)
    small = math.fsum(terms[:n_small].tolist())
    large = math.fsum(terms.tolist())
    return np.array([small, large, float(large >= small)])


def zeta_stability(params: PDParams, n_small: int, n_large: int, replicates: int, seed: int) -> CheckReport:
    """For gamma > alpha, zeta_{N,gamma} is non-decreasing in N and its mean settles."""
    if not params.gamma > params.alpha:
        raise ValueError("zeta_stability applies to gamma > alpha")
    samples = np.array(
        run_replicates(partial(_zeta_pair_sample, params, n_small, n_large), replicates, seed, "pd-zeta-stability")
    )
    small = EstimateWithError.from_samples(samples[:, 0])
    large = EstimateWithError.from_samples(samples[:, 1])
    delta = large.value - small.value
    rows = [
        info_row("E[zeta]", small.value, small.stderr, N=n_small),
        info_row("E[zeta]", large.value, large.stderr, N=n_large),
        absolute_row("mean increment between N values", delta, 0.0, 3.0 * large.stderr),
        absolute_row("paths with zeta decreasing in N", float(replicates - samples[:, 2].sum()), 0.0, 0.0),
    ]
    return make_report(
        "zeta-stability",
        {"alpha": params.alpha, "theta": params.theta, "gamma": params.gamma, "replicates": replicates, "seed": seed},
        rows,
    )
