"""Quasi-likelihood of the model and its concentrated form.

The quasi log-likelihood splits into a return part and a measurement part.
Per day, minus twice the return part is

    p log 2pi + sum_i log h_{i,t} + log det C_t + z_t' C_t^{-1} z_t,

and the measurement innovations u_t = (v_t', vc_t')' are Gaussian with a
free covariance Sigma. Concentrating Sigma out at its maximizer
Sigma_hat = T^{-1} sum_t u_t u_t' collapses the measurement part to
-(T/2) log det Sigma_hat plus constants, because
sum_t u_t' Sigma_hat^{-1} u_t = T m identically (m the measurement
dimension). The optimizer works with the concentrated objective

    -(1/2) sum_t [ sum_i log h_{i,t} + log det C_t + z_t' C_t^{-1} z_t ]
    -(T/2) log det Sigma_hat,

and LogLikReport records the omitted constant -(T/2)(c_p + c_m + m), with
c_n = n log 2pi, so that the full quasi log-likelihood is
objective + constant. Block-structured specifications evaluate
log det C_t and the quadratic form through the O(p + b^3) companion
closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import block_logdet_many, block_quadform_many
from .errors import ArgumentError, NumericalError, RankError
from .model import (
    Dataset,
    FilterEngine,
    InitialState,
    ModelParams,
    StateSeries,
    filter_states,
    initial_state_from_data,
)

LOG_2PI = float(np.log(2.0 * np.pi))


def return_loglik(states: StateSeries) -> np.ndarray:
    """Per-day return log-likelihood (T,), constants included.

    Uses the block companion closed forms when the states carry block
    means, the dense path otherwise.
    """
    t_len, p = states.log_h.shape
    if states.block_means is not None and states.partition is not None:
        logdet = block_logdet_many(states.block_means, states.partition)
        quad = block_quadform_many(states.block_means, states.z, states.partition)
    else:
        logdet = states.logdet_corr
        quad = np.einsum(
            "tp,tp->t", states.z,
            np.linalg.solve(states.corr, states.z[..., None])[..., 0],
        )
    core = states.log_h.sum(axis=1) + logdet + quad
    if not np.all(np.isfinite(core)):
        raise NumericalError("return likelihood is not finite")
    return -0.5 * (p * LOG_2PI + core)


def concentrate_sigma(u: np.ndarray) -> np.ndarray:
    """Maximum-likelihood measurement covariance T^{-1} sum u_t u_t'.

    No mean is subtracted: the measurement equations already carry
    intercepts. The result can be singular (e.g. constant residuals give a
    rank-one matrix); consumers that need its log-determinant raise the
    rank error. Fewer rows than columns cannot identify the covariance and
    raise here.
    """
    u = np.asarray(u, dtype=float)
    t_len, m = u.shape
    if t_len < m:
        raise RankError(
            f"{t_len} observations cannot identify a {m}x{m} covariance"
        )
    return u.T @ u / t_len


@dataclass
class LogLikReport:
    """Value and bookkeeping of the quasi log-likelihood at one parameter point.

    ``total`` is the full quasi log-likelihood with all constants,
    ``objective`` the concentrated value the optimizer sees, and
    ``constant = total - objective`` the omitted term
    -(T/2)(c_p + c_m + m). ``return_part`` and ``measurement_part`` add up
    to ``total`` exactly.
    """

    objective: float
    total: float
    return_part: float
    measurement_part: float
    constant: float
    sigma: np.ndarray
    per_t_return: np.ndarray
    t_len: int
    m: int


def evaluate_states(states: StateSeries) -> LogLikReport:
    """Likelihood pieces from filtered states."""
    t_len, p = states.log_h.shape
    per_t = return_loglik(states)
    u = states.u
    m = u.shape[1]
    sigma = concentrate_sigma(u)
    sign, ld_sigma = np.linalg.slogdet(sigma)
    if sign <= 0.0:
        raise RankError("measurement residual covariance is singular")
    return_part = float(per_t.sum())
    # sum_t u' Sigma^{-1} u = T m at the concentrated Sigma
    measurement_part = -0.5 * t_len * (m * LOG_2PI + ld_sigma + m)
    constant = -0.5 * t_len * (p * LOG_2PI + m * LOG_2PI + m)
    total = return_part + measurement_part
    objective = total - constant
    if not np.isfinite(objective):
        raise NumericalError("log-likelihood is not finite")
    return LogLikReport(
        objective=objective,
        total=total,
        return_part=return_part,
        measurement_part=measurement_part,
        constant=constant,
        sigma=sigma,
        per_t_return=per_t,
        t_len=t_len,
        m=m,
    )


def loglik_report(
    params: ModelParams,
    data: Dataset,
    init: InitialState | None = None,
    engine: FilterEngine | None = None,
) -> LogLikReport:
    """Filter and evaluate in one call."""
    if engine is None:
        engine = FilterEngine(data, params.loading, params.dynamic,
                              params.measurement)
    return evaluate_states(engine.run(params, init))


def concentrated_objective(
    params: ModelParams,
    data: Dataset,
    init: InitialState | None = None,
    engine: FilterEngine | None = None,
) -> float:
    """The scalar the estimator maximizes."""
    return loglik_report(params, data, init, engine).objective


def predictive_return_loglik(
    params: ModelParams,
    data: Dataset,
    split: int,
    init: InitialState | None = None,
) -> np.ndarray:
    """Out-of-sample per-day return log-likelihood.

    Filters the full sample from the in-sample initial state, so the
    recursion is warm at the split, and returns the per-day return
    log-likelihood for t >= split. Comparable across specifications with
    different measurement dimensions.
    """
    if not 0 < split < data.T:
        raise ArgumentError(
            f"split must lie strictly inside the sample, got {split} of {data.T}"
        )
    if init is None:
        init = initial_state_from_data(data.window(0, split), params.loading)
    states = filter_states(params, data, init)
    return return_loglik(states)[split:]
