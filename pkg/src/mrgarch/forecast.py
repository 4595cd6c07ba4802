"""Multi-step covariance forecasts, minimum-variance portfolios, backtests.

One-step-ahead covariances are measurable functions of the filtered state
and need no simulation. Beyond one step the conditional distribution has
no closed form, so ``multi_step_forecast`` propagates the recursions
through simulated innovation paths and summarizes the draws.

The backtest follows one fixed scheme on purpose: daily rebalancing into
the global minimum-variance portfolio implied by the one-step-ahead
covariance, compared against the equal-weight portfolio. Returns are
treated as daily percentages; annualized columns scale by sqrt(252).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import default_rng
from scipy.special import ndtri

from .blocks import Loading, block_vec_to_corr_many
from .corrmap import vec_to_corr_many
from .errors import ArgumentError, DataError, DomainError
from .likelihood import concentrate_sigma, return_loglik
from .model import (
    Dataset,
    InitialState,
    ModelParams,
    OneStepForecast,
    StateSeries,
    advance_state,
    filter_states,
    initial_state_from_data,
    leverage,
    one_step_forecast,
)

__all__ = [
    "ForecastDistribution",
    "multi_step_forecast",
    "gmv_weights",
    "equal_weights",
    "ModelBacktest",
    "BacktestReport",
    "backtest",
    "qq_points",
]

FORECAST_MODES = ("gaussian", "bootstrap")
QUANTILE_LEVELS = (0.05, 0.25, 0.50, 0.75, 0.95)


def _corr_from_zeta(zeta: np.ndarray, loading: Loading) -> np.ndarray:
    """Correlation matrices for a batch of transformed state vectors."""
    if loading.partition is not None:
        return block_vec_to_corr_many(zeta, loading)[0]
    return vec_to_corr_many(loading.expand(zeta))


def _psd_factor(sigma: np.ndarray) -> np.ndarray:
    """Square root of a possibly rank-deficient covariance matrix."""
    w, vec = np.linalg.eigh(np.asarray(sigma, dtype=float))
    w = np.clip(w, 0.0, None)
    return vec * np.sqrt(w)


def _variance_quantiles(values: np.ndarray) -> dict[str, float]:
    qs = np.quantile(values, QUANTILE_LEVELS)
    return {f"q{int(round(100 * lev)):02d}": float(q)
            for lev, q in zip(QUANTILE_LEVELS, qs)}


@dataclass
class ForecastDistribution:
    """Simulated distribution of the covariance matrix ``horizon`` days out.

    ``draws`` stacks one covariance matrix per simulated path. ``mean`` is
    their pointwise average. The quantile tables summarize two scalar
    functionals of each draw: the variance of the global minimum-variance
    portfolio and the variance of the equal-weight portfolio.
    """

    horizon: int
    mode: str
    draws: np.ndarray
    mean: np.ndarray
    gmv_variance: dict[str, float]
    equal_variance: dict[str, float]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


def _summarize(horizon: int, mode: str, draws: np.ndarray) -> ForecastDistribution:
    p = draws.shape[-1]
    gmv_var = 1.0 / np.linalg.solve(draws, np.ones((p, 1))).sum(axis=(-2, -1))
    eq_var = draws.sum(axis=(-2, -1)) / p**2
    return ForecastDistribution(
        horizon=horizon,
        mode=mode,
        draws=draws,
        mean=draws.mean(axis=0),
        gmv_variance=_variance_quantiles(gmv_var),
        equal_variance=_variance_quantiles(eq_var),
    )


def multi_step_forecast(
    params: ModelParams,
    data: Dataset,
    horizon: int,
    mode: str = "gaussian",
    n_draws: int = 500,
    seed: int = 0,
    init: InitialState | None = None,
    states: StateSeries | None = None,
) -> ForecastDistribution:
    """Simulate the covariance matrix ``horizon`` days past the sample end.

    At horizon one the forecast is deterministic and every draw equals the
    ``one_step_forecast`` covariance. Deeper horizons advance the
    recursions along simulated innovation paths: ``"gaussian"`` draws
    return and measurement innovations from their fitted Gaussian laws,
    ``"bootstrap"`` resamples joint residual rows (z_t, u_t) from the
    filtered sample with replacement, preserving their cross-sectional
    dependence without a distributional assumption.

    Pass precomputed ``states`` to amortize filtering across calls.
    """
    if horizon < 1:
        raise ArgumentError(f"horizon must be at least 1, got {horizon}")
    if mode not in FORECAST_MODES:
        raise ArgumentError(f"mode must be one of {FORECAST_MODES}, got {mode!r}")
    if n_draws < 1:
        raise ArgumentError(f"n_draws must be at least 1, got {n_draws}")
    if states is None:
        states = filter_states(params, data, init)
    one = one_step_forecast(params, data, states=states)
    if horizon == 1:
        draws = np.broadcast_to(one.cov, (n_draws,) + one.cov.shape).copy()
        return _summarize(horizon, mode, draws)

    rng = default_rng(seed)
    p, k = data.p, params.k
    sigma = params.sigma if params.sigma is not None else concentrate_sigma(states.u)
    factor = _psd_factor(sigma) if mode == "gaussian" else None
    m = states.u.shape[1]

    log_h = np.broadcast_to(np.log(one.h), (n_draws, p)).copy()
    zeta = np.broadcast_to(one.zeta, (n_draws, k)).copy()
    for _ in range(horizon - 1):
        corr = _corr_from_zeta(zeta, params.loading)
        if mode == "gaussian":
            z = np.einsum("nij,nj->ni", np.linalg.cholesky(corr),
                          rng.standard_normal((n_draws, p)))
            u = rng.standard_normal((n_draws, m)) @ factor.T
        else:
            rows = rng.integers(0, data.T, size=n_draws)
            z = states.z[rows]
            u = states.u[rows]
        log_x = (params.xi + params.phi * log_h
                 + leverage(z, params.delta1, params.delta2) + u[:, :p])
        if not params.dynamic:
            y_check = np.empty((n_draws, 0))
        elif params.measurement == "condensed":
            y_check = params.c_xi + params.c_phi * zeta + u[:, p:]
        else:
            y_full = (params.c_xi + params.c_phi * params.loading.expand(zeta)
                      + u[:, p:])
            y_check = params.loading.condense(y_full)
        log_h, zeta = advance_state(params, log_h, z, log_x, zeta, y_check)

    corr = _corr_from_zeta(zeta, params.loading)
    s = np.exp(0.5 * log_h)
    draws = s[:, :, None] * corr * s[:, None, :]
    return _summarize(horizon, mode, draws)


def gmv_weights(cov: np.ndarray) -> np.ndarray:
    """Global minimum-variance weights  H^{-1} 1 / (1' H^{-1} 1).

    The weights sum to one and may be negative (short positions are
    allowed). Raises DomainError when the matrix is singular.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ArgumentError(f"covariance must be square, got shape {cov.shape}")
    ones = np.ones(cov.shape[0])
    try:
        raw = np.linalg.solve(cov, ones)
    except np.linalg.LinAlgError as exc:
        raise DomainError("covariance matrix is singular") from exc
    total = raw.sum()
    if not np.isfinite(total) or total == 0.0:
        raise DomainError("covariance matrix is numerically singular")
    return raw / total


def equal_weights(p: int) -> np.ndarray:
    """The 1/p portfolio."""
    if p < 1:
        raise ArgumentError(f"need at least one asset, got {p}")
    return np.full(p, 1.0 / p)


@dataclass
class ModelBacktest:
    """Out-of-sample record for one weighting rule.

    ``portfolio_returns`` are daily percentages; ``mean_squared`` is their
    average square in daily percent squared, ``ann_volatility`` its
    annualized square root, and ``mean_abs_annualized`` the average
    absolute return scaled by sqrt(252). The log-likelihood columns are
    NaN for the equal-weight row, which has no fitted model behind it.
    ``yearly`` maps calendar years to per-year mean squared returns and
    observation counts.
    """

    label: str
    portfolio_returns: np.ndarray
    mean_squared: float
    mean_abs_annualized: float
    ann_volatility: float
    mean_return_loglik: float
    relative_loglik: float
    yearly: dict[str, dict[str, float]]


@dataclass
class BacktestReport:
    split: int
    baseline: str
    models: list[ModelBacktest]
    equal_weight: ModelBacktest


def _year_keys(data: Dataset, split: int) -> np.ndarray:
    if data.dates is None:
        return np.full(data.T - split, "all")
    return np.array([d[:4] for d in data.dates[split:]])


def _yearly_table(returns: np.ndarray, years: np.ndarray) -> dict[str, dict[str, float]]:
    table: dict[str, dict[str, float]] = {}
    for year in sorted(set(years.tolist())):
        sub = returns[years == year]
        table[year] = {"mean_squared": float(np.mean(sub**2)),
                       "n": int(sub.size)}
    return table


def _model_record(label, rets, years, mean_ll, rel_ll) -> ModelBacktest:
    mean_sq = float(np.mean(rets**2))
    return ModelBacktest(
        label=label,
        portfolio_returns=rets,
        mean_squared=mean_sq,
        mean_abs_annualized=float(np.mean(np.abs(rets)) * np.sqrt(252.0)),
        ann_volatility=float(np.sqrt(252.0 * mean_sq)),
        mean_return_loglik=mean_ll,
        relative_loglik=rel_ll,
        yearly=_yearly_table(rets, years),
    )


def backtest(
    fits,
    data: Dataset,
    split: int,
    labels: list[str] | None = None,
    baseline: int = 0,
) -> BacktestReport:
    """Daily-rebalanced minimum-variance backtest over ``data[split:]``.

    Each fitted model is filtered over the full sample (warm from its own
    initial state, or a moment one built on the in-sample window) and its
    one-step-ahead covariance sets that day's global minimum-variance
    weights. Lower realized portfolio variance means better covariance
    forecasts, since every rule trades the same assets. The report also
    carries each model's mean out-of-sample return log-likelihood and its
    gap to the baseline model's. Deterministic given the fits.
    """
    if not fits:
        raise ArgumentError("need at least one fitted model")
    if not 0 < split < data.T:
        raise ArgumentError(
            f"split must lie strictly inside the sample, got {split} of {data.T}"
        )
    if not 0 <= baseline < len(fits):
        raise ArgumentError(f"baseline index {baseline} out of range")
    if labels is not None and len(labels) != len(fits):
        raise ArgumentError("one label per fit required")

    years = _year_keys(data, split)
    r_oos = data.returns[split:]
    ones = np.ones((data.p, 1))

    records = []
    logliks = []
    for i, fit in enumerate(fits):
        params = getattr(fit, "params", fit)
        init = getattr(fit, "init_state", None)
        if init is None:
            init = initial_state_from_data(data.window(0, split), params.loading)
        states = filter_states(params, data, init)
        s = np.exp(0.5 * states.log_h[split:])
        covs = s[:, :, None] * states.corr[split:] * s[:, None, :]
        try:
            raw = np.linalg.solve(covs, ones)[..., 0]
        except np.linalg.LinAlgError as exc:
            raise DomainError("singular one-step covariance in backtest") from exc
        weights = raw / raw.sum(axis=1, keepdims=True)
        rets = np.einsum("tp,tp->t", weights, r_oos)
        if labels is not None:
            label = labels[i]
        else:
            spec = getattr(fit, "spec", None)
            if spec is not None:
                kind = "dynamic" if spec.dynamic else "static"
                label = f"{spec.structure}-{kind}"
            else:
                label = f"model-{i}"
        logliks.append(float(np.mean(return_loglik(states)[split:])))
        records.append((label, rets))

    base_ll = logliks[baseline]
    models = [
        _model_record(label, rets, years, ll, ll - base_ll)
        for (label, rets), ll in zip(records, logliks)
    ]
    eq_rets = r_oos @ equal_weights(data.p)
    equal = _model_record("equal-weight", eq_rets, years,
                          float("nan"), float("nan"))
    return BacktestReport(split=split, baseline=models[baseline].label,
                          models=models, equal_weight=equal)


def qq_points(series: np.ndarray) -> np.ndarray:
    """Normal quantile-quantile pairs for a scalar series.

    Centers by the sample mean and scales by the sample standard
    deviation divided by the standard deviation of the reference
    quantiles themselves. The correction factor tends to one as T grows
    and makes the map exact in finite samples: a series whose order
    statistics are an affine image of the reference quantiles lands on
    the 45-degree line, not merely near it. Returns a (T, 2) array with
    the quantiles at probabilities (i - 0.5) / T in column 0 and the
    standardized empirical order statistics in column 1.
    """
    series = np.asarray(series, dtype=float).ravel()
    t_len = series.size
    if t_len < 10:
        raise ArgumentError(f"need at least 10 observations, got {t_len}")
    if not np.all(np.isfinite(series)):
        raise DataError("series contains non-finite values")
    sd = series.std(ddof=1)
    if sd == 0.0 or np.ptp(series) == 0.0:
        raise DataError("series has zero variance")
    theoretical = ndtri((np.arange(1, t_len + 1) - 0.5) / t_len)
    scale = sd / theoretical.std(ddof=1)
    empirical = np.sort((series - series.mean()) / scale)
    return np.column_stack([theoretical, empirical])
