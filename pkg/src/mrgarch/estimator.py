"""Quasi-maximum-likelihood estimation of the joint model.

The driver maximizes the concentrated objective from
:mod:`mrgarch.likelihood` over the packed parameter vector with L-BFGS-B,
using forward finite-difference gradients. Invalid parameter regions
(diverged recursions, non-positive-definite correlation candidates,
singular measurement covariance) contribute a large penalty instead of
raising, so line searches can back off and recover. Multiple jittered
starts guard against bad local optima; runs are deterministic for a fixed
spec and seed.

``two_stage_estimate`` first fits each asset's variance and
variance-measurement parameters on its own univariate series, then fixes
those and maximizes over the correlation parameters only. The joint
estimate dominates it by construction but the two-stage route is much
cheaper in high dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .blocks import BlockPartition, Loading, identity_loading, loading_matrix
from .errors import (
    ArgumentError,
    DataError,
    DimensionError,
    EstimationError,
    GarchError,
)
from .likelihood import LogLikReport, loglik_report
from .model import (
    Dataset,
    FilterEngine,
    InitialState,
    ModelParams,
    initial_state_from_data,
)

PENALTY = 1.0e12

VARIANCE_FIELDS = (
    "mu", "omega", "beta", "gamma", "tau1", "tau2",
    "xi", "phi", "delta1", "delta2",
)

STRUCTURES = ("equi", "block", "free")


@dataclass
class EstimationSpec:
    """What to estimate and how to drive the optimizer.

    ``structure`` picks the correlation parametrization: "equi" is a single
    block containing every asset, "block" uses the given partition, "free"
    gives every correlation its own coordinate. Combined with ``dynamic``
    this spans the six standard specifications. ``init`` chooses whether
    the initial states are fixed to sample averages or estimated as extra
    parameters.
    """

    structure: str = "free"
    partition: BlockPartition | None = None
    dynamic: bool = True
    measurement: str = "condensed"
    init: str = "fixed"
    multistarts: int = 3
    seed: int = 0
    max_iter: int = 200
    ftol: float = 1e-8
    fd_step: float = 1e-6
    jitter: float = 0.02

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ArgumentError(
                f"structure must be one of {STRUCTURES}, got {self.structure!r}"
            )
        if self.structure == "block" and self.partition is None:
            raise ArgumentError("block structure requires a partition")
        if self.measurement not in ("condensed", "full"):
            raise ArgumentError(
                f"measurement must be 'condensed' or 'full', got {self.measurement!r}"
            )
        if self.init not in ("fixed", "estimated"):
            raise ArgumentError(
                f"init must be 'fixed' or 'estimated', got {self.init!r}"
            )
        if self.multistarts < 1:
            raise ArgumentError("multistarts must be at least 1")
        if self.max_iter < 1:
            raise ArgumentError("max_iter must be at least 1")

    def loading_for(self, p: int) -> Loading:
        if self.structure == "free":
            return identity_loading(p)
        if self.structure == "equi":
            return loading_matrix(BlockPartition((p,)))
        if self.partition.p != p:
            raise DimensionError(
                f"partition covers {self.partition.p} assets, data has {p}"
            )
        return loading_matrix(self.partition)


def init_params(data: Dataset, spec: EstimationSpec) -> ModelParams:
    """Moment-based starting values.

    Persistence starts sit inside the range of typical estimates
    (beta = 0.6, gamma = 0.3 for variances; 0.7 and 0.2 for correlations)
    and the intercepts are chosen so the implied stationary level matches
    the sample mean of the corresponding measure.
    """
    p = data.p
    loading = spec.loading_for(p)
    for name, arr in (("return", data.returns),
                      ("log realized variance", data.log_x)):
        spread = arr.max(axis=0) - arr.min(axis=0)
        if np.any(spread == 0.0):
            col = int(np.flatnonzero(spread == 0.0)[0])
            raise DataError(f"{name} column {col} is constant")
    beta = np.full(p, 0.6)
    gamma = np.full(p, 0.3)
    omega = (1.0 - beta - gamma) * data.log_x.mean(axis=0)
    mean_yc = loading.condense(data.y).mean(axis=0)
    extra = {}
    if spec.dynamic:
        n_meas = loading.k if spec.measurement == "condensed" else loading.d
        c_beta, c_gamma, c_phi_level = 0.7, 0.2, 1.0
        c_omega = (1.0 - c_beta - c_gamma * c_phi_level) * mean_yc
        extra = dict(
            c_beta=np.full(loading.k, c_beta),
            c_gamma=np.full(loading.k, c_gamma),
            c_xi=np.zeros(n_meas),
            c_phi=np.full(n_meas, c_phi_level),
        )
    else:
        c_omega = mean_yc
    return ModelParams(
        mu=data.returns.mean(axis=0),
        omega=omega, beta=beta, gamma=gamma,
        tau1=np.zeros(p), tau2=np.zeros(p),
        xi=np.zeros(p), phi=np.ones(p),
        delta1=np.zeros(p), delta2=np.full(p, 0.05),
        c_omega=c_omega, loading=loading,
        dynamic=spec.dynamic, measurement=spec.measurement, **extra,
    )


class ParamPacking:
    """Flat optimizer layout for the full parameter set.

    Field-major: the ten variance fields (length p each), then c_omega (k),
    then for dynamic specs c_beta (k), c_gamma (k), c_xi and c_phi (k, or d
    under the full measurement mode). When the initial state is estimated,
    log h_1 (p) and, for dynamic specs, zeta_1 (k) are appended; the
    variance enters in logs so every packed coordinate is unconstrained.
    """

    def __init__(self, p: int, loading: Loading, dynamic: bool,
                 measurement: str, estimate_init: bool):
        self.p = p
        self.loading = loading
        self.dynamic = dynamic
        self.measurement = measurement
        self.estimate_init = estimate_init
        k = loading.k
        n_meas = k if measurement == "condensed" else loading.d
        names = [(f, p) for f in VARIANCE_FIELDS]
        names.append(("c_omega", k))
        if dynamic:
            names += [("c_beta", k), ("c_gamma", k),
                      ("c_xi", n_meas), ("c_phi", n_meas)]
        if estimate_init:
            names.append(("log_h1", p))
            if dynamic:
                names.append(("zeta1", k))
        self.slices: dict[str, slice] = {}
        offset = 0
        for nm, sz in names:
            self.slices[nm] = slice(offset, offset + sz)
            offset += sz
        self.size = offset

    def pack(self, params: ModelParams, init: InitialState) -> np.ndarray:
        theta = np.empty(self.size)
        for nm, sl in self.slices.items():
            if nm == "log_h1":
                theta[sl] = np.log(init.h1)
            elif nm == "zeta1":
                theta[sl] = init.zeta1
            else:
                theta[sl] = getattr(params, nm)
        return theta

    def unpack(self, theta: np.ndarray) -> tuple[ModelParams, InitialState | None]:
        kw = {nm: theta[sl].copy() for nm, sl in self.slices.items()
              if nm not in ("log_h1", "zeta1")}
        params = ModelParams(loading=self.loading, dynamic=self.dynamic,
                             measurement=self.measurement, **kw)
        init = None
        if self.estimate_init:
            h1 = np.exp(theta[self.slices["log_h1"]])
            zeta1 = (theta[self.slices["zeta1"]].copy()
                     if self.dynamic else np.zeros(self.loading.k))
            init = InitialState(h1, zeta1)
        return params, init


class CorrPacking:
    """Stage-two layout: correlation parameters on top of a fixed base.

    Unpacking replaces only the correlation fields of the base parameter
    set, so the variance paths stay cached across evaluations. With an
    estimated initial state only zeta_1 is appended; the variance initials
    are pinned to the stage-one values.
    """

    def __init__(self, base: ModelParams, estimate_init: bool,
                 fixed_h1: np.ndarray):
        self.base = base
        self.estimate_init = estimate_init and base.dynamic
        self.fixed_h1 = np.asarray(fixed_h1, dtype=float)
        k = base.k
        names = [("c_omega", k)]
        if base.dynamic:
            n_meas = k if base.measurement == "condensed" else base.d
            names += [("c_beta", k), ("c_gamma", k),
                      ("c_xi", n_meas), ("c_phi", n_meas)]
        if self.estimate_init:
            names.append(("zeta1", k))
        self.slices: dict[str, slice] = {}
        offset = 0
        for nm, sz in names:
            self.slices[nm] = slice(offset, offset + sz)
            offset += sz
        self.size = offset

    def pack(self, params: ModelParams, init: InitialState) -> np.ndarray:
        theta = np.empty(self.size)
        for nm, sl in self.slices.items():
            theta[sl] = init.zeta1 if nm == "zeta1" else getattr(params, nm)
        return theta

    def unpack(self, theta: np.ndarray) -> tuple[ModelParams, InitialState | None]:
        kw = {nm: theta[sl].copy() for nm, sl in self.slices.items()
              if nm != "zeta1"}
        params = replace(self.base, **kw)
        init = None
        if self.estimate_init:
            init = InitialState(self.fixed_h1,
                                theta[self.slices["zeta1"]].copy())
        return params, init


@dataclass
class FitResult:
    """Estimation output: parameters, concentrated covariance, likelihood
    report, and optimizer diagnostics."""

    params: ModelParams
    sigma: np.ndarray
    init_state: InitialState
    report: LogLikReport
    objective: float
    spec: EstimationSpec
    theta: np.ndarray
    diagnostics: dict
    packing: object = field(repr=False, default=None)


class _ObjectiveFn:
    """Negated concentrated objective with an invalid-region penalty."""

    def __init__(self, data: Dataset, packing, engine: FilterEngine,
                 fixed_init: InitialState):
        self.data = data
        self.packing = packing
        self.engine = engine
        self.fixed_init = fixed_init
        self.n_evals = 0

    def __call__(self, theta: np.ndarray) -> float:
        self.n_evals += 1
        try:
            params, init = self.packing.unpack(theta)
            if init is None:
                init = self.fixed_init
            value = loglik_report(params, self.data, init, self.engine).objective
        except (GarchError, np.linalg.LinAlgError):
            return PENALTY
        if not np.isfinite(value):
            return PENALTY
        return -value


def _fd_fun_and_grad(fun, theta: np.ndarray, rel_step: float):
    """Forward differences reusing the center evaluation; falls back to a
    backward difference when the forward bump leaves the feasible region."""
    f0 = fun(theta)
    grad = np.zeros_like(theta)
    if f0 >= PENALTY:
        return f0, grad
    for i in range(theta.size):
        step = rel_step * max(1.0, abs(theta[i]))
        bumped = theta.copy()
        bumped[i] += step
        fi = fun(bumped)
        if fi >= PENALTY:
            bumped[i] = theta[i] - step
            fb = fun(bumped)
            grad[i] = (f0 - fb) / step if fb < PENALTY else 0.0
        else:
            grad[i] = (fi - f0) / step
    return f0, grad


def _run_start(objfn, theta0: np.ndarray, spec: EstimationSpec):
    trace: list[float] = []

    def callback(xk):
        trace.append(-objfn(xk))

    res = minimize(
        lambda th: _fd_fun_and_grad(objfn, th, spec.fd_step),
        theta0, jac=True, method="L-BFGS-B", callback=callback,
        options={"maxiter": spec.max_iter, "ftol": spec.ftol},
    )
    return res, trace


def _multistart(objfn, theta0: np.ndarray, spec: EstimationSpec):
    rng = np.random.default_rng(spec.seed)
    starts = [theta0.copy()]
    scale = np.maximum(1.0, np.abs(theta0))
    for _ in range(1, spec.multistarts):
        cand = theta0
        for _attempt in range(20):
            cand = theta0 + spec.jitter * scale * rng.standard_normal(theta0.size)
            if objfn(cand) < PENALTY:
                break
        starts.append(cand)
    best = None
    start_values = []
    for idx, theta_s in enumerate(starts):
        res, trace = _run_start(objfn, theta_s, spec)
        start_values.append(-float(res.fun))
        if best is None or res.fun < best[1].fun:
            best = (idx, res, trace)
    return best, start_values


def _solve(data: Dataset, spec: EstimationSpec, packing, engine: FilterEngine,
           fixed_init: InitialState, theta0: np.ndarray,
           extra_diagnostics: dict | None = None) -> FitResult:
    objfn = _ObjectiveFn(data, packing, engine, fixed_init)
    f_start = objfn(theta0)
    (best_idx, res, trace), start_values = _multistart(objfn, theta0, spec)
    if not np.isfinite(res.fun) or res.fun >= PENALTY:
        raise EstimationError("no start produced a finite objective")
    params_hat, init_hat = packing.unpack(res.x)
    if init_hat is None:
        init_hat = fixed_init
    report = loglik_report(params_hat, data, init_hat, engine)
    params_hat.sigma = report.sigma
    diagnostics = {
        "start_objectives": start_values,
        "best_start": best_idx,
        "iterations": int(res.nit),
        "n_evals": objfn.n_evals,
        "termination": str(res.message),
        "objective_trace": [float(v) for v in trace],
        "init_objective": -float(f_start) if f_start < PENALTY else float("-inf"),
    }
    if extra_diagnostics:
        diagnostics.update(extra_diagnostics)
    return FitResult(
        params=params_hat, sigma=report.sigma, init_state=init_hat,
        report=report, objective=float(report.objective), spec=spec,
        theta=np.asarray(res.x, dtype=float).copy(),
        diagnostics=diagnostics, packing=packing,
    )


def estimate(data: Dataset, spec: EstimationSpec, *,
             start_params: ModelParams | None = None) -> FitResult:
    """Joint QMLE of all parameters by multistart L-BFGS-B."""
    loading = spec.loading_for(data.p)
    start = start_params if start_params is not None else init_params(data, spec)
    if data.T <= start.m:
        raise EstimationError(
            f"need T > {start.m} observations to concentrate the measurement "
            f"covariance, got {data.T}"
        )
    fixed_init = initial_state_from_data(data, loading)
    packing = ParamPacking(data.p, loading, spec.dynamic, spec.measurement,
                           spec.init == "estimated")
    engine = FilterEngine(data, loading, spec.dynamic, spec.measurement)
    theta0 = packing.pack(start, fixed_init)
    return _solve(data, spec, packing, engine, fixed_init, theta0)


def two_stage_estimate(data: Dataset, spec: EstimationSpec) -> FitResult:
    """Per-asset variance fits first, then correlation parameters only.

    Stage one estimates each asset's ten variance and variance-measurement
    parameters on its own univariate series. Stage two pins those (and the
    fitted variance paths, which stay cached) and maximizes the full
    objective over the correlation parameters.
    """
    p = data.p
    loading = spec.loading_for(p)
    uni_spec = EstimationSpec(
        structure="free", dynamic=False, init=spec.init,
        multistarts=spec.multistarts, seed=spec.seed, max_iter=spec.max_iter,
        ftol=spec.ftol, fd_step=spec.fd_step, jitter=spec.jitter,
    )
    stage1 = [estimate(data.asset(i), uni_spec) for i in range(p)]
    variance = {
        f: np.array([fit.params.__dict__[f][0] for fit in stage1])
        for f in VARIANCE_FIELDS
    }
    base = replace(init_params(data, spec), **variance)
    h1 = np.array([fit.init_state.h1[0] for fit in stage1])
    zeta1 = initial_state_from_data(data, loading).zeta1
    fixed_init = InitialState(h1, zeta1)
    packing = CorrPacking(base, spec.init == "estimated", h1)
    engine = FilterEngine(data, loading, spec.dynamic, spec.measurement)
    theta0 = packing.pack(base, fixed_init)
    extra = {"stage1_objectives": [fit.objective for fit in stage1]}
    return _solve(data, spec, packing, engine, fixed_init, theta0,
                  extra_diagnostics=extra)


def perturbation_check(result: FitResult, data: Dataset,
                       delta: float = 0.05, slack: float = 1e-9) -> bool:
    """Local-maximum check: no single packed coordinate moved by +-delta
    may raise the objective by more than ``slack``."""
    engine = FilterEngine(data, result.params.loading, result.spec.dynamic,
                          result.spec.measurement)
    objfn = _ObjectiveFn(data, result.packing, engine, result.init_state)
    f_hat = objfn(result.theta)
    for i in range(result.theta.size):
        for sign in (1.0, -1.0):
            bumped = result.theta.copy()
            bumped[i] += sign * delta
            if objfn(bumped) < f_hat - slack:
                return False
    return True
