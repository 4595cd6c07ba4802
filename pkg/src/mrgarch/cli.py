"""Command-line driver: simulate | estimate | filter | forecast | backtest | qq.

Every command reads an optional TOML or JSON config file and applies
explicit flags on top of it. Outputs are deterministic: a fixed seed
reproduces every result file byte for byte, because nothing here writes
timestamps. Exit codes: 0 on success, 1 on data or usage errors, 2 on
numerical, estimation, or dimension errors. Failures print one
machine-readable JSON line to stderr with an error code and message.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from .blocks import BlockPartition, loading_matrix
from .errors import ArgumentError, DataError, GarchError
from .estimator import estimate, two_stage_estimate
from .forecast import backtest, multi_step_forecast, qq_points
from .likelihood import return_loglik
from .model import filter_states, initial_state_from_data
from .simulate import SimConfig, preset_params, realized_matrices, simulate

__all__ = ["main", "run"]


def _emit_error(exc: Exception) -> None:
    code = type(exc).__name__.removesuffix("Error").lower() or "error"
    line = json.dumps({"error": code, "message": str(exc)}, sort_keys=True)
    print(line, file=sys.stderr)


def _parse_partition(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ArgumentError(f"cannot parse partition {text!r}") from None
    return sizes


def _merge_config(args) -> mio.RunConfig:
    """Config file first, explicit flags on top, dataclass defaults below."""
    config = mio.load_config(args.config) if args.config else mio.RunConfig()
    overrides = {}
    for field in dataclasses.fields(mio.RunConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    if overrides.get("partition") is not None:
        overrides["partition"] = _parse_partition(overrides["partition"])
    if overrides.get("labels") is not None:
        overrides["labels"] = tuple(overrides["labels"])
    return dataclasses.replace(config, **overrides)


def _require(config: mio.RunConfig, *names: str) -> None:
    for name in names:
        if getattr(config, name) is None:
            raise ArgumentError(f"missing required setting: {name}")


def _out_dir(config: mio.RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _asset_names(p: int) -> tuple[str, ...]:
    return tuple(f"A{i + 1}" for i in range(p))


def _load_dataset(config: mio.RunConfig):
    _require(config, "returns", "realized")
    return mio.load_dataset(config.returns, config.realized,
                            repair=config.repair_nonpd)


def _resolve_split(config: mio.RunConfig, data) -> int:
    if config.split is None:
        raise ArgumentError("missing required setting: split")
    split = config.split
    if isinstance(split, str) and not split.lstrip("-").isdigit():
        if data.dates is None or split not in data.dates:
            raise ArgumentError(f"split date {split!r} not in the sample")
        return data.dates.index(split)
    return int(split)


def _cmd_simulate(args) -> int:
    config = _merge_config(args)
    if config.partition is not None:
        truth = preset_params(BlockPartition(config.partition))
    elif config.p is not None:
        truth = preset_params(p=config.p)
    else:
        raise ArgumentError("simulate needs a partition or an asset count")
    data, _ = simulate(SimConfig(truth, t_len=config.t_len, seed=config.seed,
                                 burn_in=config.burn_in))
    out = _out_dir(config)
    assets = _asset_names(data.p)
    mio.write_returns(out / "returns.csv", data.dates, data.returns, assets)
    mio.write_realized(out / "realized.csv", data.dates,
                       realized_matrices(data), assets)
    mio.save_params(out / "truth.json", truth)
    mio.write_json(out / "simulate.json", {
        "t_len": config.t_len, "seed": config.seed, "burn_in": config.burn_in,
        "p": data.p, "partition": (list(config.partition)
                                   if config.partition else None),
    })
    print(f"wrote returns.csv, realized.csv, truth.json in {out}")
    return 0


def _cmd_estimate(args) -> int:
    config = _merge_config(args)
    data = _load_dataset(config)
    spec = config.estimation_spec()
    fit = two_stage_estimate(data, spec) if config.two_stage \
        else estimate(data, spec)
    out = _out_dir(config)
    mio.save_fit(out / "fit.json", fit)
    print(f"objective {fit.objective:.6f} after "
          f"{fit.diagnostics['iterations']} iterations; wrote {out / 'fit.json'}")
    return 0


def _cmd_filter(args) -> int:
    config = _merge_config(args)
    data = _load_dataset(config)
    params, init = mio.load_fit_params(args.params)
    if init is None:
        init = initial_state_from_data(data, params.loading)
    states = filter_states(params, data, init)
    per_day = return_loglik(states)
    out = _out_dir(config)
    dates = data.dates if data.dates is not None else \
        tuple(str(t) for t in range(data.T))
    header = ["date"] + [f"h_{name}" for name in _asset_names(data.p)] \
        + [f"zeta_{j + 1}" for j in range(params.k)] + ["return_loglik"]
    lines = [",".join(header)]
    h = states.h
    for t in range(data.T):
        cells = [dates[t]]
        cells += [repr(float(v)) for v in h[t]]
        cells += [repr(float(v)) for v in states.zeta[t]]
        cells.append(repr(float(per_day[t])))
        lines.append(",".join(cells))
    (out / "states.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out / 'states.csv'} ({data.T} rows)")
    return 0


def _cmd_forecast(args) -> int:
    config = _merge_config(args)
    data = _load_dataset(config)
    params, init = mio.load_fit_params(args.params)
    if init is None:
        init = initial_state_from_data(data, params.loading)
    dist = multi_step_forecast(params, data, horizon=config.horizon,
                               mode=config.mode, n_draws=config.draws,
                               seed=config.seed, init=init)
    out = _out_dir(config)
    mio.write_json(out / "forecast.json", {
        "horizon": dist.horizon,
        "mode": dist.mode,
        "n_draws": dist.n_draws,
        "mean_covariance": dist.mean.tolist(),
        "gmv_variance": dist.gmv_variance,
        "equal_variance": dist.equal_variance,
    })
    print(f"wrote {out / 'forecast.json'} "
          f"(horizon {dist.horizon}, {dist.n_draws} draws)")
    return 0


def _cmd_backtest(args) -> int:
    config = _merge_config(args)
    data = _load_dataset(config)
    fits = []
    for path in args.params:
        params, _ = mio.load_fit_params(path)
        fits.append(params)
    labels = list(config.labels) if config.labels is not None else \
        [Path(path).stem for path in args.params]
    split = _resolve_split(config, data)
    report = backtest(fits, data, split, labels=labels)
    out = _out_dir(config)
    records = report.models + [report.equal_weight]
    mio.write_json(out / "backtest.json", {
        "split": report.split,
        "baseline": report.baseline,
        "models": [{
            "label": rec.label,
            "mean_squared": rec.mean_squared,
            "mean_abs_annualized": rec.mean_abs_annualized,
            "ann_volatility": rec.ann_volatility,
            "mean_return_loglik": rec.mean_return_loglik,
            "relative_loglik": rec.relative_loglik,
            "yearly": rec.yearly,
        } for rec in records],
    })
    dates = data.dates[split:] if data.dates is not None else \
        tuple(str(t) for t in range(split, data.T))
    lines = [",".join(["date"] + [rec.label for rec in records])]
    for t, date in enumerate(dates):
        cells = [date] + [repr(float(rec.portfolio_returns[t]))
                          for rec in records]
        lines.append(",".join(cells))
    (out / "portfolio_returns.csv").write_text("\n".join(lines) + "\n",
                                               encoding="utf-8")
    print(f"wrote {out / 'backtest.json'} and portfolio_returns.csv")
    return 0


def _cmd_qq(args) -> int:
    config = _merge_config(args)
    data = _load_dataset(config)
    if config.partition is not None:
        loading = loading_matrix(BlockPartition(config.partition))
        if loading.d != data.d:
            raise ArgumentError(
                f"partition is for {loading.partition.p} assets, data has {data.p}"
            )
        series_all = loading.condense(data.y)
    else:
        series_all = data.y
    k = series_all.shape[1]
    if not 0 <= args.component < k:
        raise ArgumentError(
            f"component must be in [0, {k - 1}], got {args.component}"
        )
    pts = qq_points(series_all[:, args.component])
    out = _out_dir(config)
    lines = ["theoretical,empirical"]
    lines += [f"{repr(float(a))},{repr(float(b))}" for a, b in pts]
    (out / "qq.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out / 'qq.csv'} ({pts.shape[0]} points)")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="TOML or JSON run configuration")
    sub.add_argument("--out-dir", dest="out_dir", help="output directory")
    sub.add_argument("--seed", type=int, help="random seed")


def _add_data_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--returns", help="wide returns CSV")
    sub.add_argument("--realized", help="long realized covariance CSV")
    sub.add_argument("--repair-nonpd", dest="repair_nonpd",
                     action="store_const", const=True, default=None,
                     help="clip non-PD realized matrices instead of failing")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrgarch",
        description="Multivariate realized GARCH toolkit",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="write a synthetic dataset")
    _add_common(sim)
    sim.add_argument("--partition", help="block sizes, e.g. 2,1")
    sim.add_argument("--p", type=int, help="asset count for a free structure")
    sim.add_argument("--t-len", dest="t_len", type=int, help="sample length")
    sim.add_argument("--burn-in", dest="burn_in", type=int)
    sim.set_defaults(handler=_cmd_simulate)

    est = commands.add_parser("estimate", help="fit a specification")
    _add_common(est)
    _add_data_flags(est)
    est.add_argument("--spec", dest="structure",
                     help="correlation structure: equi | block | free")
    est.add_argument("--partition", help="block sizes, e.g. 2,1")
    est.add_argument("--static", dest="dynamic", action="store_const",
                     const=False, default=None,
                     help="constant correlation instead of dynamic")
    est.add_argument("--measurement", help="condensed | full")
    est.add_argument("--init", help="fixed | estimated")
    est.add_argument("--multistarts", type=int)
    est.add_argument("--max-iter", dest="max_iter", type=int)
    est.add_argument("--two-stage", dest="two_stage", action="store_const",
                     const=True, default=None,
                     help="univariate fits first, correlation second")
    est.set_defaults(handler=_cmd_estimate)

    flt = commands.add_parser("filter", help="filtered states for fixed params")
    _add_common(flt)
    _add_data_flags(flt)
    flt.add_argument("--params", required=True, help="fit.json or params JSON")
    flt.set_defaults(handler=_cmd_filter)

    fct = commands.add_parser("forecast", help="multi-step covariance draws")
    _add_common(fct)
    _add_data_flags(fct)
    fct.add_argument("--params", required=True, help="fit.json or params JSON")
    fct.add_argument("--horizon", type=int)
    fct.add_argument("--mode", help="gaussian | bootstrap")
    fct.add_argument("--draws", type=int)
    fct.set_defaults(handler=_cmd_forecast)

    bt = commands.add_parser("backtest", help="minimum-variance backtest")
    _add_common(bt)
    _add_data_flags(bt)
    bt.add_argument("--params", required=True, nargs="+",
                    help="one or more fit.json files")
    bt.add_argument("--split", help="first out-of-sample index or date")
    bt.add_argument("--labels", nargs="+", help="one label per params file")
    bt.set_defaults(handler=_cmd_backtest)

    qq = commands.add_parser("qq", help="normal quantile pairs for one component")
    _add_common(qq)
    _add_data_flags(qq)
    qq.add_argument("--partition", help="block sizes; pools y to block means")
    qq.add_argument("--component", type=int, default=0,
                    help="index of the correlation component")
    qq.set_defaults(handler=_cmd_qq)
    return parser


def run(argv=None) -> int:
    """Parse and execute one command; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return 1
    try:
        return args.handler(args)
    except (DataError, ArgumentError, OSError) as exc:
        _emit_error(exc)
        return 1
    except GarchError as exc:
        _emit_error(exc)
        return 2
    except np.linalg.LinAlgError as exc:
        _emit_error(exc)
        return 2


def main() -> int:
    return run()


if __name__ == "__main__":
    sys.exit(main())
