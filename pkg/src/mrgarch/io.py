"""CSV and JSON ingestion, parameter serialization, run configuration.

Two on-disk table formats cover the data side. Returns travel in a wide
CSV with header ``date,<asset1>,...,<assetp>`` and daily percentages in
the cells. Realized covariance matrices travel in a long CSV with header
``date,row_asset,col_asset,value`` holding the full lower triangle
(diagonal included) per date; the upper triangle is filled by symmetry.
All files are UTF-8 with comma separators and a ``.`` decimal point.

Dates are opaque identifiers here. Nothing in this module does calendar
arithmetic; the backtest groups by the year prefix and that is all.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .blocks import BlockPartition, Loading, identity_loading, loading_matrix
from .errors import ArgumentError, DataError
from .estimator import EstimationSpec, FitResult
from .model import Dataset, InitialState, ModelParams

__all__ = [
    "load_returns",
    "write_returns",
    "load_realized",
    "write_realized",
    "load_dataset",
    "repair_to_pd",
    "params_to_dict",
    "params_from_dict",
    "save_params",
    "load_params",
    "fit_to_dict",
    "save_fit",
    "RunConfig",
    "load_config",
    "write_json",
]

_PD_REPAIR_FLOOR = 1e-8


def _parse_cell(text: str, path, line_no: int, column: str) -> float:
    text = text.strip()
    if not text:
        raise DataError(f"{path}: line {line_no}: empty {column} cell")
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"{path}: line {line_no}: cannot parse {column} value {text!r}"
        ) from None
    if not np.isfinite(value):
        raise DataError(f"{path}: line {line_no}: non-finite {column} value")
    return value


def load_returns(path) -> tuple[tuple[str, ...], np.ndarray, tuple[str, ...]]:
    """Read a wide returns CSV. Returns (dates, T x p values, asset names).

    Column order in the file is preserved. Any structural defect (short
    row, blank cell, duplicate date, unparseable number) raises DataError
    naming the offending line.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if len(header) < 2 or header[0].strip().lower() != "date":
            raise DataError(
                f"{path}: line 1: header must be 'date,<asset names>'"
            )
        assets = tuple(name.strip() for name in header[1:])
        if len(set(assets)) != len(assets):
            raise DataError(f"{path}: line 1: duplicate asset names")
        dates: list[str] = []
        seen: set[str] = set()
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(assets) + 1:
                raise DataError(
                    f"{path}: line {line_no}: expected {len(assets) + 1} "
                    f"fields, got {len(row)}"
                )
            date = row[0].strip()
            if not date:
                raise DataError(f"{path}: line {line_no}: empty date cell")
            if date in seen:
                raise DataError(f"{path}: line {line_no}: duplicate date {date}")
            seen.add(date)
            dates.append(date)
            rows.append([
                _parse_cell(cell, path, line_no, assets[j])
                for j, cell in enumerate(row[1:])
            ])
    if not rows:
        raise DataError(f"{path}: no data rows")
    return tuple(dates), np.array(rows, dtype=float), assets


def write_returns(path, dates, values, assets) -> None:
    """Write the wide returns CSV read back by ``load_returns``."""
    values = np.asarray(values, dtype=float)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", *assets])
        for date, row in zip(dates, values):
            writer.writerow([date, *(repr(float(v)) for v in row)])


def repair_to_pd(mat: np.ndarray, floor: float = _PD_REPAIR_FLOOR) -> np.ndarray:
    """Clip eigenvalues from below so the matrix is positive definite."""
    sym = 0.5 * (mat + mat.T)
    w, vec = np.linalg.eigh(sym)
    lo = floor * max(1.0, float(w.max()))
    return (vec * np.clip(w, lo, None)) @ vec.T


def load_realized(
    path, repair: bool = False
) -> tuple[tuple[str, ...], np.ndarray, tuple[str, ...]]:
    """Read a long-format realized covariance CSV.

    Returns (dates, T x p x p matrices, asset names). Asset names are
    collected in order of first appearance; every date must supply the
    full lower triangle exactly once. Redundant upper-triangle entries
    are accepted only when they match their mirror. Non-PD matrices
    raise DataError unless ``repair`` is set, in which case eigenvalues
    are clipped from below.
    """
    path = Path(path)
    assets: list[str] = []
    index: dict[str, int] = {}
    dates: list[str] = []
    per_date: dict[str, dict[tuple[int, int], float]] = {}
    line_of: dict[str, int] = {}
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        expected = ["date", "row_asset", "col_asset", "value"]
        if [h.strip().lower() for h in header] != expected:
            raise DataError(
                f"{path}: line 1: header must be '{','.join(expected)}'"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(
                    f"{path}: line {line_no}: expected 4 fields, got {len(row)}"
                )
            date, a_row, a_col = (cell.strip() for cell in row[:3])
            if not date or not a_row or not a_col:
                raise DataError(f"{path}: line {line_no}: empty identifier cell")
            value = _parse_cell(row[3], path, line_no, "value")
            for name in (a_row, a_col):
                if name not in index:
                    index[name] = len(assets)
                    assets.append(name)
            i, j = index[a_row], index[a_col]
            if i < j:
                i, j = j, i
            if date not in per_date:
                per_date[date] = {}
                dates.append(date)
                line_of[date] = line_no
            cell = per_date[date]
            if (i, j) in cell and cell[(i, j)] != value:
                raise DataError(
                    f"{path}: line {line_no}: conflicting duplicate for "
                    f"({a_row}, {a_col}) on {date}"
                )
            cell[(i, j)] = value
    if not dates:
        raise DataError(f"{path}: no data rows")
    p = len(assets)
    need = {(i, j) for i in range(p) for j in range(i + 1)}
    mats = np.empty((len(dates), p, p))
    for t, date in enumerate(dates):
        cell = per_date[date]
        missing = need - set(cell)
        if missing:
            i, j = sorted(missing)[0]
            raise DataError(
                f"{path}: date {date}: missing lower-triangle entry "
                f"({assets[i]}, {assets[j]})"
            )
        mat = np.zeros((p, p))
        for (i, j), value in cell.items():
            mat[i, j] = value
            mat[j, i] = value
        try:
            np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            if not repair:
                raise DataError(
                    f"{path}: date {date}: realized matrix is not positive "
                    "definite (pass the repair flag to clip eigenvalues)"
                ) from None
            mat = repair_to_pd(mat)
        mats[t] = mat
    return tuple(dates), mats, tuple(assets)


def write_realized(path, dates, mats, assets) -> None:
    """Write the long-format CSV read back by ``load_realized``."""
    mats = np.asarray(mats, dtype=float)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "row_asset", "col_asset", "value"])
        for date, mat in zip(dates, mats):
            for i in range(len(assets)):
                for j in range(i + 1):
                    writer.writerow(
                        [date, assets[i], assets[j], repr(float(mat[i, j]))]
                    )


def load_dataset(returns_path, realized_path, repair: bool = False) -> Dataset:
    """Assemble a Dataset from the two CSV files.

    The realized file must cover exactly the dates of the returns file in
    the same order, with matching asset names. The log-variance and
    transformed-correlation observations are always computed here from
    the raw matrices, never ingested pre-transformed.
    """
    dates, returns, assets = load_returns(returns_path)
    r_dates, mats, r_assets = load_realized(realized_path, repair=repair)
    if r_assets != assets:
        raise DataError(
            f"asset names differ between files: {assets} vs {r_assets}"
        )
    if r_dates != dates:
        raise DataError(
            "realized dates do not match the returns dates "
            f"({len(r_dates)} vs {len(dates)} rows)"
        )
    return Dataset.from_realized(returns, mats, dates)


_PARAM_VECTORS = ("mu", "omega", "beta", "gamma", "tau1", "tau2", "xi", "phi",
                  "delta1", "delta2", "c_omega", "c_beta", "c_gamma",
                  "c_xi", "c_phi")


def params_to_dict(params: ModelParams) -> dict:
    """JSON-ready dictionary for a parameter set."""
    out: dict = {
        "p": int(params.p),
        "partition": (list(params.loading.partition.sizes)
                      if params.loading.partition is not None else None),
        "dynamic": bool(params.dynamic),
        "measurement": params.measurement,
    }
    for name in _PARAM_VECTORS:
        value = getattr(params, name)
        out[name] = None if value is None else np.asarray(value).tolist()
    sigma = params.sigma
    out["sigma"] = None if sigma is None else np.asarray(sigma).tolist()
    return out


def _loading_from_dict(payload: dict) -> Loading:
    partition = payload.get("partition")
    if partition is not None:
        return loading_matrix(BlockPartition(tuple(int(s) for s in partition)))
    return identity_loading(int(payload["p"]))


def params_from_dict(payload: dict) -> ModelParams:
    """Inverse of ``params_to_dict``."""
    try:
        loading = _loading_from_dict(payload)
        kwargs = {
            "loading": loading,
            "dynamic": bool(payload["dynamic"]),
            "measurement": payload["measurement"],
        }
        for name in _PARAM_VECTORS:
            value = payload.get(name)
            kwargs[name] = None if value is None else np.asarray(value, dtype=float)
        sigma = payload.get("sigma")
        kwargs["sigma"] = None if sigma is None else np.asarray(sigma, dtype=float)
        return ModelParams(**kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed parameter payload: {exc}") from exc


def write_json(path, payload: dict) -> None:
    """Deterministic JSON: sorted keys, no timestamps, trailing newline."""
    path = Path(path)
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc


def save_params(path, params: ModelParams) -> None:
    write_json(path, params_to_dict(params))


def load_params(path) -> ModelParams:
    return params_from_dict(_read_json(path))


def fit_to_dict(fit: FitResult) -> dict:
    """JSON-ready dictionary for a complete estimation result."""
    spec = fit.spec
    out = {
        "params": params_to_dict(fit.params),
        "objective": float(fit.objective),
        "loglik": float(fit.report.total),
        "spec": {
            "structure": spec.structure,
            "partition": (list(spec.partition.sizes)
                          if spec.partition is not None else None),
            "dynamic": spec.dynamic,
            "measurement": spec.measurement,
            "init": spec.init,
            "multistarts": spec.multistarts,
            "seed": spec.seed,
            "max_iter": spec.max_iter,
        },
        "init_state": None,
        "diagnostics": {
            "best_start": int(fit.diagnostics["best_start"]),
            "iterations": int(fit.diagnostics["iterations"]),
            "n_evals": int(fit.diagnostics["n_evals"]),
            "termination": str(fit.diagnostics["termination"]),
            "start_objectives": [
                float(v) for v in fit.diagnostics["start_objectives"]
            ],
        },
    }
    if fit.init_state is not None:
        out["init_state"] = {
            "h1": fit.init_state.h1.tolist(),
            "zeta1": fit.init_state.zeta1.tolist(),
        }
    return out


def save_fit(path, fit: FitResult) -> None:
    write_json(path, fit_to_dict(fit))


def load_fit_params(path) -> tuple[ModelParams, InitialState | None]:
    """Parameters and initial state from either a fit or a params JSON."""
    payload = _read_json(path)
    if "params" in payload and isinstance(payload["params"], dict):
        params = params_from_dict(payload["params"])
        init = payload.get("init_state")
        if init is not None:
            return params, InitialState(np.asarray(init["h1"], dtype=float),
                                        np.asarray(init["zeta1"], dtype=float))
        return params, None
    return params_from_dict(payload), None


_CONFIG_KEYS = {
    "returns", "realized", "out_dir", "structure", "partition", "labels",
    "dynamic", "measurement", "init", "multistarts", "seed", "max_iter",
    "ftol", "two_stage", "split", "horizon", "mode", "draws",
    "repair_nonpd", "t_len", "burn_in", "p",
}


@dataclasses.dataclass
class RunConfig:
    """Everything a command run needs, from file plus flag overrides."""

    returns: str | None = None
    realized: str | None = None
    out_dir: str = "."
    structure: str = "free"
    partition: tuple[int, ...] | None = None
    labels: tuple[str, ...] | None = None
    dynamic: bool = True
    measurement: str = "condensed"
    init: str = "fixed"
    multistarts: int = 3
    seed: int = 0
    max_iter: int = 200
    ftol: float = 1e-8
    two_stage: bool = False
    split: int | str | None = None
    horizon: int = 10
    mode: str = "gaussian"
    draws: int = 500
    repair_nonpd: bool = False
    t_len: int = 500
    burn_in: int = 300
    p: int | None = None

    def estimation_spec(self) -> EstimationSpec:
        partition = (BlockPartition(tuple(self.partition))
                     if self.partition is not None else None)
        return EstimationSpec(
            structure=self.structure,
            partition=partition,
            dynamic=self.dynamic,
            measurement=self.measurement,
            init=self.init,
            multistarts=self.multistarts,
            seed=self.seed,
            max_iter=self.max_iter,
            ftol=self.ftol,
        )


def load_config(path) -> RunConfig:
    """Read a TOML or JSON run configuration; unknown keys are rejected."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        payload = _read_json(path)
    else:
        try:
            with path.open("rb") as handle:
                payload = tomllib.load(handle)
        except OSError as exc:
            raise DataError(f"{path}: cannot read: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{path}: invalid TOML: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError(f"{path}: config root must be a table")
    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise ArgumentError(
            f"{path}: unknown config keys: {', '.join(sorted(unknown))}"
        )
    if "partition" in payload and payload["partition"] is not None:
        payload["partition"] = tuple(int(s) for s in payload["partition"])
    if "labels" in payload and payload["labels"] is not None:
        payload["labels"] = tuple(str(s) for s in payload["labels"])
    try:
        return RunConfig(**payload)
    except TypeError as exc:
        raise ArgumentError(f"{path}: bad config value: {exc}") from exc
