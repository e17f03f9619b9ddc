"""Command-line entry point for panel analysis, training, and benchmarking.

Every run writes its numeric outputs to files and drops one manifest in the
output directory recording the command, config snapshot, input digests,
seed, tool version, output paths, and wall-clock time.  Re-running the
manifest's command reproduces the numeric outputs bitwise.
"""

from __future__ import annotations

import argparse
import bisect
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import dcrnn, evaluation, har, spillover, training
from ._config import load_config_file
from .panel import (
    RVPanel,
    Standardizer,
    intersection_panel,
    load_panel,
    save_panel,
)
from .synth import SynthSpec, apply_holidays, gen_var_panel
from .training import DcrnnForecaster, HarForecaster, TrainConfig

__all__ = ["main", "dispatch", "compare_pipeline", "RunManifest", "load_manifest", "PIPELINE_MODELS"]

PIPELINE_MODELS = ("dcrnn-rv", "stg-spillover", "har", "vhar", "har-ks", "ghar", "gnnhar")
MANIFEST_NAME = "manifest.json"


# -- manifest -----------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Provenance record for one command invocation."""

    command: tuple[str, ...]
    config: dict | None
    inputs: dict[str, str]
    seed: int | None
    version: str
    outputs: tuple[str, ...]
    wall_clock_s: float

    def to_dict(self) -> dict:
        return {
            "command": list(self.command),
            "config": self.config,
            "inputs": dict(self.inputs),
            "seed": self.seed,
            "version": self.version,
            "outputs": list(self.outputs),
            "wall_clock_s": self.wall_clock_s,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunManifest":
        return cls(
            command=tuple(payload["command"]),
            config=payload.get("config"),
            inputs=dict(payload.get("inputs") or {}),
            seed=payload.get("seed"),
            version=str(payload.get("version", "")),
            outputs=tuple(payload.get("outputs") or ()),
            wall_clock_s=float(payload.get("wall_clock_s", 0.0)),
        )


def load_manifest(path: str) -> RunManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return RunManifest.from_dict(json.load(fh))


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out_dir: str,
    argv: list[str],
    config: dict | None,
    input_paths: list[str],
    seed: int | None,
    outputs: list[str],
    wall_clock_s: float,
) -> None:
    manifest = RunManifest(
        command=tuple(argv),
        config=config,
        inputs={p: _sha256(p) for p in input_paths},
        seed=seed,
        version=__version__,
        outputs=tuple(outputs),
        wall_clock_s=wall_clock_s,
    )
    _write_json(os.path.join(out_dir, MANIFEST_NAME), manifest.to_dict())


# -- small IO helpers ---------------------------------------------------------


def _fmt(cell) -> str:
    # np.float64 subclasses float, so the numpy checks must come first
    if isinstance(cell, np.floating):
        return repr(float(cell))
    if isinstance(cell, np.integer):
        return str(int(cell))
    if isinstance(cell, float):
        return repr(cell)
    return str(cell)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(c) for c in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"empty table: {path}")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _ensure_dir(path: str) -> None:
    if path:
        os.makedirs(path, exist_ok=True)


def _out_dir_of(file_path: str) -> str:
    parent = os.path.dirname(os.path.abspath(file_path))
    _ensure_dir(parent)
    return parent


def _resolve_seed(flag_seed: int | None, config_seed: int | None) -> int:
    """Precedence: --seed flag, then VOLNET_SEED, then config, then 0."""
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("VOLNET_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"VOLNET_SEED must be an integer, got {env!r}") from None
    if config_seed is not None:
        return config_seed
    return 0


def _read_loss_series(path: str) -> np.ndarray:
    """One loss/error series per file: `value` or `date,value` rows."""
    header, rows = _read_csv(path)
    try:
        float(header[-1])
        data_rows = [header] + rows
    except ValueError:
        data_rows = rows
    if not data_rows:
        raise ValueError(f"no data rows in {path}")
    try:
        return np.array([float(r[-1]) for r in data_rows])
    except ValueError:
        raise ValueError(f"non-numeric loss values in {path}") from None


# -- subcommands --------------------------------------------------------------


def _cmd_stats(ns: argparse.Namespace, argv: list[str]) -> int:
    t0 = time.perf_counter()
    panel = load_panel(ns.input)
    _ensure_dir(ns.out)
    desc_rows = []
    for j, name in enumerate(panel.indices):
        series = panel.values[panel.observed[:, j], j]
        mean, std, skew, kurt = evaluation.descriptive_stats(series)
        if series.size >= 30:
            stat, pval, lags = evaluation.adf_test(series)
            adf_cells = [float(stat), float(pval), int(lags)]
        else:
            adf_cells = ["", "", ""]
        desc_rows.append(
            [name, int(series.size), float(mean), float(std), float(skew), float(kurt), *adf_cells]
        )
    desc_path = os.path.join(ns.out, "descriptive.csv")
    _write_csv(
        desc_path,
        ["index", "n_active", "mean", "std", "skewness", "excess_kurtosis",
         "adf_stat", "adf_pvalue", "adf_lags"],
        desc_rows,
    )
    threshold = ns.threshold
    if threshold is None:
        threshold = min(5, len(panel.indices) - 1)
    omega = spillover.inactivity_ratio(panel, active_threshold=threshold)
    inact_path = os.path.join(ns.out, "inactivity.csv")
    _write_csv(
        inact_path,
        ["index", "inactivity_ratio"],
        [[name, float(w)] for name, w in zip(panel.indices, omega)],
    )
    _write_manifest(
        ns.out, argv, {"threshold": threshold}, [ns.input], None,
        [desc_path, inact_path], time.perf_counter() - t0,
    )
    return 0


def _cmd_spillover(ns: argparse.Namespace, argv: list[str]) -> int:
    t0 = time.perf_counter()
    panel = load_panel(ns.input)
    common = intersection_panel(panel)
    var = spillover.fit_var(common.values, p=ns.p, ridge=ns.ridge)
    graph = spillover.gfevd(var, horizon=ns.horizon, indices=panel.indices)
    net = spillover.net_spillover(graph)
    payload = spillover.graph_to_json_dict(graph)
    payload["net"] = {name: float(x) for name, x in zip(panel.indices, net)}
    if ns.keep < 1:
        sparse = spillover.sparsify(graph, ns.keep)
        payload["sparse_adjacency"] = spillover.graph_to_json_dict(sparse)
    _out_dir_of(ns.out)
    _write_json(ns.out, payload)
    _write_manifest(
        _out_dir_of(ns.out), argv,
        {"p": ns.p, "horizon": ns.horizon, "keep": ns.keep, "ridge": ns.ridge},
        [ns.input], None, [ns.out], time.perf_counter() - t0,
    )
    return 0


def _cmd_synth(ns: argparse.Namespace, argv: list[str]) -> int:
    t0 = time.perf_counter()
    payload = load_config_file(ns.config)
    seed = _resolve_seed(ns.seed, payload.get("seed"))
    payload["seed"] = seed
    spec = SynthSpec.from_dict(payload)
    panel = gen_var_panel(spec)
    if any(p > 0 for p in spec.holiday_prob):
        panel = apply_holidays(panel, spec.holiday_prob, seed=spec.seed + 1)
    _out_dir_of(ns.out)
    save_panel(panel, ns.out)
    _write_manifest(
        _out_dir_of(ns.out), argv, spec.to_dict(), [ns.config], seed,
        [ns.out], time.perf_counter() - t0,
    )
    return 0


def _bundle_dict(run: training.TrainRun) -> dict:
    return {
        "format_version": 1,
        "model": run.model.to_dict(),
        "standardizer": run.stats.to_json_dict(run.indices),
        "config": run.config.to_dict(),
        "indices": list(run.indices),
        "reference_graph": spillover.graph_to_json_dict(run.reference_graph),
        "val_start_date": run.val_start_date,
        "test_start_date": run.test_start_date,
    }


def _cmd_train(ns: argparse.Namespace, argv: list[str]) -> int:
    t0 = time.perf_counter()
    payload = load_config_file(ns.config) if ns.config else {}
    config = TrainConfig.from_dict(payload)
    overrides: dict = {}
    if ns.graph_mode:
        overrides["graph_mode"] = ns.graph_mode
    if ns.calendar:
        overrides["calendar_mode"] = ns.calendar
    overrides["seed"] = _resolve_seed(ns.seed, config.seed)
    config = TrainConfig.from_dict({**config.to_dict(), **overrides})
    panel = load_panel(ns.input)
    run = training.train_full(config, panel)
    _ensure_dir(ns.out)
    model_path = os.path.join(ns.out, "model.json")
    history_path = os.path.join(ns.out, "history.csv")
    summary_path = os.path.join(ns.out, "summary.json")
    _write_json(model_path, _bundle_dict(run))
    run.history.to_csv(history_path)
    _write_json(summary_path, run.history.summary_dict())
    inputs = [ns.input] + ([ns.config] if ns.config else [])
    _write_manifest(
        ns.out, argv, config.to_dict(), inputs, config.seed,
        [model_path, history_path, summary_path], time.perf_counter() - t0,
    )
    return 0


def _load_bundle(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        bundle = json.load(fh)
    version = bundle.get("format_version", 1)
    if version != 1:
        raise ValueError(f"unsupported bundle format version {version}")
    model = dcrnn.DCGRUModel.from_dict(bundle["model"])
    config = TrainConfig.from_dict(bundle["config"])
    indices = tuple(bundle["indices"])
    stats = Standardizer.from_json_dict(bundle["standardizer"], indices)
    graph = spillover.graph_from_json_dict(bundle["reference_graph"])
    return model, config, indices, stats, graph, bundle


def _cmd_forecast(ns: argparse.Namespace, argv: list[str]) -> int:
    t0 = time.perf_counter()
    model, config, indices, stats, graph, bundle = _load_bundle(ns.model)
    panel = load_panel(ns.input)
    if panel.indices != indices:
        raise ValueError("panel indices do not match the trained model bundle")
    work = intersection_panel(panel) if config.calendar_mode == "intersection" else panel
    start_date = ns.start or bundle["test_start_date"]
    start = bisect.bisect_left(work.dates, start_date)
    forecaster = DcrnnForecaster(model, stats, config, graph)
    recorded = evaluation.iterated_forecast(
        forecaster, work.values, work.observed, config.look_back, config.horizon, start
    )
    target_dates = work.dates[start + config.horizon - 1 :]
    _out_dir_of(ns.out)
    _write_csv(
        ns.out,
        ["date", *indices],
        [[d, *map(float, row)] for d, row in zip(target_dates, recorded)],
    )
    _write_manifest(
        _out_dir_of(ns.out), argv, {"start": start_date, **config.to_dict()},
        [ns.model, ns.input], config.seed, [ns.out], time.perf_counter() - t0,
    )
    return 0


def _cmd_evaluate(ns: argparse.Namespace, argv: list[str]) -> int:
    t0 = time.perf_counter()
    panel = load_panel(ns.input)
    header, rows = _read_csv(ns.forecasts)
    if header[0] != "date" or tuple(header[1:]) != panel.indices:
        raise ValueError("forecast columns do not match the panel indices")
    date_to_row = {d: i for i, d in enumerate(panel.dates)}
    picked = [(r, date_to_row[r[0]]) for r in rows if r[0] in date_to_row]
    if not picked:
        raise ValueError("no forecast dates present in the panel")
    forecast = np.array([[float(c) for c in r[1:]] for r, _ in picked])
    realized = np.stack([panel.values[i] for _, i in picked])
    active = np.stack([panel.observed[i] for _, i in picked])
    per_index = evaluation.mafe(forecast, realized, active, h=ns.horizon)
    _ensure_dir(ns.out)
    mafe_path = os.path.join(ns.out, "mafe.csv")
    _write_csv(
        mafe_path,
        ["index", "n_active", "mafe"],
        [
            [name, int(active[:, j].sum()), float(per_index[j])]
            for j, name in enumerate(panel.indices)
        ],
    )
    _write_manifest(
        ns.out, argv, {"horizon": ns.horizon}, [ns.forecasts, ns.input], None,
        [mafe_path], time.perf_counter() - t0,
    )
    return 0


# -- model comparison ---------------------------------------------------------


def _parse_grid(config: dict) -> list[tuple[int, int]]:
    grid = config.get("grid")
    if grid is None:
        raise ValueError("compare config must define a grid of (look_back, horizon)")
    if isinstance(grid, dict):
        ls = [int(x) for x in grid.get("look_back", [])]
        hs = [int(x) for x in grid.get("horizon", [])]
        if not ls or not hs:
            raise ValueError("grid must list look_back and horizon values")
        return [(l, h) for l in ls for h in hs]
    cells = [(int(l), int(h)) for l, h in grid]
    if not cells:
        raise ValueError("grid must list at least one (look_back, horizon) cell")
    return cells


def _fit_baseline(model_name: str, fit_values: np.ndarray, indices, base_cfg: TrainConfig, seed: int):
    if model_name == "har":
        return har.fit_har(fit_values, indices)
    if model_name == "vhar":
        return har.fit_vhar(fit_values, indices)
    if model_name == "har-ks":
        return har.fit_har_ks(fit_values, indices)
    graph = spillover.batch_adjacency(
        fit_values,
        np.ones(fit_values.shape, dtype=bool),
        p=base_cfg.var_lag,
        horizon=base_cfg.fevd_horizon,
        keep_fraction=base_cfg.keep_fraction,
        min_rows=base_cfg.min_rows,
        ridge=base_cfg.ridge,
    )
    if graph is None:
        raise ValueError(f"cannot estimate the {model_name} adjacency: too few fitting rows")
    if model_name == "ghar":
        return har.fit_ghar(fit_values, indices, graph)
    coefs, _ = har.fit_gnnhar(fit_values, indices, graph, seed=seed)
    return coefs


def _run_cell(
    panel: RVPanel,
    models: list[str],
    l: int,
    h: int,
    train_overrides: dict,
    eval_cfg: dict,
    boundaries: tuple[str, str],
    seed: int,
    out_dir: str,
) -> dict:
    """Train/fit every model for one (l, h) cell and emit its tables."""
    _ensure_dir(out_dir)
    inter = intersection_panel(panel)
    test_date = boundaries[1]
    base_cfg = TrainConfig.from_dict({
        **TrainConfig().to_dict(), **train_overrides,
        "look_back": l, "horizon": h, "seed": seed,
    })
    recorded: dict[str, dict[str, np.ndarray]] = {}
    for model_name in models:
        if model_name in ("dcrnn-rv", "stg-spillover"):
            mode_over = (
                {"graph_mode": "dynamic", "calendar_mode": "union"}
                if model_name == "dcrnn-rv"
                else {"graph_mode": "static", "calendar_mode": "intersection"}
            )
            cfg = TrainConfig.from_dict({**base_cfg.to_dict(), **mode_over})
            run = training.train_full(cfg, panel, boundaries=boundaries)
            work = intersection_panel(panel) if cfg.calendar_mode == "intersection" else panel
            start = bisect.bisect_left(work.dates, test_date)
            series = evaluation.iterated_forecast(
                DcrnnForecaster.from_run(run), work.values, work.observed, l, h, start
            )
            dates = work.dates[start + h - 1 :]
        else:
            fit_rows = bisect.bisect_left(inter.dates, test_date)
            coefs = _fit_baseline(model_name, inter.values[:fit_rows], inter.indices, base_cfg, seed)
            forecaster = HarForecaster(coefs)
            series = evaluation.iterated_forecast(
                forecaster, inter.values, inter.observed, l, h, fit_rows
            )
            dates = inter.dates[fit_rows + h - 1 :]
        recorded[model_name] = dict(zip(dates, series))
        _write_csv(
            os.path.join(out_dir, f"forecasts_{model_name}.csv"),
            ["date", *panel.indices],
            [[d, *map(float, row)] for d, row in zip(dates, series)],
        )

    common = sorted(set.intersection(*[set(r) for r in recorded.values()]))
    if len(common) < 2:
        raise ValueError("too few common forecast dates across models")
    realized = np.stack([panel.values[panel.row_of(d)] for d in common])
    n_idx = realized.shape[1]
    forecasts = {m: np.stack([recorded[m][d] for d in common]) for m in models}
    errors = {m: forecasts[m] - realized for m in models}
    ones = np.ones(realized.shape, dtype=bool)

    mafe_by_model = {m: evaluation.mafe(forecasts[m], realized, ones, h=h) for m in models}
    _write_csv(
        os.path.join(out_dir, "mafe.csv"),
        ["index", *models],
        [
            [panel.indices[j], *[float(mafe_by_model[m][j]) for m in models]]
            for j in range(n_idx)
        ],
    )

    dm_rows = []
    for a_pos, model_a in enumerate(models):
        for model_b in models[a_pos + 1 :]:
            for j in range(n_idx):
                try:
                    res = evaluation.dm_test(errors[model_a][:, j], errors[model_b][:, j], horizon=h)
                    dm_rows.append(
                        [panel.indices[j], model_a, model_b,
                         float(res.statistic), float(res.p_value)]
                    )
                except ValueError:
                    dm_rows.append([panel.indices[j], model_a, model_b, "", ""])
    _write_csv(
        os.path.join(out_dir, "dm.csv"),
        ["index", "model_a", "model_b", "statistic", "p_value"],
        dm_rows,
    )

    mcs_rows = []
    if len(models) >= 2 and len(common) >= 30:
        for j in range(n_idx):
            losses = np.column_stack([np.abs(errors[m][:, j]) for m in models])
            res = evaluation.mcs_test(
                losses,
                tuple(models),
                confidence=float(eval_cfg.get("confidence", 0.10)),
                reps=int(eval_cfg.get("replications", 1000)),
                block=eval_cfg.get("block"),
                seed=seed,
            )
            for m, p in zip(res.names, res.p_values):
                mcs_rows.append(
                    [panel.indices[j], m, float(p), str(m in res.surviving).lower()]
                )
    _write_csv(
        os.path.join(out_dir, "mcs.csv"),
        ["index", "model", "p_value", "included"],
        mcs_rows,
    )

    report = {
        "look_back": l,
        "horizon": h,
        "models": models,
        "n_common_dates": len(common),
        "common_start": common[0],
        "common_end": common[-1],
        "mafe": {
            m: {panel.indices[j]: float(mafe_by_model[m][j]) for j in range(n_idx)}
            for m in models
        },
    }
    _write_json(os.path.join(out_dir, "report.json"), report)
    return report


def compare_pipeline(
    config: dict,
    panel: RVPanel,
    out_root: str,
    seed: int = 0,
    jobs: int = 1,
) -> list[dict]:
    """Train/fit every model over the (l, h) grid and emit per-cell tables."""
    models = list(config.get("models") or [])
    if not models:
        raise ValueError("no models")
    unknown = sorted(set(models) - set(PIPELINE_MODELS))
    if unknown:
        raise ValueError(f"unknown models: {', '.join(unknown)}")
    if len(set(models)) != len(models):
        raise ValueError("duplicate models in the compare config")
    cells = _parse_grid(config)
    train_overrides = dict(config.get("train") or {})
    for banned in ("look_back", "horizon", "l", "h", "seed"):
        train_overrides.pop(banned, None)
    eval_cfg = dict(config.get("evaluation") or {})
    frac_cfg = TrainConfig.from_dict({**TrainConfig().to_dict(), **train_overrides})
    t1, t2 = frac_cfg.split_points(panel.values.shape[0])
    boundaries = (panel.dates[t1], panel.dates[t2])
    _ensure_dir(out_root)

    def run_one(cell: tuple[int, int]) -> dict:
        l, h = cell
        return _run_cell(
            panel, models, l, h, train_overrides, eval_cfg, boundaries, seed,
            os.path.join(out_root, f"l{l}_h{h}"),
        )

    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(run_one, cells))
    else:
        reports = [run_one(cell) for cell in cells]
    return reports


def _cmd_compare(ns: argparse.Namespace, argv: list[str]) -> int:
    t0 = time.perf_counter()
    if ns.losses:
        if not ns.test:
            raise ValueError("--test {dm,mcs} is required with --losses")
        seed = _resolve_seed(ns.seed, None)
        names = [os.path.splitext(os.path.basename(p))[0] for p in ns.losses]
        series = [_read_loss_series(p) for p in ns.losses]
        if ns.test == "dm":
            if len(series) != 2:
                raise ValueError("DM comparison needs exactly two loss files")
            if series[0].size != series[1].size:
                raise ValueError("loss series lengths differ")
            res = evaluation.dm_test(series[0], series[1], horizon=ns.h)
            payload = {
                "test": "dm",
                "models": names,
                "horizon": ns.h,
                "statistic": res.statistic,
                "p_value": res.p_value,
                "loss_differential_mean": res.loss_differential_mean,
                "long_run_variance": res.long_run_variance,
                "nobs": res.nobs,
            }
        else:
            if len(series) < 2:
                raise ValueError("MCS comparison needs at least two loss files")
            lengths = {s.size for s in series}
            if len(lengths) != 1:
                raise ValueError("loss series lengths differ")
            losses = np.column_stack(series)
            res = evaluation.mcs_test(
                losses, tuple(names), confidence=ns.confidence,
                reps=ns.reps, block=ns.block, seed=seed,
            )
            payload = {
                "test": "mcs",
                "models": names,
                "confidence": res.confidence,
                "replications": res.replications,
                "block_length": res.block_length,
                "p_values": {m: float(p) for m, p in zip(res.names, res.p_values)},
                "included": {m: bool(m in res.surviving) for m in res.names},
                "elimination_order": [res.names[i] for i in res.elimination_order],
            }
        _out_dir_of(ns.out)
        _write_json(ns.out, payload)
        _write_manifest(
            _out_dir_of(ns.out), argv, {"test": ns.test, "h": ns.h},
            list(ns.losses), seed, [ns.out], time.perf_counter() - t0,
        )
        return 0

    if not ns.config or not ns.input:
        raise ValueError("compare needs either --losses or both --config and --input")
    config = load_config_file(ns.config)
    seed = _resolve_seed(ns.seed, config.get("seed"))
    panel = load_panel(ns.input)
    reports = compare_pipeline(config, panel, ns.out, seed=seed, jobs=ns.jobs)
    outputs = []
    for report in reports:
        cell_dir = os.path.join(ns.out, f"l{report['look_back']}_h{report['horizon']}")
        for fname in sorted(os.listdir(cell_dir)):
            outputs.append(os.path.join(cell_dir, fname))
    _write_manifest(
        ns.out, argv, config, [ns.config, ns.input], seed, outputs,
        time.perf_counter() - t0,
    )
    return 0


# -- dispatch -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volnet",
        description="Volatility panel analysis, spillover graphs, and graph forecasting.",
    )
    parser.add_argument("--version", action="version", version=f"volnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="descriptive statistics, unit-root tests, inactivity ratios")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=int, default=None,
                   help="minimum other active indices for an inactivity-ratio day "
                        "(default: 5, capped at N-1)")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("spillover", help="fit the full-sample spillover graph")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=int, default=3, help="VAR lag order")
    p.add_argument("--horizon", type=int, default=10, help="variance decomposition horizon")
    p.add_argument("--keep", type=float, default=0.5, help="off-diagonal keep fraction")
    p.add_argument("--ridge", type=float, default=1e-8)
    p.set_defaults(func=_cmd_spillover)

    p = sub.add_parser("synth", help="generate a synthetic panel from a JSON spec")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the graph forecaster")
    p.add_argument("--input", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--graph-mode", choices=["dynamic", "static"], default=None)
    p.add_argument("--calendar", choices=["union", "intersection"], default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("forecast", help="iterated forecasts from a trained bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", default=None, help="first forecast-origin date (ISO)")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("evaluate", help="score a forecast table against realized values")
    p.add_argument("--forecasts", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=int, default=1)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="model comparison: loss tests or the full pipeline")
    p.add_argument("--losses", nargs="+", default=None)
    p.add_argument("--test", choices=["dm", "mcs"], default=None)
    p.add_argument("--h", type=int, default=1, help="forecast horizon of the losses")
    p.add_argument("--confidence", type=float, default=0.10)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--block", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--input", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_compare)

    return parser


def dispatch(argv: list[str]) -> int:
    """Run one command; 0 success, 1 data/config error, 2 usage error."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return 0 if code == 0 else 2
    try:
        return ns.func(ns, list(argv))
    except (ValueError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        message = str(exc) or exc.__class__.__name__
        print(f"error: {message.splitlines()[0]}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
