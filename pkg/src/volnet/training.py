"""Windowing, batching, and the optimization loop for the graph forecaster.

Training slides stride-1 windows over a chronologically split panel,
estimates one spillover graph per sample (dynamic mode) or one per run
(static mode), and fits the recurrent model with adaptive-moment steps on
the masked MAE.  The static-graph, intersection-calendar configuration is
the fixed-graph ablation baseline.
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from . import dcrnn, spillover
from ._config import load_config_file
from .panel import (
    MaskedWindowPair,
    RVPanel,
    Standardizer,
    build_window_pair,
    fit_standardizer,
    intersection_panel,
)

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "TrainRun",
    "AdamState",
    "init_adam",
    "optimizer_step",
    "make_windows",
    "train",
    "train_full",
    "load_train_config",
    "DcrnnForecaster",
    "HarForecaster",
]

GRAPH_MODES = ("dynamic", "static")
CALENDAR_MODES = ("union", "intersection")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``look_back`` and ``horizon`` define the window geometry; the split
    fractions cut the panel chronologically; ``var_lag``, ``fevd_horizon``,
    ``keep_fraction``, ``min_rows`` and ``ridge`` control per-window graph
    estimation.
    """

    look_back: int = 100
    horizon: int = 1
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    step_size: float = 1e-2
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    graph_mode: str = "dynamic"
    calendar_mode: str = "union"
    var_lag: int = 3
    fevd_horizon: int = 10
    keep_fraction: float = 0.5
    min_rows: int | None = None
    ridge: float = 1e-8
    hidden_dim: int = 32
    num_layers: int = 2
    k_max: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.look_back < 25:
            raise ValueError("look_back must be >= 25")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if min(fracs) < 0 or self.train_frac <= 0:
            raise ValueError("split fractions must be non-negative with a positive train share")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.graph_mode not in GRAPH_MODES:
            raise ValueError(f"graph_mode must be one of {GRAPH_MODES}")
        if self.calendar_mode not in CALENDAR_MODES:
            raise ValueError(f"calendar_mode must be one of {CALENDAR_MODES}")
        if self.var_lag < 1 or self.fevd_horizon < 1:
            raise ValueError("var_lag and fevd_horizon must be >= 1")
        if not 0 < self.keep_fraction <= 1:
            raise ValueError("keep_fraction must be in (0, 1]")
        if self.min_rows is not None and self.min_rows < 1:
            raise ValueError("min_rows must be >= 1 when given")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if min(self.hidden_dim, self.num_layers, self.k_max) < 1:
            raise ValueError("hidden_dim, num_layers and k_max must be >= 1")

    def model_config(self) -> dcrnn.DCGRUConfig:
        return dcrnn.DCGRUConfig(
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            k_max=self.k_max,
        )

    def split_points(self, n_rows: int) -> tuple[int, int]:
        """Row boundaries (train end, validation end) for an n-row panel."""
        # the 1e-9 guard keeps accumulated float error in the cumulative
        # fractions from flooring an exact boundary down a row
        t1 = int(math.floor(self.train_frac * n_rows + 1e-9))
        t2 = int(math.floor((self.train_frac + self.val_frac) * n_rows + 1e-9))
        return t1, t2

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        payload = dict(payload)
        aliases = {"p": "var_lag", "H": "fevd_horizon", "l": "look_back", "h": "horizon"}
        for short, full in aliases.items():
            if short in payload:
                if full in payload:
                    raise ValueError(f"config sets both {short!r} and {full!r}")
                payload[full] = payload.pop(short)
        if "splits" in payload:
            splits = payload.pop("splits")
            if len(splits) != 3:
                raise ValueError("splits must list three fractions")
            payload["train_frac"], payload["val_frac"], payload["test_frac"] = splits
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**payload)


def load_train_config(path: str) -> TrainConfig:
    """Read a TrainConfig from a TOML or JSON file."""
    return TrainConfig.from_dict(load_config_file(path))


@dataclass(frozen=True)
class TrainHistory:
    """Per-epoch losses plus run-level bookkeeping.

    Losses are masked MAE on the standardized scale.  ``best_epoch`` is the
    1-based epoch whose parameters the run returned.
    """

    train_loss: tuple[float, ...]
    val_loss: tuple[float, ...]
    best_epoch: int
    wall_clock_s: float
    adjacency_fallback_count: int

    def __post_init__(self) -> None:
        if len(self.train_loss) != len(self.val_loss):
            raise ValueError("train and validation loss series must have equal length")
        if self.train_loss and not 1 <= self.best_epoch <= len(self.train_loss):
            raise ValueError("best_epoch outside the recorded epochs")

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path: str) -> None:
        lines = ["epoch,train_loss,val_loss"]
        for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            lines.append(f"{i},{tr!r},{va!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    def summary_dict(self) -> dict:
        """Summary without timing, so emitted files are run-to-run identical."""
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.val_loss[self.best_epoch - 1] if self.val_loss else None,
            "final_train_loss": self.train_loss[-1] if self.train_loss else None,
            "adjacency_fallback_count": self.adjacency_fallback_count,
        }


def make_windows(
    panel: RVPanel,
    stats: Standardizer,
    l: int,
    h: int,
    calendar_mode: str = "union",
) -> list[MaskedWindowPair]:
    """Stride-1 sliding windows over the panel, T - l - h + 1 in total.

    Intersection mode drops rows with any inactive index before windowing.
    """
    if calendar_mode not in CALENDAR_MODES:
        raise ValueError(f"calendar_mode must be one of {CALENDAR_MODES}")
    if l < 1 or h < 1:
        raise ValueError("l and h must be >= 1")
    if calendar_mode == "intersection":
        panel = intersection_panel(panel)
    rows = panel.values.shape[0]
    if rows < l + h:
        raise ValueError(f"panel too short: {rows} rows < look_back + horizon = {l + h}")
    return [build_window_pair(panel, stats, s, l, h) for s in range(rows - l - h + 1)]


# -- adaptive-moment optimizer ---------------------------------------------


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators plus the step counter."""

    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step: int
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    zeros = lambda: {k: np.zeros_like(v) for k, v in params.items()}
    return AdamState(first_moment=zeros(), second_moment=zeros(), step=0)


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    step_size: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected adaptive-moment update; purely functional."""
    if sorted(params) != sorted(grads):
        raise ValueError("params and grads must share keys")
    step = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    m_out: dict[str, np.ndarray] = {}
    v_out: dict[str, np.ndarray] = {}
    for name in sorted(params):
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape mismatch for parameter {name}")
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for parameter {name}")
        m = state.beta1 * state.first_moment[name] + (1 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** step)
        v_hat = v / (1 - state.beta2 ** step)
        new_params[name] = params[name] - step_size * m_hat / (np.sqrt(v_hat) + state.epsilon)
        m_out[name] = m
        v_out[name] = v
    new_state = AdamState(
        first_moment=m_out, second_moment=v_out, step=step,
        beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon,
    )
    return new_params, new_state


# -- graph preparation -------------------------------------------------------


def _estimate_window_graph(window: MaskedWindowPair, config: TrainConfig):
    return spillover.batch_adjacency(
        window.x_raw,
        window.ex.astype(bool),
        p=config.var_lag,
        horizon=config.fevd_horizon,
        keep_fraction=config.keep_fraction,
        min_rows=config.min_rows,
        ridge=config.ridge,
    )


def _prepare_windows(
    windows: list[MaskedWindowPair],
    config: TrainConfig,
    train_graph,
    last_valid,
    fallback_count: int,
):
    """Attach per-day transition stacks to windows; returns prep, state."""
    prepared = []
    for w in windows:
        if config.graph_mode == "static":
            graph = train_graph
        else:
            graph = _estimate_window_graph(w, config)
            if graph is None:
                fallback_count += 1
                graph = last_valid if last_valid is not None else train_graph
            else:
                last_valid = graph
        if graph is None:
            raise ValueError(
                "no usable spillover graph: the first windows and the "
                "training split all fail the estimation row requirement"
            )
        prepared.append((w, dcrnn.masked_transitions(graph.theta, w.day_active())))
    return prepared, last_valid, fallback_count


def _stack_batch(prepared: list) -> tuple[np.ndarray, ...]:
    xs = np.stack([w.x for w, _ in prepared])
    exs = np.stack([w.ex for w, _ in prepared])
    ys = np.stack([w.y for w, _ in prepared])
    eys = np.stack([w.ey for w, _ in prepared])
    transitions = np.stack([t for _, t in prepared])
    return xs, exs, ys, eys, transitions


def _epoch_batches(order: np.ndarray, batch_size: int):
    for lo in range(0, order.size, batch_size):
        yield order[lo : lo + batch_size]


def _dataset_loss(model, params_t, prepared, batch_size: int) -> float:
    """Aggregate masked MAE over a window set, weighting by active cells."""
    numer = 0.0
    denom = 0.0
    order = np.arange(len(prepared))
    for idx in _epoch_batches(order, batch_size):
        xs, exs, ys, eys, trans = _stack_batch([prepared[i] for i in idx])
        outs = model.forward(xs, exs, trans, ys.shape[1], ey=eys, params=params_t)
        loss = dcrnn.masked_mae_loss(outs, ys, eys)
        active = float(eys.sum())
        numer += loss.value * active
        denom += active
    if denom <= 0:
        raise ValueError("no active targets")
    return float(numer / denom)


@dataclass(frozen=True)
class TrainRun:
    """Everything a later forecasting run needs from one training run."""

    model: dcrnn.DCGRUModel
    history: TrainHistory
    stats: Standardizer
    reference_graph: spillover.SpilloverGraph
    config: TrainConfig
    indices: tuple[str, ...]
    val_start_date: str
    test_start_date: str


def _first_row_on_or_after(dates: tuple[str, ...], day: str) -> int:
    return bisect.bisect_left(dates, day)


def train_full(
    config: TrainConfig,
    panel: RVPanel,
    boundaries: tuple[str, str] | None = None,
) -> TrainRun:
    """Train the forecaster; returns the model plus forecasting context.

    ``boundaries`` optionally pins the validation and test start dates so
    runs on different calendars share one chronological split.
    """
    t0 = time.perf_counter()
    work = intersection_panel(panel) if config.calendar_mode == "intersection" else panel
    n_rows = work.values.shape[0]
    if n_rows < config.look_back + config.horizon:
        raise ValueError(
            f"panel too short: {n_rows} rows < look_back + horizon = "
            f"{config.look_back + config.horizon}"
        )
    if boundaries is None:
        t1, t2 = config.split_points(n_rows)
    else:
        t1 = _first_row_on_or_after(work.dates, boundaries[0])
        t2 = _first_row_on_or_after(work.dates, boundaries[1])
        if not 0 < t1 < t2 < n_rows:
            raise ValueError("split boundaries fall outside the panel date range")
    l, h = config.look_back, config.horizon
    for name, lo, hi in (("train", 0, t1), ("validation", t1, t2), ("test", t2, n_rows)):
        if hi - lo < l + h:
            raise ValueError(
                f"empty {name} split: {hi - lo} rows, need at least {l + h}"
            )
    stats = fit_standardizer(work, 0, t1)
    train_windows = make_windows(work.slice_rows(0, t1), stats, l, h)
    val_windows = make_windows(work.slice_rows(t1, t2), stats, l, h)

    train_graph = spillover.batch_adjacency(
        work.values[:t1], work.observed[:t1],
        p=config.var_lag, horizon=config.fevd_horizon,
        keep_fraction=config.keep_fraction, min_rows=config.min_rows,
        ridge=config.ridge,
    )
    if config.graph_mode == "static" and train_graph is None:
        raise ValueError("cannot estimate the training-split spillover graph")
    prep_train, last_valid, fallbacks = _prepare_windows(
        train_windows, config, train_graph, None, 0
    )
    prep_val, last_valid, fallbacks = _prepare_windows(
        val_windows, config, train_graph, last_valid, fallbacks
    )
    reference_graph = train_graph if train_graph is not None else last_valid

    model = dcrnn.DCGRUModel.build(config.model_config(), seed=config.seed)
    params = {k: v.copy() for k, v in model.params.items()}
    adam = init_adam(params)
    step_size = config.step_size
    halve_every = max(1, config.patience // 2)
    shuffle_rng = np.random.Generator(np.random.Philox([config.seed, 1]))

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(prep_train))
        numer = 0.0
        denom = 0.0
        for idx in _epoch_batches(order, config.batch_size):
            batch = [prep_train[i] for i in idx]
            xs, exs, ys, eys, trans = _stack_batch(batch)
            tensors = {k: ad.parameter(v) for k, v in params.items()}
            outs = model.forward(xs, exs, trans, h, ey=eys, params=tensors)
            loss = dcrnn.masked_mae_loss(outs, ys, eys)
            if not np.isfinite(loss.value):
                raise ValueError(
                    f"non-finite training loss at epoch {epoch} "
                    f"(step size {step_size:g}); aborting"
                )
            names = sorted(tensors)
            grad_list = ad.gradients(loss, [tensors[k] for k in names])
            grads = dict(zip(names, grad_list))
            params, adam = optimizer_step(params, grads, adam, step_size)
            active = float(eys.sum())
            numer += loss.value * active
            denom += active
        train_losses.append(float(numer / denom))
        params_const = {k: ad.constant(v) for k, v in params.items()}
        val_loss = _dataset_loss(model, params_const, prep_val, config.batch_size)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale % halve_every == 0:
                step_size *= 0.5
            if stale >= config.patience:
                break

    final = dcrnn.DCGRUModel(config.model_config(), best_params)
    history = TrainHistory(
        train_loss=tuple(train_losses),
        val_loss=tuple(val_losses),
        best_epoch=best_epoch,
        wall_clock_s=time.perf_counter() - t0,
        adjacency_fallback_count=fallbacks,
    )
    return TrainRun(
        model=final,
        history=history,
        stats=stats,
        reference_graph=reference_graph,
        config=config,
        indices=work.indices,
        val_start_date=work.dates[t1],
        test_start_date=work.dates[t2],
    )


def train(config: TrainConfig, panel: RVPanel) -> tuple[dcrnn.DCGRUModel, TrainHistory]:
    """Train on a chronological split; returns best-validation parameters."""
    run = train_full(config, panel)
    return run.model, run.history


# -- forecaster adapters -----------------------------------------------------


class DcrnnForecaster:
    """Rolling-block adapter around a trained model.

    Dynamic graph mode re-estimates the spillover graph from each raw
    block, falling back to the most recent valid graph and then to the
    reference graph from training; static mode always uses the reference
    graph.
    """

    def __init__(
        self,
        model: dcrnn.DCGRUModel,
        stats: Standardizer,
        config: TrainConfig,
        reference_graph: spillover.SpilloverGraph,
    ):
        self.model = model
        self.stats = stats
        self.config = config
        self.reference_graph = reference_graph
        self._last_valid: spillover.SpilloverGraph | None = None

    @classmethod
    def from_run(cls, run: TrainRun) -> "DcrnnForecaster":
        return cls(run.model, run.stats, run.config, run.reference_graph)

    def forecast(
        self,
        block_values: np.ndarray,
        block_observed: np.ndarray,
        future_observed: np.ndarray,
    ) -> np.ndarray:
        block_values = np.asarray(block_values, dtype=np.float64)
        block_observed = np.asarray(block_observed, dtype=bool)
        future_observed = np.asarray(future_observed, dtype=bool)
        horizon = future_observed.shape[0]
        if self.config.graph_mode == "static":
            graph = self.reference_graph
        else:
            graph = spillover.batch_adjacency(
                block_values, block_observed,
                p=self.config.var_lag, horizon=self.config.fevd_horizon,
                keep_fraction=self.config.keep_fraction,
                min_rows=self.config.min_rows, ridge=self.config.ridge,
            )
            if graph is None:
                graph = self._last_valid if self._last_valid is not None else self.reference_graph
            else:
                self._last_valid = graph
        day_active = np.vstack([block_observed, future_observed])
        transitions = dcrnn.masked_transitions(graph.theta, day_active)[None]
        x = self.stats.transform(block_values, block_observed)
        preds = self.model.predict(
            x[None], block_observed[None].astype(np.float64), transitions,
            horizon, ey=future_observed[None].astype(np.float64),
        )
        return self.stats.inverse(preds[0])


class HarForecaster:
    """Multi-step adapter for the one-step regression baselines.

    Steps beyond the first feed the model's own forecasts, masked by the
    real calendar, mirroring the recurrent decoder's feedback rule.
    """

    def __init__(self, coefficients):
        self.coefficients = coefficients

    def forecast(
        self,
        block_values: np.ndarray,
        block_observed: np.ndarray,
        future_observed: np.ndarray,
    ) -> np.ndarray:
        from .har import one_step

        block = np.asarray(block_values, dtype=np.float64)
        future_observed = np.asarray(future_observed, dtype=bool)
        horizon, n = future_observed.shape
        out = np.empty((horizon, n))
        for s in range(horizon):
            pred = one_step(self.coefficients, block)
            out[s] = pred
            block = np.vstack([block[1:], np.where(future_observed[s], pred, 0.0)])
        return out
