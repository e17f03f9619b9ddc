"""Forecast evaluation: masked MAFE, DM and MCS comparisons, ADF, descriptives.

Accuracy is the mean absolute forecast error over active cells.  Pairwise
significance uses the Diebold-Mariano test with the Harvey-Leybourne-Newbold
small-sample correction; set-valued comparison uses the model confidence set
with a moving-block bootstrap and the range statistic; stationarity checks
use an augmented Dickey-Fuller test with AIC lag selection and MacKinnon
response-surface p-values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

__all__ = [
    "mafe",
    "DMResult",
    "dm_test",
    "MCSResult",
    "mcs_test",
    "adf_test",
    "descriptive_stats",
    "iterated_forecast",
]


def mafe(
    forecast: np.ndarray, realized: np.ndarray, active: np.ndarray, h: int = 1
) -> np.ndarray:
    """Mean absolute forecast error over active positions, per index.

    Inputs are (R, N) arrays (or 1-D series) already aligned on the same
    target dates, with R = T_test - h + 1 points for horizon-h forecasts.
    Raises if some index has no active target.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    forecast = np.atleast_2d(np.asarray(forecast, dtype=np.float64).T).T
    realized = np.atleast_2d(np.asarray(realized, dtype=np.float64).T).T
    active = np.atleast_2d(np.asarray(active, dtype=bool).T).T
    if forecast.shape != realized.shape or forecast.shape != active.shape:
        raise ValueError("forecast, realized and active must share a shape")
    counts = active.sum(axis=0)
    if (counts == 0).any():
        raise ValueError("no active forecast positions for some index")
    err = np.where(active, np.abs(forecast - realized), 0.0)
    return err.sum(axis=0) / counts


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float
    loss_differential_mean: float
    long_run_variance: float
    nobs: int
    horizon: int
    small_sample_adjusted: bool = True


def dm_test(errors_a: np.ndarray, errors_b: np.ndarray, horizon: int = 1) -> DMResult:
    """One-sided Diebold-Mariano test on absolute-error loss differentials.

    The differential is d_t = |e_a| - |e_b|, so a positive statistic favors
    model b.  The long-run variance truncates at horizon - 1 autocovariances
    (falling back to the lag-0 variance if the truncated sum is not positive)
    and the statistic carries the Harvey-Leybourne-Newbold small-sample
    factor; the p-value is the upper tail of a t distribution with T - 1
    degrees of freedom.
    """
    errors_a = np.asarray(errors_a, dtype=np.float64)
    errors_b = np.asarray(errors_b, dtype=np.float64)
    if errors_a.shape != errors_b.shape or errors_a.ndim != 1:
        raise ValueError("error series must be equal-length 1-D arrays")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    t = errors_a.shape[0]
    if t < 10:
        raise ValueError("need at least 10 forecast errors")
    d = np.abs(errors_a) - np.abs(errors_b)
    if np.all(d == d[0]):
        raise ValueError("degenerate loss differential: constant d_t")
    dbar = d.mean()
    centered = d - dbar
    gamma = np.array(
        [centered[k:] @ centered[: t - k] / t for k in range(horizon)]
    )
    var = (gamma[0] + 2.0 * gamma[1:].sum()) / t
    if var <= 0:
        # truncated kernel went non-positive; use the lag-0 variance
        var = gamma[0] / t
    if var <= 0:
        raise ValueError("degenerate loss differential: zero variance")
    hln = math.sqrt((t + 1 - 2 * horizon + horizon * (horizon - 1) / t) / t)
    statistic = float(hln * dbar / math.sqrt(var))
    p_value = float(sps.t.sf(statistic, df=t - 1))
    return DMResult(
        statistic=statistic,
        p_value=p_value,
        loss_differential_mean=float(dbar),
        long_run_variance=float(var),
        nobs=t,
        horizon=horizon,
    )


def _moving_block_indices(
    t: int, block: int, reps: int, rng: np.random.Generator
) -> np.ndarray:
    """(reps, t) index matrix of moving-block bootstrap resamples."""
    blocks_needed = math.ceil(t / block)
    starts = rng.integers(0, t - block + 1, size=(reps, blocks_needed))
    offsets = np.arange(block)
    idx = (starts[:, :, None] + offsets[None, None, :]).reshape(reps, -1)
    return idx[:, :t]


@dataclass(frozen=True)
class MCSResult:
    names: tuple[str, ...]
    p_values: np.ndarray
    included: np.ndarray
    confidence: float
    replications: int
    block_length: int
    elimination_order: tuple[int, ...]

    @property
    def surviving(self) -> tuple[str, ...]:
        return tuple(n for n, keep in zip(self.names, self.included) if keep)


def mcs_test(
    losses: np.ndarray,
    names: tuple[str, ...],
    confidence: float = 0.10,
    reps: int = 1000,
    block: int | None = None,
    seed: int = 0,
) -> MCSResult:
    """Model confidence set via the range statistic and iterated elimination.

    Args:
        losses: (T, M) per-date losses, one column per model.
        names: model names, one per column.
        confidence: p-value cut; the returned set keeps models with
            p >= confidence.
        reps: bootstrap replications.
        block: moving-block length, default ceil(T^(1/3)).
        seed: bootstrap seed.

    Pairwise mean-loss differences are studentized by moving-block-bootstrap
    variances; the worst model (largest standardized difference) is removed
    iteratively and each removal's p-value is the share of bootstrap max
    statistics at or above the observed one, reported as a running maximum.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 2:
        raise ValueError("losses must be (T, M)")
    t, k = losses.shape
    if k != len(names):
        raise ValueError("one name per loss column is required")
    if k < 2:
        raise ValueError("need at least two models")
    if t < 30:
        raise ValueError("need at least 30 loss rows")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    if block is None:
        block = math.ceil(t ** (1.0 / 3.0))
    if not 1 <= block <= t:
        raise ValueError("block length must be in [1, T]")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    mean_losses = losses.mean(axis=0)[:, None]
    diffs = mean_losses - mean_losses.T
    boot = np.empty((reps, k, k))
    for r, idx in enumerate(_moving_block_indices(t, block, reps, rng)):
        star = losses[idx].mean(axis=0)[:, None]
        boot[r] = star - star.T
    boot -= diffs
    variances = (boot**2).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(variances > 0, np.sqrt(variances), 1.0)
        std_diffs = np.where((variances == 0) & (diffs == 0), 0.0, diffs / scale)
        std_boot = np.where((variances == 0) & (boot == 0), 0.0, boot / scale)
    included = np.ones(k, dtype=bool)
    eliminated: list[tuple[int, float]] = []
    while included.sum() > 1:
        live = np.flatnonzero(included)
        sub = std_diffs[np.ix_(live, live)]
        stat = sub.max()
        sims = std_boot[:, live][:, :, live].max(axis=(1, 2))
        pval = float((sims >= stat).mean())
        worst_row = live[int(np.argwhere(sub == stat)[0][0])]
        eliminated.append((worst_row, pval))
        included[worst_row] = False
    survivor = int(np.flatnonzero(included)[0])
    eliminated.append((survivor, 1.0))
    p_values = np.empty(k)
    running = 0.0
    order = []
    for model, pval in eliminated:
        running = max(running, pval)
        p_values[model] = running
        order.append(model)
    keep = p_values >= confidence
    return MCSResult(
        names=tuple(names),
        p_values=p_values,
        included=keep,
        confidence=confidence,
        replications=reps,
        block_length=block,
        elimination_order=tuple(order),
    )


# MacKinnon (1994) response-surface coefficients, constant-only case
_TAU_MAX = 2.74
_TAU_MIN = -18.83
_TAU_STAR = -1.61
_SMALL_P = (2.1659, 1.4412, 0.038269)
_LARGE_P = (1.7339, 0.93202, -0.12745, -0.010368)


def _mackinnon_pvalue(stat: float) -> float:
    if stat > _TAU_MAX:
        return 1.0
    if stat < _TAU_MIN:
        return 0.0
    coefs = _SMALL_P if stat <= _TAU_STAR else _LARGE_P
    z = sum(c * stat**i for i, c in enumerate(coefs))
    return float(sps.norm.cdf(z))


def adf_test(series: np.ndarray, max_lags: int | None = None) -> tuple[float, float, int]:
    """Augmented Dickey-Fuller test with constant, AIC lag selection.

    Regresses the first difference on a constant, the lagged level and
    ``lags`` lagged differences; ``lags`` minimizes AIC over 0..max_lags on a
    common sample, then the statistic comes from a refit on the longest
    sample for the chosen lag.  Returns (statistic, p_value, chosen_lags).
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("series must be 1-D")
    t = series.shape[0]
    if t < 30:
        raise ValueError("need at least 30 observations")
    if not np.isfinite(series).all():
        raise ValueError("series contains non-finite values")
    if np.all(series == series[0]):
        raise ValueError("constant series has no unit-root statistic")
    if max_lags is None:
        max_lags = int(math.ceil(12.0 * (t / 100.0) ** 0.25))
        max_lags = min(max_lags, (t - 1) // 2 - 2)
    if max_lags < 0:
        raise ValueError("max_lags must be >= 0")
    diff = np.diff(series)
    if t - 1 - max_lags < max_lags + 12:
        raise ValueError(f"series too short: {t} observations with max_lags={max_lags}")

    def fit(lags: int, offset: int) -> tuple[float, float, int]:
        """OLS of diff on [1, level_lag, diffs]; returns (rss, se_stat, rows)."""
        rows = t - 1 - offset
        y = diff[offset:]
        cols = [np.ones(rows), series[offset : t - 1]]
        for j in range(1, lags + 1):
            cols.append(diff[offset - j : t - 1 - j])
        design = np.column_stack(cols)
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < design.shape[1]:
            raise ValueError("collinear ADF design")
        resid = y - design @ coef
        rss = float(resid @ resid)
        dof = rows - design.shape[1]
        if dof <= 0:
            raise ValueError("series too short for the ADF design")
        sigma2 = rss / dof
        cov = sigma2 * np.linalg.inv(design.T @ design)
        stat = coef[1] / math.sqrt(cov[1, 1])
        return rss, float(stat), rows

    best_lags = 0
    best_aic = math.inf
    for lags in range(max_lags + 1):
        rss, _, rows = fit(lags, max_lags)
        aic = rows * math.log(rss / rows) + 2 * (lags + 2)
        if aic < best_aic:
            best_aic = aic
            best_lags = lags
    _, statistic, _ = fit(best_lags, best_lags)
    return statistic, _mackinnon_pvalue(statistic), best_lags


def descriptive_stats(series: np.ndarray) -> tuple[float, float, float, float]:
    """(mean, sample std, skewness, excess kurtosis) of a 1-D series."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or series.shape[0] < 4:
        raise ValueError("series must be 1-D with at least 4 observations")
    if not np.isfinite(series).all():
        raise ValueError("series contains non-finite values")
    std = float(series.std(ddof=1))
    if std <= 0:
        raise ValueError("constant series has no shape statistics")
    return (
        float(series.mean()),
        std,
        float(sps.skew(series)),
        float(sps.kurtosis(series)),
    )


def iterated_forecast(
    forecaster,
    values: np.ndarray,
    observed: np.ndarray,
    look_back: int,
    horizon: int,
    start: int,
) -> np.ndarray:
    """Rolling-origin forecasts with step-1 feedback over a test range.

    For each origin the forecaster sees the raw (values, observed) block of
    the ``look_back`` days before the next target, emits ``horizon`` days,
    and the step-h row is recorded against target row start+o+horizon-1.
    The step-1 forecast is appended to the block (masked by the real
    calendar) and the origin slides one day.  Returns an (R, N) matrix with
    R = T - start - horizon + 1, aligned to rows start+horizon-1 .. T-1.

    The forecaster must expose ``forecast(block_values, block_observed,
    future_observed) -> (horizon, N)`` on the raw scale.
    """
    values = np.asarray(values, dtype=np.float64)
    observed = np.asarray(observed, dtype=bool)
    t, n = values.shape
    if not look_back >= 1 or not horizon >= 1:
        raise ValueError("look_back and horizon must be >= 1")
    if start < look_back:
        raise ValueError("start must leave at least look_back warm-up rows")
    count = t - start - horizon + 1
    if count < 1:
        raise ValueError("test range too short for the horizon")
    block_v = values[start - look_back : start].copy()
    block_o = observed[start - look_back : start].copy()
    recorded = np.empty((count, n))
    for o in range(count):
        future_o = observed[start + o : start + o + horizon]
        pred = np.asarray(forecaster.forecast(block_v, block_o, future_o), dtype=np.float64)
        if pred.shape != (horizon, n):
            raise ValueError("forecaster output must be (horizon, N)")
        recorded[o] = pred[horizon - 1]
        step_obs = observed[start + o]
        block_v = np.vstack([block_v[1:], np.where(step_obs, pred[0], 0.0)])
        block_o = np.vstack([block_o[1:], step_obs])
    return recorded
