"""Masked realized-volatility panels on a union trading calendar.

A panel stores daily square-root realized variances for N stock indices on
the union of their trading calendars.  Days on which an index did not trade
are masked rather than imputed: ``observed[t, n]`` is False and
``values[t, n]`` is zero.  Every transformation in this module preserves the
invariant that masked cells hold exact zeros.
"""

from __future__ import annotations

import datetime as _dt
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RVPanel",
    "Standardizer",
    "MaskedWindowPair",
    "compute_rv",
    "load_panel",
    "save_panel",
    "intersection_panel",
    "fit_standardizer",
    "build_window_pair",
]


def compute_rv(intraday_returns) -> float:
    """Realized variance of one day: the sum of squared intraday returns.

    The panel itself stores the square root of this quantity.
    """
    returns = np.asarray(intraday_returns, dtype=np.float64)
    if returns.ndim != 1 or returns.size == 0:
        raise ValueError("need at least one intraday return")
    if not np.isfinite(returns).all():
        raise ValueError("non-finite intraday return")
    return float(returns @ returns)


def _parse_date(text: str) -> _dt.date:
    try:
        return _dt.date.fromisoformat(text)
    except ValueError as exc:
        raise ValueError(f"bad date {text!r}: expected ISO YYYY-MM-DD") from exc


@dataclass(frozen=True)
class RVPanel:
    """Union-calendar volatility panel with explicit missingness.

    Attributes:
        dates: ISO date strings, strictly increasing, one per row.
        indices: index names, one per column, unique.
        values: (T, N) float64, square-root realized variances; zero where
            masked, finite and non-negative where observed.
        observed: (T, N) bool activity mask; every row has at least one
            active index and every column at least one active day.
    """

    dates: tuple[str, ...]
    indices: tuple[str, ...]
    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        observed = np.array(self.observed, dtype=bool)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        t, n = values.shape
        if observed.shape != (t, n):
            raise ValueError("observed mask shape does not match values")
        if len(self.dates) != t:
            raise ValueError("number of dates does not match rows")
        if len(self.indices) != n:
            raise ValueError("number of index names does not match columns")
        if t < 1 or n < 1:
            raise ValueError("panel must have at least one row and column")
        if len(set(self.indices)) != n:
            raise ValueError("duplicate index names")
        parsed = [_parse_date(d) for d in self.dates]
        for prev, cur in zip(parsed, parsed[1:]):
            if cur == prev:
                raise ValueError(f"duplicate date {cur.isoformat()}")
            if cur < prev:
                raise ValueError("dates must be strictly increasing")
        if not observed.any(axis=1).all():
            raise ValueError("every row must have at least one active index")
        if not observed.any(axis=0).all():
            raise ValueError("every index must be active on at least one day")
        active = values[observed]
        if active.size:
            if not np.isfinite(active).all():
                raise ValueError("observed values must be finite")
            if (active < 0).any():
                raise ValueError("negative RV value")
        values = np.where(observed, values, 0.0)
        values.setflags(write=False)
        observed.setflags(write=False)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "indices", tuple(self.indices))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def slice_rows(self, start: int, stop: int) -> "RVPanel":
        """Return the sub-panel covering rows [start, stop)."""
        if not 0 <= start < stop <= self.shape[0]:
            raise ValueError(f"bad row range [{start}, {stop})")
        return RVPanel(
            dates=self.dates[start:stop],
            indices=self.indices,
            values=self.values[start:stop],
            observed=self.observed[start:stop],
        )

    def row_of(self, date: str) -> int:
        """Row index of an ISO date; raises if absent."""
        pos = bisect_left(self.dates, date)
        if pos == len(self.dates) or self.dates[pos] != date:
            raise ValueError(f"date {date} not in panel")
        return pos


def load_panel(path: str, values_are_variance: bool = False) -> RVPanel:
    """Read a panel from CSV with header ``date,NAME1,...``.

    Empty cells mark inactive days.  With values_are_variance=True the cells
    hold raw realized variances and the square root is taken on load.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    if not lines:
        raise ValueError(f"{path}: empty panel file")
    header = lines[0].split(",")
    if header[0] != "date" or len(header) < 2:
        raise ValueError(f"{path}: header must be 'date,NAME1,...'")
    indices = tuple(header[1:])
    n = len(indices)
    dates: list[str] = []
    values = np.zeros((len(lines) - 1, n))
    observed = np.zeros((len(lines) - 1, n), dtype=bool)
    for row, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != n + 1:
            raise ValueError(f"{path}: row {row + 2} has {len(cells)} cells, expected {n + 1}")
        dates.append(cells[0])
        for col, cell in enumerate(cells[1:]):
            if cell != "":
                values[row, col] = float(cell)
                observed[row, col] = True
    if values_are_variance:
        if (values < 0).any():
            raise ValueError(f"{path}: negative RV value")
        values = np.sqrt(values)
    return RVPanel(tuple(dates), indices, values, observed)


def save_panel(panel: RVPanel, path: str) -> None:
    """Write a panel to CSV; floats use shortest round-trip formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date," + ",".join(panel.indices) + "\n")
        for t, date in enumerate(panel.dates):
            cells = [
                repr(float(panel.values[t, k])) if panel.observed[t, k] else ""
                for k in range(panel.shape[1])
            ]
            fh.write(date + "," + ",".join(cells) + "\n")


def intersection_panel(panel: RVPanel) -> RVPanel:
    """Keep only dates on which every index is active (intersection calendar)."""
    keep = panel.observed.all(axis=1)
    if not keep.any():
        raise ValueError("intersection calendar is empty")
    idx = np.flatnonzero(keep)
    return RVPanel(
        dates=tuple(panel.dates[i] for i in idx),
        indices=panel.indices,
        values=panel.values[idx],
        observed=panel.observed[idx],
    )


@dataclass(frozen=True)
class Standardizer:
    """Per-index location/scale fitted on active training cells only."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, values: np.ndarray, observed: np.ndarray) -> np.ndarray:
        """Standardize observed cells; masked cells stay exact zeros."""
        out = (values - self.mean) / self.std
        return np.where(observed, out, 0.0)

    def inverse(self, standardized: np.ndarray) -> np.ndarray:
        return standardized * self.std + self.mean

    def to_json_dict(self, indices: tuple[str, ...]) -> dict:
        return {
            name: {"mean": float(self.mean[k]), "std": float(self.std[k])}
            for k, name in enumerate(indices)
        }

    @classmethod
    def from_json_dict(cls, payload: dict, indices: tuple[str, ...]) -> "Standardizer":
        mean = np.array([payload[name]["mean"] for name in indices])
        std = np.array([payload[name]["std"] for name in indices])
        return cls(mean=mean, std=std)


def _resolve_range(panel: RVPanel, start, stop) -> tuple[int, int]:
    """Map a half-open row or ISO-date interval to row indices."""
    if isinstance(start, str):
        start = bisect_left(panel.dates, start)
    if isinstance(stop, str):
        stop = bisect_left(panel.dates, stop)
    if not 0 <= start < stop <= panel.shape[0]:
        raise ValueError(f"empty or out-of-range interval [{start}, {stop})")
    return start, stop


def fit_standardizer(panel: RVPanel, start=0, stop=None) -> Standardizer:
    """Fit per-index mean and sample stddev on the half-open range [start, stop).

    Bounds may be row indices or ISO date strings.  Only active cells
    contribute; each index needs at least two of them and nonzero variance.
    """
    if stop is None:
        stop = panel.shape[0]
    start, stop = _resolve_range(panel, start, stop)
    values = panel.values[start:stop]
    observed = panel.observed[start:stop]
    n = panel.shape[1]
    mean = np.zeros(n)
    std = np.zeros(n)
    for k in range(n):
        cells = values[observed[:, k], k]
        if cells.size < 2:
            raise ValueError(
                f"insufficient observations: index {panel.indices[k]} has "
                f"{cells.size} active cells in the fit range"
            )
        mean[k] = cells.mean()
        std[k] = cells.std(ddof=1)
        if std[k] <= 0.0:
            raise ValueError(f"zero variance: index {panel.indices[k]} is constant in range")
    return Standardizer(mean=mean, std=std)


@dataclass(frozen=True)
class MaskedWindowPair:
    """One supervised sample: t_x input days followed by t_y forecast days.

    ``x``/``y`` are standardized values with masked cells zeroed, ``ex``/``ey``
    the matching 0/1 activity masks, and ``x_raw`` the raw input values kept
    for graph estimation.  ``start`` is the panel row of the first input day
    and ``window_start`` its date.
    """

    x: np.ndarray
    ex: np.ndarray
    y: np.ndarray
    ey: np.ndarray
    x_raw: np.ndarray
    start: int
    window_start: str

    def day_active(self) -> np.ndarray:
        """(t_x + t_y, N) activity per day: input days from ex, forecast days from ey."""
        return np.vstack([self.ex, self.ey]).astype(bool)

    def adjacency_masks(self) -> list[np.ndarray]:
        """Per-day symmetric 0/1 matrices zeroing inactive indices' rows and columns."""
        masks = []
        for active in self.day_active().astype(np.float64):
            masks.append(np.outer(active, active))
        return masks


def build_window_pair(
    panel: RVPanel, stats: Standardizer, start: int, t_x: int, t_y: int
) -> MaskedWindowPair:
    """Cut one window of t_x + t_y consecutive rows beginning at ``start``."""
    if t_x < 1 or t_y < 1:
        raise ValueError("t_x and t_y must be >= 1")
    end = start + t_x + t_y
    if start < 0 or end > panel.shape[0]:
        raise ValueError(
            f"window [{start}, {end}) exceeds panel with {panel.shape[0]} rows"
        )
    mid = start + t_x
    obs = panel.observed
    x_std = stats.transform(panel.values[start:mid], obs[start:mid])
    y_std = stats.transform(panel.values[mid:end], obs[mid:end])
    return MaskedWindowPair(
        x=x_std,
        ex=obs[start:mid].astype(np.float64),
        y=y_std,
        ey=obs[mid:end].astype(np.float64),
        x_raw=panel.values[start:mid],
        start=start,
        window_start=panel.dates[start],
    )
