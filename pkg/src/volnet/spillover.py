"""Volatility spillover graphs from VAR generalized forecast-error variance shares.

Each graph is the row-stochastic matrix of H-step generalized FEVD
contributions: theta[i, j] is the share of index i's forecast-error variance
attributed to shocks in index j.  Graphs can be sparsified by keeping the
globally largest off-diagonal shares, and directional net spillovers are the
column-minus-row share sums scaled by 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .panel import RVPanel

__all__ = [
    "EstimationError",
    "VARModel",
    "SpilloverGraph",
    "fit_var",
    "ma_coefficients",
    "gfevd",
    "sparsify",
    "net_spillover",
    "batch_adjacency",
    "inactivity_ratio",
    "default_min_rows",
    "graph_to_json_dict",
    "graph_from_json_dict",
]


class EstimationError(ValueError):
    """Data-quality failure during graph estimation (insufficient or degenerate data)."""


@dataclass(frozen=True)
class VARModel:
    """Least-squares VAR(p) fit.

    Attributes:
        intercept: (N,) constant terms.
        coefficients: (p, N, N) lag matrices; coefficients[k][i, j] multiplies
            index j at lag k+1 in the equation for index i.
        residual_cov: (N, N) dof-adjusted residual covariance.
        nobs: effective rows used in the regression.
        spectral_radius: largest companion-matrix eigenvalue modulus.
    """

    intercept: np.ndarray
    coefficients: np.ndarray
    residual_cov: np.ndarray
    nobs: int
    spectral_radius: float

    def __post_init__(self) -> None:
        coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if coefficients.ndim == 2:
            coefficients = coefficients[None]
        cov = np.asarray(self.residual_cov, dtype=np.float64)
        n = cov.shape[0]
        if cov.shape != (n, n) or coefficients.shape[1:] != (n, n):
            raise ValueError("coefficient and covariance shapes disagree")
        if np.abs(cov - cov.T).max() > 1e-10:
            raise ValueError("residual covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ValueError("residual covariance must be positive semi-definite")
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "residual_cov", cov)
        object.__setattr__(self, "intercept", np.asarray(self.intercept, dtype=np.float64))

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    @property
    def stable(self) -> bool:
        return self.spectral_radius < 1.0

    def summary(self) -> dict:
        return {
            "p": self.p,
            "nobs": self.nobs,
            "spectral_radius": self.spectral_radius,
            "stable": self.stable,
        }


@dataclass(frozen=True)
class SpilloverGraph:
    """FEVD share matrix: row-stochastic until sparsification zeroes edges."""

    theta: np.ndarray
    horizon: int
    indices: tuple[str, ...] = ()
    sparsified: bool = False
    keep_fraction: float = 1.0
    var_provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=np.float64)
        n = theta.shape[0]
        if theta.shape != (n, n):
            raise ValueError("theta must be square")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if (theta < 0).any():
            raise ValueError("FEVD shares must be non-negative")
        if not self.sparsified and np.abs(theta.sum(axis=1) - 1.0).max() > 1e-10:
            raise ValueError("unsparsified shares must be row-stochastic")
        if self.indices and len(self.indices) != n:
            raise ValueError("one index name per row is required")
        object.__setattr__(self, "theta", theta)


def fit_var(window: np.ndarray, p: int, ridge: float = 1e-8) -> VARModel:
    """Fit a VAR(p) with intercept by per-equation least squares.

    Args:
        window: (T, N) fully-observed values.
        p: lag order, >= 1.
        ridge: diagonal added to the Gram matrix; 0 disables it, in which
            case a rank-deficient design raises EstimationError.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError("window must be (T, N)")
    t_total, n = window.shape
    if p < 1:
        raise ValueError("lag order must be >= 1")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if not np.isfinite(window).all():
        raise EstimationError("window contains non-finite values")
    if t_total < n * p + p + 10:
        raise EstimationError(
            f"insufficient observations: {t_total} rows for N={n}, p={p} "
            f"(need at least {n * p + p + 10})"
        )
    rows = t_total - p
    ncols = n * p + 1
    design = np.empty((rows, ncols))
    design[:, 0] = 1.0
    for k in range(p):
        design[:, 1 + k * n : 1 + (k + 1) * n] = window[p - 1 - k : t_total - 1 - k]
    target = window[p:]
    gram = design.T @ design
    if ridge > 0:
        gram = gram + ridge * np.eye(ncols)
    elif np.linalg.matrix_rank(design) < ncols:
        raise EstimationError("singular regressors: design matrix is rank deficient")
    coef = np.linalg.solve(gram, design.T @ target)
    resid = target - design @ coef
    sigma = resid.T @ resid / (rows - ncols)
    sigma = (sigma + sigma.T) / 2.0
    phi = np.stack([coef[1 + k * n : 1 + (k + 1) * n].T for k in range(p)])
    companion = np.zeros((n * p, n * p))
    companion[:n] = phi.transpose(1, 0, 2).reshape(n, n * p)
    if p > 1:
        companion[n:, : n * (p - 1)] = np.eye(n * (p - 1))
    radius = float(np.abs(np.linalg.eigvals(companion)).max())
    return VARModel(
        intercept=coef[0].copy(),
        coefficients=phi,
        residual_cov=sigma,
        nobs=rows,
        spectral_radius=radius,
    )


def ma_coefficients(var: VARModel, n_terms: int) -> np.ndarray:
    """First ``n_terms`` moving-average matrices: B_0 = I, B_i = sum_j Phi_j B_{i-j}."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    phi = var.coefficients
    p, n, _ = phi.shape
    out = np.zeros((n_terms, n, n))
    out[0] = np.eye(n)
    for i in range(1, n_terms):
        acc = np.zeros((n, n))
        for j in range(1, min(i, p) + 1):
            acc += phi[j - 1] @ out[i - j]
        out[i] = acc
    return out


def gfevd(var: VARModel, horizon: int, indices: tuple[str, ...] = ()) -> SpilloverGraph:
    """Row-standardized generalized FEVD shares at the given horizon.

    theta[i, j] is index j's generalized share of index i's H-step
    forecast-error variance; rows sum to one and entries are non-negative.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    sigma = var.residual_cov
    n = sigma.shape[0]
    diag = np.diag(sigma)
    if (diag <= 0).any():
        raise EstimationError("zero diagonal in the innovation covariance")
    b = ma_coefficients(var, horizon)
    numer = np.zeros((n, n))
    denom = np.zeros(n)
    for h in range(horizon):
        bs = b[h] @ sigma
        numer += bs**2
        denom += np.diag(bs @ b[h].T)
    theta = numer / diag[None, :] / denom[:, None]
    if not np.isfinite(theta).all():
        raise EstimationError("non-finite FEVD shares")
    theta = theta / theta.sum(axis=1, keepdims=True)
    return SpilloverGraph(
        theta=theta,
        horizon=horizon,
        indices=tuple(indices),
        var_provenance=var.summary(),
    )


def sparsify(graph: SpilloverGraph, keep_fraction: float) -> SpilloverGraph:
    """Keep the globally largest off-diagonal shares, zeroing the rest.

    ceil(keep_fraction * (N*N - N)) off-diagonal cells survive; ties are
    broken by (row, column) order, keeping the earlier cell.  The diagonal is
    always kept and rows are not renormalized.
    """
    if not 0.0 <= keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in [0, 1]")
    if graph.sparsified:
        raise ValueError("graph is already sparsified")
    theta = graph.theta
    n = theta.shape[0]
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    keep_count = math.ceil(keep_fraction * len(off))
    ranked = sorted(off, key=lambda ij: (-theta[ij], ij))
    kept = set(ranked[:keep_count])
    out = np.where(np.eye(n, dtype=bool), theta, 0.0)
    for ij in kept:
        out[ij] = theta[ij]
    return SpilloverGraph(
        theta=out,
        horizon=graph.horizon,
        indices=graph.indices,
        sparsified=True,
        keep_fraction=keep_fraction,
        var_provenance=dict(graph.var_provenance),
    )


def net_spillover(graph: SpilloverGraph) -> np.ndarray:
    """Directional net spillovers, 100 * (transmitted - received) per index.

    Requires an unsparsified (row-stochastic) graph; the values sum to zero.
    """
    if graph.sparsified:
        raise ValueError("net spillovers are defined for unsparsified graphs only")
    theta = graph.theta
    off = theta - np.diag(np.diag(theta))
    return 100.0 * (off.sum(axis=0) - off.sum(axis=1))


def default_min_rows(n: int, p: int) -> int:
    """Default common-row threshold for batch_adjacency."""
    return math.ceil(5 * (n * p + 1) / n)


def batch_adjacency(
    values: np.ndarray,
    observed: np.ndarray,
    indices: tuple[str, ...] = (),
    p: int = 3,
    horizon: int = 10,
    keep_fraction: float = 0.5,
    min_rows: int | None = None,
    ridge: float = 1e-8,
) -> SpilloverGraph | None:
    """Estimate one spillover graph from a window's fully-observed rows.

    Rows with any masked cell are dropped before fitting.  Returns None as a
    fallback signal when too few common rows remain or estimation hits a
    data-quality failure; callers substitute a previously valid graph.
    """
    values = np.asarray(values, dtype=np.float64)
    observed = np.asarray(observed, dtype=bool)
    if values.shape != observed.shape or values.ndim != 2:
        raise ValueError("values and observed must be matching (T, N) arrays")
    n = values.shape[1]
    if min_rows is None:
        min_rows = default_min_rows(n, p)
    # fit_var itself needs N*p + p + 10 rows, so the threshold can't sit below that
    required = max(min_rows, n * p + p + 10)
    common = values[observed.all(axis=1)]
    if common.shape[0] < required:
        return None
    try:
        model = fit_var(common, p=p, ridge=ridge)
        graph = gfevd(model, horizon, indices=indices)
    except EstimationError:
        return None
    if keep_fraction < 1.0:
        graph = sparsify(graph, keep_fraction)
    return graph


def inactivity_ratio(panel: RVPanel, active_threshold: int = 5) -> np.ndarray:
    """Share of qualifying days on which each index is inactive.

    A day qualifies for index n when at least ``active_threshold`` other
    indices are active; the ratio counts n's inactive days among them.
    Raises if some index never has a qualifying day.
    """
    observed = panel.observed
    others = observed.sum(axis=1, keepdims=True) - observed.astype(int)
    qualifies = others >= active_threshold
    denom = qualifies.sum(axis=0)
    if (denom == 0).any():
        bad = [panel.indices[k] for k in np.flatnonzero(denom == 0)]
        raise ValueError(f"activity threshold never met for: {', '.join(bad)}")
    numer = (qualifies & ~observed).sum(axis=0)
    return numer / denom


def graph_to_json_dict(graph: SpilloverGraph) -> dict:
    return {
        "indices": list(graph.indices),
        "horizon": graph.horizon,
        "p": graph.var_provenance.get("p"),
        "keep_fraction": graph.keep_fraction,
        "sparsified": graph.sparsified,
        "theta": graph.theta.tolist(),
        "var_provenance": dict(graph.var_provenance),
    }


def graph_from_json_dict(payload: dict) -> SpilloverGraph:
    return SpilloverGraph(
        theta=np.asarray(payload["theta"], dtype=np.float64),
        horizon=int(payload["horizon"]),
        indices=tuple(payload.get("indices") or ()),
        sparsified=bool(payload.get("sparsified", False)),
        keep_fraction=float(payload.get("keep_fraction", 1.0)),
        var_provenance=dict(payload.get("var_provenance") or {}),
    )
