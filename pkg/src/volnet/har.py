"""Heterogeneous autoregressive baselines on the intersection calendar.

All variants regress next-day volatility on daily, weekly and monthly
components of its own history; the multivariate ones add cross-index terms:
full coefficient matrices (VHAR), other markets' daily lags (HAR-KS), graph
aggregates of the three components under a pooled design (GHAR), or stacked
rectified graph convolutions of them (GNNHAR).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "HARCoefficients",
    "har_features",
    "fit_har",
    "fit_vhar",
    "fit_har_ks",
    "fit_ghar",
    "fit_gnnhar",
    "one_step",
    "symmetric_normalized",
]

VARIANTS = ("har", "vhar", "har-ks", "ghar", "gnnhar")
MIN_USABLE_ROWS = 50
_LOOKBACK = 22


@dataclass(frozen=True)
class HARCoefficients:
    """Fitted coefficients for one HAR-family variant.

    Shapes depend on the variant: per-index scalars (N,) for har/har-ks,
    full (N, N) matrices for vhar, pooled scalars for ghar, and graph
    convolution weights for gnnhar.  ``stderr`` carries OLS standard errors
    where the variant is a least-squares fit.
    """

    variant: str
    mode: str
    indices: tuple[str, ...]
    alpha: np.ndarray
    beta_d: np.ndarray | float | None = None
    beta_w: np.ndarray | float | None = None
    beta_m: np.ndarray | float | None = None
    cross: np.ndarray | None = None
    gamma_d: float | None = None
    gamma_w: float | None = None
    gamma_m: float | None = None
    gamma: np.ndarray | None = None
    thetas: tuple[np.ndarray, ...] | None = None
    s_matrix: np.ndarray | None = None
    stderr: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.mode not in ("overlap", "nonoverlap"):
            raise ValueError(f"unknown mode {self.mode!r}")
        n = len(self.indices)
        if np.shape(self.alpha) != (n,):
            raise ValueError("alpha must have one entry per index")
        if self.variant in ("har", "har-ks"):
            for b in (self.beta_d, self.beta_w, self.beta_m):
                if np.shape(b) != (n,):
                    raise ValueError(f"{self.variant} betas must be (N,)")
            if self.variant == "har-ks":
                if np.shape(self.cross) != (n, n):
                    raise ValueError("har-ks cross coefficients must be (N, N)")
        elif self.variant == "vhar":
            for b in (self.beta_d, self.beta_w, self.beta_m):
                if np.shape(b) != (n, n):
                    raise ValueError("vhar betas must be (N, N)")
        elif self.variant == "ghar":
            for b in (self.beta_d, self.beta_w, self.beta_m, self.gamma_d, self.gamma_w, self.gamma_m):
                if b is None or np.shape(b) != ():
                    raise ValueError("ghar slopes must be scalars")
            if self.s_matrix is None or self.s_matrix.shape != (n, n):
                raise ValueError("ghar needs an (N, N) graph operator")
        else:  # gnnhar
            for b in (self.beta_d, self.beta_w, self.beta_m):
                if b is None or np.shape(b) != ():
                    raise ValueError("gnnhar betas must be scalars")
            if self.gamma is None or self.gamma.shape != (3,):
                raise ValueError("gnnhar gamma must be (3,)")
            if not self.thetas or any(t.shape != (3, 3) for t in self.thetas):
                raise ValueError("gnnhar thetas must be (3, 3) per layer")
            if self.s_matrix is None or self.s_matrix.shape != (n, n):
                raise ValueError("gnnhar needs an (N, N) graph operator")


def har_features(series: np.ndarray, t: int, overlap: bool = True) -> tuple[float, float, float]:
    """Daily, weekly and monthly components for the target at position t.

    With overlap=True the weekly and monthly components are means of the 5
    and 22 most recent days (both including t-1); with overlap=False they
    cover the non-overlapping spans t-5..t-2 and t-22..t-6.  Requires
    t >= 22 so the monthly span fits.
    """
    series = np.asarray(series, dtype=np.float64)
    if t < _LOOKBACK or t > series.shape[0]:
        raise ValueError(f"target position {t} needs at least {_LOOKBACK} prior days")
    d = float(series[t - 1])
    if overlap:
        w = float(series[t - 5 : t].mean())
        m = float(series[t - _LOOKBACK : t].mean())
    else:
        w = float(series[t - 5 : t - 1].mean())
        m = float(series[t - _LOOKBACK : t - 5].mean())
    return d, w, m


def _component_matrices(values: np.ndarray, overlap: bool) -> tuple[np.ndarray, ...]:
    """(R, N) daily/weekly/monthly features and targets for t = 22..T-1."""
    values = np.asarray(values, dtype=np.float64)
    t_total, _ = values.shape
    rows = t_total - _LOOKBACK
    if rows < 1:
        raise ValueError(f"need more than {_LOOKBACK} rows of history")
    cum = np.vstack([np.zeros((1, values.shape[1])), np.cumsum(values, axis=0)])

    def window_mean(lo_off: int, hi_off: int) -> np.ndarray:
        # mean of values[t-lo_off : t-hi_off] for each target t
        t_idx = np.arange(_LOOKBACK, t_total)
        return (cum[t_idx - hi_off] - cum[t_idx - lo_off]) / (lo_off - hi_off)

    d = values[_LOOKBACK - 1 : t_total - 1]
    if overlap:
        w = window_mean(5, 0)
        m = window_mean(_LOOKBACK, 0)
    else:
        w = window_mean(5, 1)
        m = window_mean(_LOOKBACK, 5)
    y = values[_LOOKBACK:]
    return d, w, m, y


def _ols(design: np.ndarray, target: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Least squares with full-rank check; returns coefficients and stderr."""
    rows, cols = design.shape
    if np.linalg.matrix_rank(design) < cols:
        raise ValueError(f"collinear features in the {what} design")
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    dof = rows - cols
    if dof <= 0:
        raise ValueError(f"insufficient rows for the {what} design")
    xtx_inv = np.linalg.inv(design.T @ design)
    if target.ndim == 1:
        s2 = float(resid @ resid) / dof
        stderr = np.sqrt(s2 * np.diag(xtx_inv))
    else:
        s2 = (resid**2).sum(axis=0) / dof
        stderr = np.sqrt(np.outer(np.diag(xtx_inv), s2))
    return coef, stderr


def _check_rows(values: np.ndarray) -> None:
    rows = values.shape[0] - _LOOKBACK
    if rows < MIN_USABLE_ROWS:
        raise ValueError(
            f"insufficient data: {max(rows, 0)} usable rows, need {MIN_USABLE_ROWS}"
        )


def fit_har(
    values: np.ndarray, indices: tuple[str, ...], mode: str = "overlap"
) -> HARCoefficients:
    """Per-index univariate HAR by OLS on [1, d, w, m]."""
    values = np.asarray(values, dtype=np.float64)
    _check_rows(values)
    d, w, m, y = _component_matrices(values, mode == "overlap")
    n = values.shape[1]
    alpha = np.zeros(n)
    betas = np.zeros((3, n))
    se = np.zeros((4, n))
    for k in range(n):
        design = np.column_stack([np.ones(d.shape[0]), d[:, k], w[:, k], m[:, k]])
        coef, stderr = _ols(design, y[:, k], "har")
        alpha[k] = coef[0]
        betas[:, k] = coef[1:]
        se[:, k] = stderr
    return HARCoefficients(
        variant="har",
        mode=mode,
        indices=tuple(indices),
        alpha=alpha,
        beta_d=betas[0],
        beta_w=betas[1],
        beta_m=betas[2],
        stderr={"alpha": se[0], "beta_d": se[1], "beta_w": se[2], "beta_m": se[3]},
    )


def fit_vhar(
    values: np.ndarray, indices: tuple[str, ...], mode: str = "overlap"
) -> HARCoefficients:
    """Full-matrix HAR: each equation regresses on all indices' d, w, m."""
    values = np.asarray(values, dtype=np.float64)
    _check_rows(values)
    d, w, m, y = _component_matrices(values, mode == "overlap")
    n = values.shape[1]
    design = np.column_stack([np.ones(d.shape[0]), d, w, m])
    coef, stderr = _ols(design, y, "vhar")
    return HARCoefficients(
        variant="vhar",
        mode=mode,
        indices=tuple(indices),
        alpha=coef[0].copy(),
        beta_d=coef[1 : 1 + n].T.copy(),
        beta_w=coef[1 + n : 1 + 2 * n].T.copy(),
        beta_m=coef[1 + 2 * n :].T.copy(),
        stderr={
            "alpha": stderr[0],
            "beta_d": stderr[1 : 1 + n].T,
            "beta_w": stderr[1 + n : 1 + 2 * n].T,
            "beta_m": stderr[1 + 2 * n :].T,
        },
    )


def fit_har_ks(
    values: np.ndarray, indices: tuple[str, ...], mode: str = "overlap"
) -> HARCoefficients:
    """HAR with own d/w/m plus every other index's daily lag per equation."""
    values = np.asarray(values, dtype=np.float64)
    _check_rows(values)
    d, w, m, y = _component_matrices(values, mode == "overlap")
    n = values.shape[1]
    alpha = np.zeros(n)
    betas = np.zeros((3, n))
    cross = np.zeros((n, n))
    se_own = np.zeros((4, n))
    se_cross = np.zeros((n, n))
    for k in range(n):
        others = [j for j in range(n) if j != k]
        design = np.column_stack(
            [np.ones(d.shape[0]), d[:, k], w[:, k], m[:, k], d[:, others]]
        )
        coef, stderr = _ols(design, y[:, k], "har-ks")
        alpha[k] = coef[0]
        betas[:, k] = coef[1:4]
        cross[k, others] = coef[4:]
        se_own[:, k] = stderr[:4]
        se_cross[k, others] = stderr[4:]
    return HARCoefficients(
        variant="har-ks",
        mode=mode,
        indices=tuple(indices),
        alpha=alpha,
        beta_d=betas[0],
        beta_w=betas[1],
        beta_m=betas[2],
        cross=cross,
        stderr={
            "alpha": se_own[0],
            "beta_d": se_own[1],
            "beta_w": se_own[2],
            "beta_m": se_own[3],
            "cross": se_cross,
        },
    )


def symmetric_normalized(adjacency) -> np.ndarray:
    """D^{-1/2} ((A + A') / 2) D^{-1/2}; raises on zero-degree nodes.

    Accepts a raw matrix or a SpilloverGraph (its theta is used).
    """
    adjacency = getattr(adjacency, "theta", adjacency)
    adjacency = np.asarray(adjacency, dtype=np.float64)
    sym = (adjacency + adjacency.T) / 2.0
    degree = sym.sum(axis=1)
    if (degree <= 0).any():
        raise ValueError("zero-degree node in the adjacency")
    inv_sqrt = 1.0 / np.sqrt(degree)
    return sym * inv_sqrt[:, None] * inv_sqrt[None, :]


def fit_ghar(
    values: np.ndarray,
    indices: tuple[str, ...],
    adjacency,
    mode: str = "nonoverlap",
) -> HARCoefficients:
    """Pooled graph HAR: per-index intercepts, shared own and neighbor slopes.

    Neighbor components are S @ [d, w, m] with the symmetric normalized
    adjacency S; one OLS over all index-day rows estimates the six shared
    slopes.
    """
    values = np.asarray(values, dtype=np.float64)
    _check_rows(values)
    s_matrix = symmetric_normalized(adjacency)
    d, w, m, y = _component_matrices(values, mode == "overlap")
    n = values.shape[1]
    rows = d.shape[0]
    sd, sw, sm = d @ s_matrix.T, w @ s_matrix.T, m @ s_matrix.T
    dummies = np.tile(np.eye(n), (rows, 1))
    slopes = np.column_stack(
        [arr.reshape(-1) for arr in (d, w, m, sd, sw, sm)]
    )
    design = np.column_stack([dummies, slopes])
    coef, stderr = _ols(design, y.reshape(-1), "ghar")
    return HARCoefficients(
        variant="ghar",
        mode=mode,
        indices=tuple(indices),
        alpha=coef[:n].copy(),
        beta_d=float(coef[n]),
        beta_w=float(coef[n + 1]),
        beta_m=float(coef[n + 2]),
        gamma_d=float(coef[n + 3]),
        gamma_w=float(coef[n + 4]),
        gamma_m=float(coef[n + 5]),
        s_matrix=s_matrix,
        stderr={
            "alpha": stderr[:n],
            "beta_d": stderr[n],
            "beta_w": stderr[n + 1],
            "beta_m": stderr[n + 2],
            "gamma_d": stderr[n + 3],
            "gamma_w": stderr[n + 4],
            "gamma_m": stderr[n + 5],
        },
    )


def _gnnhar_forward(params: dict, d, w, m, s_matrix, layers: int):
    """Autodiff forward; d/w/m are (R, N) arrays, returns an (R, N) tensor."""
    h = ad.concat(
        [ad.constant(d[:, :, None]), ad.constant(w[:, :, None]), ad.constant(m[:, :, None])],
        axis=-1,
    )
    s_const = ad.constant(s_matrix)
    for layer in range(layers):
        h = ad.relu(ad.matmul(ad.matmul(s_const, h), params[f"theta{layer}"]))
    lin = (
        params["alpha"]
        + params["beta_d"] * ad.constant(d)
        + params["beta_w"] * ad.constant(w)
        + params["beta_m"] * ad.constant(m)
    )
    conv = ad.reshape(ad.matmul(h, params["gamma"]), d.shape)
    return lin + conv


def _gnnhar_predict(coefs: HARCoefficients, d, w, m) -> np.ndarray:
    """Numpy forward for fitted gnnhar coefficients; d/w/m are (R, N)."""
    h = np.stack([d, w, m], axis=-1)
    for theta in coefs.thetas:
        h = np.maximum(coefs.s_matrix @ h @ theta, 0.0)
    lin = (
        coefs.alpha
        + float(coefs.beta_d) * d
        + float(coefs.beta_w) * w
        + float(coefs.beta_m) * m
    )
    return lin + (h @ coefs.gamma[:, None])[..., 0]


def fit_gnnhar(
    values: np.ndarray,
    indices: tuple[str, ...],
    adjacency,
    mode: str = "nonoverlap",
    layers: int = 1,
    epochs: int = 500,
    step_size: float = 0.05,
    seed: int = 0,
) -> tuple[HARCoefficients, list[float]]:
    """Graph-convolutional HAR fitted by full-batch gradient descent on MSE.

    Returns the coefficients and the per-epoch loss history.  Raises if the
    loss goes non-finite (diverged).
    """
    values = np.asarray(values, dtype=np.float64)
    _check_rows(values)
    if layers < 1:
        raise ValueError("layers must be >= 1")
    s_matrix = symmetric_normalized(adjacency)
    d, w, m, y = _component_matrices(values, mode == "overlap")
    n = values.shape[1]
    rng = np.random.Generator(np.random.Philox(seed))
    params = {
        "alpha": np.zeros(n),
        "beta_d": np.zeros(()),
        "beta_w": np.zeros(()),
        "beta_m": np.zeros(()),
        "gamma": np.zeros((3, 1)),
    }
    for layer in range(layers):
        params[f"theta{layer}"] = rng.uniform(-1.0, 1.0, size=(3, 3))
    names = sorted(params)
    scale = 1.0 / y.size
    losses: list[float] = []
    for epoch in range(epochs):
        tensors = {k: ad.parameter(v) for k, v in params.items()}
        pred = _gnnhar_forward(tensors, d, w, m, s_matrix, layers)
        loss = ad.total(ad.square(ad.constant(y) - pred)) * scale
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            last = losses[-1] if losses else float("nan")
            raise ValueError(f"gnnhar training diverged at epoch {epoch} (last finite loss {last})")
        losses.append(loss_val)
        grads = ad.gradients(loss, [tensors[k] for k in names])
        for name, grad in zip(names, grads):
            params[name] = params[name] - step_size * grad
    coefs = HARCoefficients(
        variant="gnnhar",
        mode=mode,
        indices=tuple(indices),
        alpha=params["alpha"],
        beta_d=float(params["beta_d"]),
        beta_w=float(params["beta_w"]),
        beta_m=float(params["beta_m"]),
        gamma=params["gamma"][:, 0].copy(),
        thetas=tuple(params[f"theta{layer}"] for layer in range(layers)),
        s_matrix=s_matrix,
    )
    return coefs, losses


def one_step(coefs: HARCoefficients, block: np.ndarray) -> np.ndarray:
    """Forecast the day after the block's last row; block is (T, N), T >= 22."""
    block = np.asarray(block, dtype=np.float64)
    t = block.shape[0]
    n = len(coefs.indices)
    if block.shape[1] != n:
        raise ValueError("block width does not match the fitted indices")
    overlap = coefs.mode == "overlap"
    feats = np.array([har_features(block[:, k], t, overlap) for k in range(n)])
    d, w, m = feats[:, 0], feats[:, 1], feats[:, 2]
    if coefs.variant == "har":
        return coefs.alpha + coefs.beta_d * d + coefs.beta_w * w + coefs.beta_m * m
    if coefs.variant == "vhar":
        return coefs.alpha + coefs.beta_d @ d + coefs.beta_w @ w + coefs.beta_m @ m
    if coefs.variant == "har-ks":
        own = coefs.alpha + coefs.beta_d * d + coefs.beta_w * w + coefs.beta_m * m
        return own + coefs.cross @ d
    if coefs.variant == "ghar":
        s = coefs.s_matrix
        return (
            coefs.alpha
            + coefs.beta_d * d
            + coefs.beta_w * w
            + coefs.beta_m * m
            + coefs.gamma_d * (s @ d)
            + coefs.gamma_w * (s @ w)
            + coefs.gamma_m * (s @ m)
        )
    return _gnnhar_predict(coefs, d[None, :], w[None, :], m[None, :])[0]
