"""Synthetic panels with known ground truth for estimation-recovery checks.

A stable VAR drives the latent levels; a positivity transform maps them to
the measurement scale; optional per-index holiday draws knock out cells the
way uncommon trading days do.  Everything is deterministic given the seed,
using a counter-based generator.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field

import numpy as np

from . import spillover
from .panel import RVPanel

__all__ = [
    "SynthSpec",
    "gen_var_panel",
    "apply_holidays",
    "planted_graph_recovery",
    "TRANSFORMS",
]

TRANSFORMS = ("abs", "exp")
_BURN_IN = 200
_EPOCH = _dt.date(2000, 1, 3)


def _business_dates(count: int) -> tuple[str, ...]:
    out = []
    day = _EPOCH
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day.isoformat())
        day += _dt.timedelta(days=1)
    return tuple(out)


def _index_names(n: int) -> tuple[str, ...]:
    width = max(2, len(str(n - 1)))
    return tuple(f"IDX{i:0{width}d}" for i in range(n))


@dataclass(frozen=True)
class SynthSpec:
    """Ground-truth description of one synthetic panel.

    ``coefficients`` may be (N, N) for a single lag or (p, N, N); the
    companion spectral radius must be below 1.  Holiday probabilities are
    per index and capped at 0.3 so the union calendar stays dense.
    """

    n_indices: int
    n_rows: int
    coefficients: np.ndarray
    innovation_cov: np.ndarray
    transform: str = "abs"
    holiday_prob: tuple[float, ...] = ()
    seed: int = 0
    scale: float = 0.01
    floor: float = 1e-6

    def __post_init__(self) -> None:
        n = self.n_indices
        if n < 2 or self.n_rows < 1:
            raise ValueError("need n_indices >= 2 and n_rows >= 1")
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        if coeffs.ndim == 2:
            coeffs = coeffs[None]
        if coeffs.ndim != 3 or coeffs.shape[1:] != (n, n):
            raise ValueError("coefficients must be (N, N) or (p, N, N)")
        if not np.isfinite(coeffs).all():
            raise ValueError("coefficients must be finite")
        radius = _companion_radius(coeffs)
        if radius >= 1:
            raise ValueError(f"unstable VAR coefficients: spectral radius {radius:.4f} >= 1")
        cov = np.asarray(self.innovation_cov, dtype=np.float64)
        if cov.shape != (n, n) or not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("innovation covariance must be a symmetric (N, N) matrix")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("innovation covariance must be symmetric positive definite") from None
        if self.transform not in TRANSFORMS:
            raise ValueError(f"transform must be one of {TRANSFORMS}")
        probs = tuple(float(p) for p in self.holiday_prob)
        if probs and len(probs) != n:
            raise ValueError("holiday_prob must list one probability per index")
        if any(p < 0 or p > 0.3 for p in probs):
            raise ValueError("holiday probabilities must lie in [0, 0.3]")
        if not self.scale > 0 or self.floor < 0:
            raise ValueError("scale must be positive and floor non-negative")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "innovation_cov", cov)
        object.__setattr__(self, "holiday_prob", probs)

    @property
    def lag_order(self) -> int:
        return self.coefficients.shape[0]

    def to_dict(self) -> dict:
        return {
            "n_indices": self.n_indices,
            "n_rows": self.n_rows,
            "coefficients": self.coefficients.tolist(),
            "innovation_cov": self.innovation_cov.tolist(),
            "transform": self.transform,
            "holiday_prob": list(self.holiday_prob),
            "seed": self.seed,
            "scale": self.scale,
            "floor": self.floor,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SynthSpec":
        payload = dict(payload)
        aliases = {
            "N": "n_indices", "T": "n_rows",
            "phi": "coefficients", "sigma": "innovation_cov",
        }
        for short, full in aliases.items():
            if short in payload:
                if full in payload:
                    raise ValueError(f"spec sets both {short!r} and {full!r}")
                payload[full] = payload.pop(short)
        known = {
            "n_indices", "n_rows", "coefficients", "innovation_cov",
            "transform", "holiday_prob", "seed", "scale", "floor",
        }
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown spec keys: {', '.join(unknown)}")
        if "coefficients" in payload:
            payload["coefficients"] = np.asarray(payload["coefficients"], dtype=np.float64)
        if "innovation_cov" in payload:
            payload["innovation_cov"] = np.asarray(payload["innovation_cov"], dtype=np.float64)
        if "holiday_prob" in payload:
            payload["holiday_prob"] = tuple(payload["holiday_prob"])
        return cls(**payload)


def _companion_radius(coeffs: np.ndarray) -> float:
    p, n, _ = coeffs.shape
    companion = np.zeros((n * p, n * p))
    companion[:n] = coeffs.transpose(1, 0, 2).reshape(n, n * p)
    if p > 1:
        companion[n:, : n * (p - 1)] = np.eye(n * (p - 1))
    return float(np.abs(np.linalg.eigvals(companion)).max())


def gen_var_panel(spec: SynthSpec) -> RVPanel:
    """Simulate the VAR, apply the positivity transform, emit a full panel."""
    n, t = spec.n_indices, spec.n_rows
    p = spec.lag_order
    rng = np.random.Generator(np.random.Philox(spec.seed))
    chol = np.linalg.cholesky(spec.innovation_cov)
    shocks = rng.standard_normal((_BURN_IN + t, n)) @ chol.T
    levels = np.zeros((_BURN_IN + t, n))
    for row in range(_BURN_IN + t):
        acc = shocks[row].copy()
        for k in range(1, p + 1):
            if row - k >= 0:
                acc += spec.coefficients[k - 1] @ levels[row - k]
        levels[row] = acc
    levels = levels[_BURN_IN:]
    if spec.transform == "abs":
        values = np.abs(levels) * spec.scale + spec.floor
    else:
        values = np.maximum(np.exp(levels) * spec.scale, spec.floor)
    return RVPanel(
        dates=_business_dates(t),
        indices=_index_names(n),
        values=values,
        observed=np.ones((t, n), dtype=bool),
    )


def apply_holidays(panel: RVPanel, probabilities, seed: int) -> RVPanel:
    """Knock out cells independently per index; drop all-inactive rows."""
    probs = np.asarray(probabilities, dtype=np.float64)
    t, n = panel.values.shape
    if probs.shape != (n,):
        raise ValueError("probabilities must list one value per index")
    if (probs < 0).any() or (probs > 0.3).any():
        raise ValueError("holiday probabilities must lie in [0, 0.3]")
    rng = np.random.Generator(np.random.Philox(seed))
    inactive = rng.random((t, n)) < probs[None, :]
    observed = panel.observed & ~inactive
    keep = observed.any(axis=1)
    observed = observed[keep]
    values = np.where(observed, panel.values[keep], 0.0)
    return RVPanel(
        dates=tuple(d for d, k in zip(panel.dates, keep) if k),
        indices=panel.indices,
        values=values,
        observed=observed,
    )


def planted_graph_recovery(
    spec: SynthSpec,
    blocks,
    p: int = 3,
    horizon: int = 10,
    ridge: float = 1e-8,
) -> float:
    """Fraction of the top planted-count estimated edges inside the blocks.

    ``blocks`` partitions the index set; the planted edge set is every
    ordered off-diagonal pair within a block.  The estimated graph ranks
    off-diagonal entries the same way sparsification does.
    """
    n = spec.n_indices
    blocks = [tuple(int(i) for i in b) for b in blocks]
    flat = sorted(i for b in blocks for i in b)
    if flat != list(range(n)):
        raise ValueError("blocks must partition the index set")
    member = np.empty(n, dtype=int)
    for b_id, block in enumerate(blocks):
        for i in block:
            member[i] = b_id
    coeffs = spec.coefficients
    outside = member[:, None] != member[None, :]
    if np.abs(coeffs[:, outside]).max(initial=0.0) > 0:
        raise ValueError("coefficients are not block-diagonal over the given blocks")
    planted = {
        (i, j)
        for i in range(n)
        for j in range(n)
        if i != j and member[i] == member[j]
    }
    if not planted:
        raise ValueError("no planted off-diagonal edges: all blocks are singletons")
    panel = gen_var_panel(spec)
    var = spillover.fit_var(panel.values, p=p, ridge=ridge)
    graph = spillover.gfevd(var, horizon=horizon, indices=panel.indices)
    theta = graph.theta
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    ranked = sorted(off, key=lambda ij: (-theta[ij], ij))
    top = ranked[: len(planted)]
    hits = sum(1 for ij in top if ij in planted)
    return hits / len(planted)
