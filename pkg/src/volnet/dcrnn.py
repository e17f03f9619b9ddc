"""Diffusion-convolutional recurrent sequence-to-sequence volatility forecaster.

An encoder ingests l masked input days, a decoder rolls h forecast days
autoregressively from a zero go row.  Each recurrent cell replaces the dense
GRU matmuls with graph diffusion convolutions driven by that day's masked
random-walk transition matrix, so information flows only along spillover
edges between indices active on the day.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "DCGRUConfig",
    "DCGRUModel",
    "ForecastOutput",
    "transition_matrix",
    "diffusion_conv",
    "masked_transitions",
    "seq2seq_forward",
    "backward",
    "masked_mae",
    "masked_mae_loss",
]

_GATES = ("reset", "update", "cand")


def transition_matrix(adjacency: np.ndarray) -> np.ndarray:
    """Random-walk normalization D^{-1} A; zero-degree rows stay all-zero."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ValueError("adjacency must be square")
    if (adjacency < 0).any():
        raise ValueError("adjacency weights must be non-negative")
    degree = adjacency.sum(axis=1)
    scale = np.where(degree > 0, 1.0 / np.where(degree > 0, degree, 1.0), 0.0)
    return adjacency * scale[:, None]


def masked_transitions(theta: np.ndarray, day_active: np.ndarray) -> np.ndarray:
    """Per-day transition matrices from one graph and (T, N) activity flags.

    Day t uses the graph with row and column n zeroed for every index n
    inactive on t, then random-walk normalization.
    """
    day_active = np.asarray(day_active, dtype=bool)
    t_days, n = day_active.shape
    out = np.empty((t_days, n, n))
    for t in range(t_days):
        act = day_active[t].astype(np.float64)
        out[t] = transition_matrix(theta * np.outer(act, act))
    return out


def diffusion_conv(signal, transition, thetas) -> Tensor:
    """Graph diffusion convolution sum_k (P^k X) theta_k.

    Args:
        signal: (..., N, C) tensor or array.
        transition: (..., N, N) constant transition matrix (numpy).
        thetas: list of (C, C_out) coefficient tensors, one per diffusion
            step k = 0..K-1.
    """
    if not thetas:
        raise ValueError("need at least one diffusion coefficient")
    p = ad.constant(transition)
    step = signal if isinstance(signal, Tensor) else ad.constant(signal)
    out = ad.matmul(step, thetas[0])
    for theta in thetas[1:]:
        step = ad.matmul(p, step)
        out = out + ad.matmul(step, theta)
    return out


@dataclass(frozen=True)
class DCGRUConfig:
    """Architecture hyperparameters shared by encoder and decoder."""

    hidden_dim: int = 32
    num_layers: int = 2
    k_max: int = 2
    input_dim: int = 1

    def __post_init__(self) -> None:
        if self.hidden_dim < 1 or self.num_layers < 1 or self.k_max < 1 or self.input_dim < 1:
            raise ValueError("all architecture sizes must be >= 1")


def _cell_names(side: str, layer: int, k_max: int) -> list[str]:
    names = []
    for gate in _GATES:
        for k in range(k_max):
            names.append(f"{side}{layer}.{gate}.theta{k}")
        names.append(f"{side}{layer}.{gate}.bias")
    return names


def parameter_names(config: DCGRUConfig) -> list[str]:
    """Deterministic parameter ordering used for init and serialization."""
    names = []
    for side in ("enc", "dec"):
        for layer in range(config.num_layers):
            names.extend(_cell_names(side, layer, config.k_max))
    names.extend(["proj.weight", "proj.bias"])
    return names


def _parameter_shape(name: str, config: DCGRUConfig) -> tuple[int, ...]:
    h = config.hidden_dim
    if name == "proj.weight":
        return (h, 1)
    if name == "proj.bias":
        return (1,)
    head, _, tail = name.partition(".")
    layer = int(head[3:])
    c_in = config.input_dim if layer == 0 else h
    if tail.endswith("bias"):
        return (h,)
    return (c_in + h, h)


class DCGRUModel:
    """Parameter container plus the seq2seq forward pass.

    The model is index-count agnostic: diffusion coefficients act on
    channels, so the same parameters serve any panel width.
    """

    def __init__(self, config: DCGRUConfig, params: dict[str, np.ndarray]):
        expected = parameter_names(config)
        if sorted(params) != sorted(expected):
            raise ValueError("parameter names do not match the configuration")
        for name in expected:
            shape = _parameter_shape(name, config)
            if params[name].shape != shape:
                raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    @classmethod
    def build(cls, config: DCGRUConfig, seed: int) -> "DCGRUModel":
        """Init weights uniform in [-s, s] with s = fan_in^{-1/2}, biases zero.

        Uses a counter-based generator so the draw is reproducible across
        platforms.
        """
        rng = np.random.Generator(np.random.Philox(seed))
        params = {}
        for name in parameter_names(config):
            shape = _parameter_shape(name, config)
            if name.endswith("bias"):
                params[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                params[name] = rng.uniform(-bound, bound, size=shape)
        return cls(config, params)

    @property
    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "config": {
                "hidden_dim": self.config.hidden_dim,
                "num_layers": self.config.num_layers,
                "k_max": self.config.k_max,
                "input_dim": self.config.input_dim,
            },
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DCGRUModel":
        version = payload.get("format_version", 1)
        if version != 1:
            raise ValueError(f"unsupported model format version {version}")
        config = DCGRUConfig(**payload["config"])
        params = {k: np.asarray(v, dtype=np.float64) for k, v in payload["params"].items()}
        return cls(config, params)

    # -- forward pass -----------------------------------------------------

    def _lift(self, trainable: bool) -> dict[str, Tensor]:
        wrap = ad.parameter if trainable else ad.constant
        return {k: wrap(v) for k, v in self.params.items()}

    def _cell_step(self, params, side, layer, x_t, h_prev, p_t) -> Tensor:
        """One DCGRU update; x_t (B, N, C), h_prev (B, N, H), p_t (B, N, N)."""
        k_max = self.config.k_max
        prefix = f"{side}{layer}"

        def gate_thetas(gate):
            return [params[f"{prefix}.{gate}.theta{k}"] for k in range(k_max)]

        z = ad.concat([x_t, h_prev], axis=-1)
        r = ad.sigmoid(diffusion_conv(z, p_t, gate_thetas("reset")) + params[f"{prefix}.reset.bias"])
        u = ad.sigmoid(diffusion_conv(z, p_t, gate_thetas("update")) + params[f"{prefix}.update.bias"])
        zc = ad.concat([x_t, r * h_prev], axis=-1)
        c = ad.tanh(diffusion_conv(zc, p_t, gate_thetas("cand")) + params[f"{prefix}.cand.bias"])
        return u * h_prev + c - u * c

    def _stack_step(self, params, side, x_t, hidden, p_t) -> Tensor:
        """Run the layer stack for one day, updating hidden states in place."""
        inp = x_t
        for layer in range(self.config.num_layers):
            hidden[layer] = self._cell_step(params, side, layer, inp, hidden[layer], p_t)
            inp = hidden[layer]
        return inp

    def forward(
        self,
        x: np.ndarray,
        ex: np.ndarray,
        transitions: np.ndarray,
        horizon: int,
        ey: np.ndarray | None = None,
        params: dict[str, Tensor] | None = None,
        trace: list | None = None,
    ) -> list[Tensor]:
        """Encode l masked days, decode h forecast days autoregressively.

        Args:
            x: (B, l, N) standardized inputs (values at masked cells are
                ignored: the model multiplies by ex internally).
            ex: (B, l, N) input-day activity.
            transitions: (B, l+h, N, N) per-day masked transition matrices.
            horizon: number of decoder steps h.
            ey: optional (B, h, N) forecast-day activity used to mask the
                autoregressive feedback; defaults to all-active.
            params: optional tensor parameters (for training); defaults to
                constants built from the stored arrays.
            trace: optional list that receives the top-layer hidden state
                value (B, N, hidden) after every encoder and decoder step.

        Returns:
            List of h tensors of shape (B, N, 1), standardized forecasts.
        """
        x = np.asarray(x, dtype=np.float64)
        ex = np.asarray(ex, dtype=np.float64)
        b, l, n = x.shape
        if transitions.shape != (b, l + horizon, n, n):
            raise ValueError("transitions must be (B, l+h, N, N)")
        if ey is None:
            ey = np.ones((b, horizon, n))
        if params is None:
            params = self._lift(trainable=False)
        h_dim = self.config.hidden_dim
        hidden = [ad.constant(np.zeros((b, n, h_dim))) for _ in range(self.config.num_layers)]
        for t in range(l):
            x_t = ad.constant((x[:, t] * ex[:, t])[:, :, None])
            top = self._stack_step(params, "enc", x_t, hidden, transitions[:, t])
            if trace is not None:
                trace.append(top.value.copy())
        outputs: list[Tensor] = []
        feed: Tensor = ad.constant(np.zeros((b, n, 1)))
        for s in range(horizon):
            top = self._stack_step(params, "dec", feed, hidden, transitions[:, l + s])
            if trace is not None:
                trace.append(top.value.copy())
            pred = ad.matmul(top, params["proj.weight"]) + params["proj.bias"]
            outputs.append(pred)
            if s + 1 < horizon:
                feed = pred * ad.constant(ey[:, s][:, :, None])
        return outputs

    def predict(
        self, x: np.ndarray, ex: np.ndarray, transitions: np.ndarray, horizon: int,
        ey: np.ndarray | None = None,
    ) -> np.ndarray:
        """Forward pass without gradient bookkeeping; returns (B, h, N)."""
        outs = self.forward(x, ex, transitions, horizon, ey=ey)
        return np.stack([o.value[:, :, 0] for o in outs], axis=1)


def masked_mae(y_hat: np.ndarray, y_tilde: np.ndarray, ey: np.ndarray) -> float:
    """Mean absolute error over active cells: sum|Y*E - E*Yhat| / sum(E)."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    ey = np.asarray(ey, dtype=np.float64)
    if y_hat.shape != ey.shape or y_tilde.shape != ey.shape:
        raise ValueError("y_hat, y_tilde and ey must share a shape")
    denom = ey.sum()
    if denom <= 0:
        raise ValueError("no active targets")
    return float(np.abs(y_tilde * ey - ey * y_hat).sum() / denom)


def masked_mae_loss(outputs: list[Tensor], y: np.ndarray, ey: np.ndarray) -> Tensor:
    """Tensor-valued masked MAE across decoder steps.

    Args:
        outputs: h tensors of shape (B, N, 1) from the forward pass.
        y: (B, h, N) standardized targets (already zeroed at masked cells).
        ey: (B, h, N) forecast-day activity.
    """
    denom = float(np.asarray(ey).sum())
    if denom <= 0:
        raise ValueError("no active targets")
    acc = None
    for s, pred in enumerate(outputs):
        mask = ad.constant(ey[:, s][:, :, None])
        truth = ad.constant((y[:, s] * ey[:, s])[:, :, None])
        term = ad.total(ad.absolute(truth - mask * pred))
        acc = term if acc is None else acc + term
    return acc * (1.0 / denom)


@dataclass(frozen=True)
class ForecastOutput:
    """Standardized forecasts for one window, optionally with hidden states."""

    y_hat: np.ndarray
    hidden_trace: tuple | None = None


def _window_transitions(window, masked_adjacencies) -> np.ndarray:
    t_x = window.x.shape[0]
    t_y = window.y.shape[0]
    if len(masked_adjacencies) != t_x + t_y:
        raise ValueError(
            f"need {t_x + t_y} per-day adjacencies, got {len(masked_adjacencies)}"
        )
    return np.stack([transition_matrix(a) for a in masked_adjacencies])[None]


def seq2seq_forward(model: DCGRUModel, window, masked_adjacencies, collect_hidden: bool = False) -> ForecastOutput:
    """Run one window through the model; adjacencies are the per-day masked graphs."""
    transitions = _window_transitions(window, masked_adjacencies)
    horizon = window.y.shape[0]
    trace: list | None = [] if collect_hidden else None
    outs = model.forward(
        window.x[None], window.ex[None], transitions, horizon,
        ey=window.ey[None], trace=trace,
    )
    y_hat = np.stack([o.value[0, :, 0] for o in outs])
    if not np.isfinite(y_hat).all():
        raise ValueError("non-finite forecast output")
    hidden = tuple(h[0] for h in trace) if collect_hidden else None
    return ForecastOutput(y_hat=y_hat, hidden_trace=hidden)


def backward(model: DCGRUModel, window, masked_adjacencies) -> dict[str, np.ndarray]:
    """Exact masked-MAE gradients for every parameter on one window."""
    transitions = _window_transitions(window, masked_adjacencies)
    horizon = window.y.shape[0]
    tensors = model._lift(trainable=True)
    outs = model.forward(
        window.x[None], window.ex[None], transitions, horizon,
        ey=window.ey[None], params=tensors,
    )
    loss = masked_mae_loss(outs, window.y[None], window.ey[None])
    names = sorted(tensors)
    grads = ad.gradients(loss, [tensors[k] for k in names])
    out = {}
    for name, grad in zip(names, grads):
        if not np.isfinite(grad).all():
            raise ValueError(f"non-finite gradient for parameter {name}")
        out[name] = grad
    return out
