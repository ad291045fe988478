"""
Numpy function approximators: two-hidden-layer ReLU MLPs for policies and critics, action heads,
Adam, and checkpoint files.

Parameters are plain dicts of arrays (W0, b0, W1, b1, W2, b2, plus log_std for policies) so they
can be averaged, compared and saved without extra machinery.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import InputError, TrainingError
from .util import ensure_parent_dir

Params = dict[str, np.ndarray]
PolicyParams = Params
ValueParams = Params

CHECKPOINT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)
LAYER_KEYS = ("W0", "b0", "W1", "b1", "W2", "b2")


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def _init_mlp(in_dim: int, out_dim: int, hidden: int, out_gain: float, rng: np.random.Generator) -> Params:
    return {
        "W0": orthogonal((in_dim, hidden), math.sqrt(2.0), rng),
        "b0": np.zeros(hidden),
        "W1": orthogonal((hidden, hidden), math.sqrt(2.0), rng),
        "b1": np.zeros(hidden),
        "W2": orthogonal((hidden, out_dim), out_gain, rng),
        "b2": np.zeros(out_dim),
    }


def init_policy(
    in_dim: int,
    action_dim: int,
    hidden: int,
    rng: np.random.Generator,
    *,
    mean_bias: float = 0.0,
) -> PolicyParams:
    params = _init_mlp(in_dim, action_dim, hidden, 0.01, rng)
    params["b2"] = np.full(action_dim, float(mean_bias))
    params["log_std"] = np.zeros(action_dim)
    return params


def init_value(in_dim: int, hidden: int, rng: np.random.Generator) -> ValueParams:
    return _init_mlp(in_dim, 1, hidden, 1.0, rng)


@dataclass(frozen=True)
class MLPCache:
    x: np.ndarray
    pre0: np.ndarray
    h0: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray


def mlp_forward(params: Params, x: np.ndarray) -> tuple[np.ndarray, MLPCache]:
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x2.shape[1] != params["W0"].shape[0]:
        raise InputError(f"input width {x2.shape[1]} does not match network input {params['W0'].shape[0]}")
    pre0 = x2 @ params["W0"] + params["b0"]
    h0 = np.maximum(pre0, 0.0)
    pre1 = h0 @ params["W1"] + params["b1"]
    h1 = np.maximum(pre1, 0.0)
    out = h1 @ params["W2"] + params["b2"]
    return out, MLPCache(x=x2, pre0=pre0, h0=h0, pre1=pre1, h1=h1)


def mlp_backward(params: Params, cache: MLPCache, d_out: np.ndarray) -> Params:
    """Gradients of sum(d_out * out) with respect to every layer parameter."""
    d_out = np.atleast_2d(d_out)
    grads: Params = {
        "W2": cache.h1.T @ d_out,
        "b2": d_out.sum(axis=0),
    }
    d_h1 = (d_out @ params["W2"].T) * (cache.pre1 > 0)
    grads["W1"] = cache.h0.T @ d_h1
    grads["b1"] = d_h1.sum(axis=0)
    d_h0 = (d_h1 @ params["W1"].T) * (cache.pre0 > 0)
    grads["W0"] = cache.x.T @ d_h0
    grads["b0"] = d_h0.sum(axis=0)
    return grads


def clamp_log_std(raw: np.ndarray, log_std_range: tuple[float, float]) -> np.ndarray:
    return np.clip(raw, log_std_range[0], log_std_range[1])


def policy_forward(
    params: PolicyParams,
    observation: np.ndarray,
    *,
    log_std_range: tuple[float, float] = (-5.0, 2.0),
) -> tuple[np.ndarray, np.ndarray]:
    """(mean, log_std) for a batch of observations; log_std is broadcast to the mean's shape."""
    mean, _ = mlp_forward(params, observation)
    log_std = np.broadcast_to(clamp_log_std(params["log_std"], log_std_range), mean.shape)
    return mean, log_std


def policy_backward(
    params: PolicyParams,
    cache: MLPCache,
    d_mean: np.ndarray,
    d_log_std: np.ndarray,
    *,
    log_std_range: tuple[float, float] = (-5.0, 2.0),
) -> PolicyParams:
    grads = mlp_backward(params, cache, d_mean)
    raw = params["log_std"]
    inside = (raw > log_std_range[0]) & (raw < log_std_range[1])
    grads["log_std"] = np.atleast_2d(d_log_std).sum(axis=0) * inside
    return grads


def value_forward(params: ValueParams, features: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params, features)
    values = out[:, 0]
    return values if np.ndim(features) > 1 else values[0]


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, x: np.ndarray) -> np.ndarray:
    z = (x - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


class DiagGaussianHead:
    """Diagonal Gaussian over the raw network output; executes the raw sample unchanged."""

    def sample(self, mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return mean + np.exp(log_std) * rng.standard_normal(np.shape(mean))

    def log_prob(self, mean: np.ndarray, log_std: np.ndarray, raw: np.ndarray) -> np.ndarray:
        return gaussian_log_prob(mean, log_std, raw)

    def log_prob_grads(self, mean: np.ndarray, log_std: np.ndarray, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        inv_var = np.exp(-2.0 * log_std)
        diff = raw - mean
        return diff * inv_var, diff * diff * inv_var - 1.0

    def entropy(self, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
        return np.sum(np.broadcast_to(log_std, np.shape(mean)) + 0.5 * (1.0 + LOG_2PI), axis=-1)

    def entropy_grads(self, mean: np.ndarray, log_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros_like(mean), np.ones_like(log_std)

    def execute(self, raw: np.ndarray) -> np.ndarray:
        return raw


class TanhGaussianHead(DiagGaussianHead):
    """Company mitigation: u = max_action * (tanh(z) + 1) / 2, with the change-of-variables term."""

    def __init__(self, max_action: float) -> None:
        self.max_action = float(max_action)

    def log_det(self, raw: np.ndarray) -> np.ndarray:
        # log(max_action / 2 * (1 - tanh(z)^2)), written to stay finite for large |z|
        log_sech2 = 2.0 * (math.log(2.0) - raw - np.logaddexp(0.0, -2.0 * raw))
        return np.sum(math.log(self.max_action / 2.0) + log_sech2, axis=-1)

    def log_prob(self, mean: np.ndarray, log_std: np.ndarray, raw: np.ndarray) -> np.ndarray:
        return gaussian_log_prob(mean, log_std, raw) - self.log_det(raw)

    def execute(self, raw: np.ndarray) -> np.ndarray:
        return np.clip(self.max_action * (np.tanh(raw) + 1.0) / 2.0, 0.0, self.max_action)


class GaussianThresholdHead(DiagGaussianHead):
    """Investor portfolio from a Gaussian relaxation: invest where sigmoid(z) >= 0.5."""

    def execute(self, raw: np.ndarray) -> np.ndarray:
        return (raw >= 0.0).astype(np.int8)


class BernoulliHead:
    """Investor portfolio with independent Bernoulli logits; log_std is ignored."""

    def sample(self, mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        p = _sigmoid(mean)
        return (rng.random(np.shape(mean)) < p).astype(np.float64)

    def log_prob(self, mean: np.ndarray, log_std: np.ndarray, raw: np.ndarray) -> np.ndarray:
        # log sigmoid(l) = -softplus(-l), log(1 - sigmoid(l)) = -softplus(l)
        return np.sum(-raw * np.logaddexp(0.0, -mean) - (1.0 - raw) * np.logaddexp(0.0, mean), axis=-1)

    def log_prob_grads(self, mean: np.ndarray, log_std: np.ndarray, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return raw - _sigmoid(mean), np.zeros_like(log_std)

    def entropy(self, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
        p = _sigmoid(mean)
        return np.sum(np.logaddexp(0.0, mean) - p * mean, axis=-1)

    def entropy_grads(self, mean: np.ndarray, log_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = _sigmoid(mean)
        return -mean * p * (1.0 - p), np.zeros_like(log_std)

    def execute(self, raw: np.ndarray) -> np.ndarray:
        return (raw > 0.5).astype(np.int8)


ActionHead = DiagGaussianHead | BernoulliHead


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def sample_and_logprob(
    mean: np.ndarray,
    log_std: np.ndarray,
    rng: np.random.Generator,
    head: ActionHead | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw a raw action and its log-probability. The raw value is what gets stored for the update;
    call `head.execute(raw)` for the action the environment sees.
    """
    h = head or DiagGaussianHead()
    raw = h.sample(mean, log_std, rng)
    return raw, h.log_prob(mean, log_std, raw)


@dataclass(frozen=True)
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class OptimizerState:
    m: Params
    v: Params
    step: int
    lr: float


def init_optimizer(params: Params, lr: float) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
        lr=float(lr),
    )


def adam_step(
    params: Params,
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    hyper: AdamHyper = AdamHyper(),
    *,
    batch: int | None = None,
) -> tuple[Params, OptimizerState]:
    """One bias-corrected Adam step on a gradient to be *descended*; inputs are left untouched."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {k}", batch=batch)

    t = state.step + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for k, p in params.items():
        g = np.asarray(grads.get(k, np.zeros_like(p)), dtype=np.float64)
        if g.shape != p.shape:
            raise InputError(f"gradient shape {g.shape} does not match parameter {k} shape {p.shape}")
        m = hyper.beta1 * state.m[k] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[k] + (1.0 - hyper.beta2) * (g * g)
        new_params[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
        new_m[k], new_v[k] = m, v
    return new_params, OptimizerState(m=new_m, v=new_v, step=t, lr=state.lr)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(math.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[Params, float]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads), norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def save_checkpoint(path: Path, groups: Mapping[str, Mapping[str, np.ndarray]], meta: Mapping[str, Any]) -> None:
    """
    One .npz archive: arrays stored as "<group>/<name>", metadata as a JSON string under "__meta__".
    """
    ensure_parent_dir(path)
    arrays = {f"{g}/{k}": np.asarray(v) for g, group in groups.items() for k, v in group.items()}
    arrays["__meta__"] = np.array(json.dumps({"format_version": CHECKPOINT_VERSION, **meta}, sort_keys=True))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_checkpoint(path: Path) -> tuple[dict[str, Params], dict[str, Any]]:
    groups: dict[str, Params] = {}
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        for key in data.files:
            if key == "__meta__":
                continue
            g, name = key.rsplit("/", 1)
            groups.setdefault(g, {})[name] = data[key].copy()
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint format {meta.get('format_version')!r}")
    return groups, meta
