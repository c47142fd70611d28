"""Flow-matching objective, training loop and Euler sampler.

Interpolant z = (1 - t) x0 + t eps, regression target eps - x0. Sampling
integrates dz/dt = v(z, t, c) from t = 1 back to t = 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import ContractError, TrainingError
from .nets import DenseNet, LoraAdapter, backward, forward, merge, param_table

COND_DROPOUT = 0.5


@dataclass
class FlowBatch:
    x0: np.ndarray
    eps: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.x0 = np.atleast_2d(np.asarray(self.x0, dtype=np.float64))
        self.eps = np.atleast_2d(np.asarray(self.eps, dtype=np.float64))
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if self.x0.shape != self.eps.shape or self.t.shape[0] != self.x0.shape[0]:
            raise ContractError("x0, eps and t batch shapes disagree")

    @property
    def z(self) -> np.ndarray:
        t = self.t[:, None]
        return (1.0 - t) * self.x0 + t * self.eps

    @property
    def target(self) -> np.ndarray:
        return self.eps - self.x0

    @classmethod
    def draw(cls, x0: np.ndarray, rng: np.random.Generator) -> "FlowBatch":
        x0 = np.atleast_2d(x0)
        return cls(x0, rng.standard_normal(x0.shape), rng.uniform(0.0, 1.0, x0.shape[0]))


def velocity(net: DenseNet, z, t, c=None, adapter: Optional[LoraAdapter] = None) -> np.ndarray:
    return forward(net, net.flow_input(z, t, c), adapter)[0]


def flow_loss(net: DenseNet, batch: FlowBatch, c=None, adapter: Optional[LoraAdapter] = None):
    """Mean over the batch of ||v(z, t, c) - (eps - x0)||^2, with gradients.

    With an adapter only the adapter factors get gradients.
    """
    if batch.x0.shape[1] != net.data_dim:
        raise ContractError(f"batch dim {batch.x0.shape[1]} != network data dim {net.data_dim}")
    out, cache = forward(net, net.flow_input(batch.z, batch.t, c), adapter)
    r = out - batch.target
    n = r.shape[0]
    loss = float(np.sum(r * r) / n)
    grads = backward(net, cache, 2.0 * r / n, adapter, base_grads=adapter is None)
    return loss, grads


@dataclass
class TrainConfig:
    steps: int = 2000
    lr: float = 1e-2
    batch: int = 64
    cond_dropout_p: float = COND_DROPOUT
    momentum: float = 0.9
    seed: int = 0
    schedule: str = "constant"    # or "cosine"
    clip_norm: Optional[float] = None

    def lr_at(self, step: int) -> float:
        if self.schedule == "constant":
            return self.lr
        return 0.5 * self.lr * (1.0 + np.cos(np.pi * step / max(1, self.steps)))


@dataclass
class TrainResult:
    net: DenseNet
    adapter: Optional[LoraAdapter]
    losses: List[float]
    config: TrainConfig


def train(net: DenseNet, adapter: Optional[LoraAdapter], data: np.ndarray,
          config: TrainConfig = TrainConfig(), cond: Optional[np.ndarray] = None) -> TrainResult:
    """SGD with momentum on the flow loss.

    Parameters are updated in place on copies of ``net``/``adapter``; with an
    adapter the base weights stay frozen. Each sample's condition is replaced
    by zeros with probability ``cond_dropout_p``.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise ContractError("empty dataset")
    if cond is not None:
        cond = np.asarray(cond, dtype=np.float64).reshape(data.shape[0], -1)
    net = net.copy()
    adapter = adapter.copy() if adapter else None
    params = param_table(net, adapter)
    vel = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng(config.seed)
    losses = []
    for step in range(config.steps):
        idx = rng.integers(0, data.shape[0], config.batch)
        batch = FlowBatch.draw(data[idx], rng)
        c = None
        if cond is not None:
            keep = rng.uniform(size=config.batch) >= config.cond_dropout_p
            c = cond[idx] * keep[:, None]
        loss, grads = flow_loss(net, batch, c, adapter)
        if not np.isfinite(loss):
            raise TrainingError("non-finite loss", step)
        losses.append(loss)
        lr = config.lr_at(step)
        if config.clip_norm:
            gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if gnorm > config.clip_norm:
                lr *= config.clip_norm / gnorm
        for k, p in params.items():
            vel[k] *= config.momentum
            vel[k] -= lr * grads[k]
            p += vel[k]
    return TrainResult(net, adapter, losses, config)


def sample(net: DenseNet, n: int, n_steps: int = 50, c=None,
           adapter: Optional[LoraAdapter] = None, seed: int = 0,
           z1: Optional[np.ndarray] = None) -> np.ndarray:
    """Euler integration from standard-normal noise at t = 1 to t = 0.

    Adapters are merged into the base weights first.
    """
    m = merge(net, adapter)
    z = np.random.default_rng(seed).standard_normal((n, net.data_dim)) if z1 is None \
        else np.array(z1, dtype=np.float64)
    dt = 1.0 / n_steps
    for i in range(n_steps):
        t = 1.0 - i * dt
        z = z - dt * velocity(m, z, t, c)
    return z


def loss_ratio(losses: List[float], window: int = 50) -> float:
    """Mean of the last ``window`` losses over the mean of the first."""
    w = min(window, len(losses))
    return float(np.mean(losses[-w:]) / np.mean(losses[:w]))
