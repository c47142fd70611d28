"""Small fully connected networks with hand-written backpropagation and
optional low-rank (LoRA) adapters on any subset of layers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError

ACTIVATIONS = ("tanh", "identity")
LORA_RANK_PRESETS = {"text": 32, "raw": 128}


@dataclass
class Layer:
    W: np.ndarray          # (out, in)
    b: np.ndarray          # (out,)
    act: str = "tanh"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.act not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.act!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ContractError("layer weight/bias shapes disagree")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


@dataclass
class DenseNet:
    """MLP whose input is the concatenation [z | t | c] for flow nets, or any
    vector for plain regression. The last layer is always linear."""

    layers: List[Layer]
    data_dim: int = 0
    cond_dim: int = 0
    time_input: bool = True

    def __post_init__(self):
        if not self.layers:
            raise ContractError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ContractError(f"layer sizes {a.n_out} -> {b.n_in} incompatible")
        if self.layers[-1].act != "identity":
            raise ContractError("final activation must be identity")

    @classmethod
    def create(cls, n_in: int, n_out: int, hidden: int = 64, depth: int = 3,
               seed: int = 0, **kw) -> "DenseNet":
        """``depth`` linear layers with tanh between them."""
        rng = np.random.default_rng(seed)
        dims = [n_in] + [hidden] * (depth - 1) + [n_out]
        layers = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            act = "identity" if i == depth - 1 else "tanh"
            layers.append(Layer(rng.normal(0.0, 1.0 / np.sqrt(a), (b, a)), np.zeros(b), act))
        return cls(layers, **kw)

    @classmethod
    def for_flow(cls, data_dim: int, cond_dim: int = 0, hidden: int = 64, depth: int = 3,
                 seed: int = 0) -> "DenseNet":
        return cls.create(data_dim + 1 + cond_dim, data_dim, hidden, depth, seed,
                          data_dim=data_dim, cond_dim=cond_dim)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def flow_input(self, z, t, c=None) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        n = z.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1), (n, 1))
        parts = [z, t]
        if self.cond_dim:
            if c is None:
                c = np.zeros((n, self.cond_dim))
            c = np.broadcast_to(np.asarray(c, dtype=np.float64).reshape(-1, self.cond_dim),
                                (n, self.cond_dim))
            parts.append(c)
        elif c is not None and np.size(c):
            raise ContractError("network takes no condition input")
        x = np.concatenate(parts, axis=1)
        if x.shape[1] != self.n_in:
            raise ContractError(f"input width {x.shape[1]} does not match network ({self.n_in})")
        return x

    def params(self) -> Dict[str, np.ndarray]:
        out = {}
        for i, l in enumerate(self.layers):
            out[f"W{i}"] = l.W
            out[f"b{i}"] = l.b
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.W.copy(), l.b.copy(), l.act) for l in self.layers],
                        self.data_dim, self.cond_dim, self.time_input)


@dataclass
class LoraLayer:
    A: np.ndarray          # (r, in)
    B: np.ndarray          # (out, r)
    alpha: float

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        if self.A.shape[0] != self.B.shape[1] or self.rank < 1:
            raise ContractError("LoRA factor ranks disagree")

    @property
    def rank(self) -> int:
        return self.A.shape[0]

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def delta(self) -> np.ndarray:
        """The dense update (alpha / r) B A."""
        return self.scale * (self.B @ self.A)


@dataclass
class LoraAdapter:
    layers: Dict[int, LoraLayer] = field(default_factory=dict)

    @classmethod
    def attach(cls, net: DenseNet, rank: int, alpha: Optional[float] = None,
               which: Optional[Sequence[int]] = None, seed: int = 0) -> "LoraAdapter":
        """Adapters on the chosen layers (default all). A is random, B is zero,
        so the adapted network starts out identical to ``net``. ``alpha``
        defaults to the rank."""
        if rank < 1:
            raise ContractError("rank must be positive")
        alpha = float(rank if alpha is None else alpha)
        rng = np.random.default_rng(seed)
        which = range(len(net.layers)) if which is None else which
        out = {}
        for i in which:
            l = net.layers[i]
            out[int(i)] = LoraLayer(rng.normal(0.0, 1.0 / np.sqrt(l.n_in), (rank, l.n_in)),
                                    np.zeros((l.n_out, rank)), alpha)
        return cls(out)

    def params(self) -> Dict[str, np.ndarray]:
        out = {}
        for i, l in sorted(self.layers.items()):
            out[f"A{i}"] = l.A
            out[f"B{i}"] = l.B
        return out

    def copy(self) -> "LoraAdapter":
        return LoraAdapter({i: LoraLayer(l.A.copy(), l.B.copy(), l.alpha)
                            for i, l in self.layers.items()})


def merge(net: DenseNet, adapter: Optional[LoraAdapter]) -> DenseNet:
    """Fold each adapter into its base weight: W' = W + (alpha / r) B A."""
    out = net.copy()
    if adapter:
        for i, l in adapter.layers.items():
            out.layers[i].W = out.layers[i].W + l.delta()
    return out


def forward(net: DenseNet, x: np.ndarray, adapter: Optional[LoraAdapter] = None):
    """Returns (output, cache). Adapted layers compute W h + s B (A h) + b."""
    h = np.asarray(x, dtype=np.float64)
    cache = [h]
    lora = adapter.layers if adapter else {}
    for i, l in enumerate(net.layers):
        a = h @ l.W.T
        if i in lora:
            a = a + lora[i].scale * ((h @ lora[i].A.T) @ lora[i].B.T)
        a = a + l.b
        h = np.tanh(a) if l.act == "tanh" else a
        cache.append(h)
    return h, cache


def backward(net: DenseNet, cache, dout: np.ndarray, adapter: Optional[LoraAdapter] = None,
             base_grads: bool = True) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss given dLoss/dOutput.

    Adapter factors always receive gradients; base weights only when
    ``base_grads`` is true.
    """
    grads = {}
    lora = adapter.layers if adapter else {}
    dh = dout
    for i in range(len(net.layers) - 1, -1, -1):
        l = net.layers[i]
        h_in, h_out = cache[i], cache[i + 1]
        da = dh * (1.0 - h_out * h_out) if l.act == "tanh" else dh
        if base_grads:
            grads[f"W{i}"] = da.T @ h_in
            grads[f"b{i}"] = da.sum(axis=0)
        dh = da @ l.W
        if i in lora:
            ll = lora[i]
            u = h_in @ ll.A.T
            dab = da @ ll.B
            grads[f"B{i}"] = ll.scale * (da.T @ u)
            grads[f"A{i}"] = ll.scale * (dab.T @ h_in)
            dh = dh + ll.scale * (dab @ ll.A)
    return grads


def param_table(net: DenseNet, adapter: Optional[LoraAdapter] = None) -> Dict[str, np.ndarray]:
    """Trainable arrays by name: the adapter factors if present, else the base."""
    return adapter.params() if adapter else net.params()
