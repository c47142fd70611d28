"""Frozen-autoencoder encoding experiment.

A small autoencoder is trained on sRGB LDR patches only, frozen, and then
asked to reconstruct held-out LDR patches, linear-normalized HDR patches and
PU21-encoded HDR patches of the same scenes.

Errors are RMSE in a perceptually uniform code space: sRGB codes for LDR, and
PU21 codes of the reconstructed absolute luminance for both HDR variants, so
the linear input is judged on the same perceptual footing as the PU21 input.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..xfer import pu21_decode, pu21_encode
from .data import hdr_scene, ldr_from_hdr, patches
from .nets import DenseNet, backward, forward


@dataclass
class AeConfig:
    patch_size: int = 4
    hidden_dim: int = 16
    n_train: int = 6000
    n_eval: int = 1500
    seed: int = 0
    steps: int = 4000
    batch: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    scene_size: int = 16


@dataclass
class AeReport:
    err_ldr: float
    err_linear: float
    err_pu21: float
    config: AeConfig

    def to_json(self) -> dict:
        return {"err_ldr": self.err_ldr, "err_linear": self.err_linear,
                "err_pu21": self.err_pu21, "config": asdict(self.config)}


def _scene_patches(rng, n: int, cfg: AeConfig):
    """Aligned patch rows from fresh scenes: (hdr, ldr, linear-normalized,
    pu21, per-row normalization scale)."""
    hdr, scale = [], []
    while sum(len(h) for h in hdr) < n:
        s = hdr_scene(rng, cfg.scene_size)
        p = patches(s, cfg.patch_size)
        hdr.append(p)
        scale.append(np.full((len(p), 1), s.max()))
    hdr = np.concatenate(hdr)[:n]
    scale = np.concatenate(scale)[:n]
    return hdr, ldr_from_hdr(hdr), hdr / scale, pu21_encode(hdr), scale


def train_autoencoder(x: np.ndarray, cfg: AeConfig) -> DenseNet:
    dim = x.shape[1]
    net = DenseNet.create(dim, dim, hidden=cfg.hidden_dim, depth=2, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    params = net.params()
    vel = {k: np.zeros_like(v) for k, v in params.items()}
    for step in range(cfg.steps):
        xb = x[rng.integers(0, len(x), cfg.batch)]
        out, cache = forward(net, xb)
        grads = backward(net, cache, 2.0 * (out - xb) / xb.size)
        lr = 0.5 * cfg.lr * (1 + np.cos(np.pi * step / cfg.steps))
        for k, p in params.items():
            vel[k] *= cfg.momentum
            vel[k] -= lr * grads[k]
            p += vel[k]
    return net


def _rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def autoencoder_ordering_experiment(cfg: AeConfig = AeConfig()) -> AeReport:
    if cfg.hidden_dim >= 3 * cfg.patch_size ** 2:
        raise ValueError("bottleneck must be narrower than the patch")
    rng = np.random.default_rng(cfg.seed)
    _, ldr_train, _, _, _ = _scene_patches(rng, cfg.n_train, cfg)
    hdr, ldr, lin, pu, scale = _scene_patches(rng, cfg.n_eval, cfg)
    net = train_autoencoder(ldr_train, cfg)

    def recon(x):
        return forward(net, x)[0]

    err_ldr = _rmse(recon(ldr), ldr)
    lin_abs = np.maximum(recon(lin), 0.0) * scale
    err_linear = _rmse(pu21_encode(lin_abs), pu)
    pu_abs = pu21_decode(np.maximum(recon(pu), 0.0))
    err_pu21 = _rmse(pu21_encode(pu_abs), pu)
    return AeReport(err_ldr, err_linear, err_pu21, cfg)
