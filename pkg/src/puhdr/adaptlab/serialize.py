"""JSON round-trip for lab networks, adapters and training runs."""
from __future__ import annotations

import json
from dataclasses import asdict
from typing import Optional

import numpy as np

from .flow import TrainConfig, TrainResult
from .nets import DenseNet, Layer, LoraAdapter, LoraLayer


def net_to_dict(net: DenseNet) -> dict:
    return {
        "data_dim": net.data_dim,
        "cond_dim": net.cond_dim,
        "layers": [{"in": l.n_in, "out": l.n_out, "act": l.act,
                    "W": l.W.ravel().tolist(), "b": l.b.tolist()} for l in net.layers],
    }


def net_from_dict(d: dict) -> DenseNet:
    layers = [Layer(np.array(l["W"]).reshape(l["out"], l["in"]), np.array(l["b"]), l["act"])
              for l in d["layers"]]
    return DenseNet(layers, d.get("data_dim", 0), d.get("cond_dim", 0))


def adapter_to_dict(a: Optional[LoraAdapter]) -> Optional[dict]:
    if a is None:
        return None
    return {str(i): {"rank": l.rank, "alpha": l.alpha, "A": l.A.ravel().tolist(),
                     "B": l.B.ravel().tolist(), "in": l.A.shape[1], "out": l.B.shape[0]}
            for i, l in sorted(a.layers.items())}


def adapter_from_dict(d: Optional[dict]) -> Optional[LoraAdapter]:
    if d is None:
        return None
    return LoraAdapter({int(i): LoraLayer(np.array(l["A"]).reshape(l["rank"], l["in"]),
                                          np.array(l["B"]).reshape(l["out"], l["rank"]),
                                          l["alpha"]) for i, l in d.items()})


def run_to_json(res: TrainResult, extra: Optional[dict] = None) -> str:
    doc = {"net": net_to_dict(res.net), "adapter": adapter_to_dict(res.adapter),
           "config": asdict(res.config), "losses": list(map(float, res.losses))}
    if extra:
        doc.update(extra)
    return json.dumps(doc)


def run_from_json(text: str) -> TrainResult:
    doc = json.loads(text)
    return TrainResult(net_from_dict(doc["net"]), adapter_from_dict(doc.get("adapter")),
                       doc.get("losses", []), TrainConfig(**doc.get("config", {})))
