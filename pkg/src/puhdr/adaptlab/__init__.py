"""Desk-scale checks of flow matching, LoRA adaptation and encoding choice."""
from .autoencoder import AeConfig, AeReport, autoencoder_ordering_experiment
from .flow import FlowBatch, TrainConfig, TrainResult, flow_loss, sample, train, velocity
from .nets import (LORA_RANK_PRESETS, DenseNet, Layer, LoraAdapter, LoraLayer, backward,
                   forward, merge)

__all__ = [
    "AeConfig", "AeReport", "autoencoder_ordering_experiment",
    "FlowBatch", "TrainConfig", "TrainResult", "flow_loss", "sample", "train", "velocity",
    "LORA_RANK_PRESETS", "DenseNet", "Layer", "LoraAdapter", "LoraLayer", "backward",
    "forward", "merge",
]
