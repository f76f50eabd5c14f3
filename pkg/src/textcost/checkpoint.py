"""Versioned binary checkpoint container.

A checkpoint is a pickled dict of named numpy tensors plus the vocabulary and
a config echo.  The writer is deterministic: the same model state produces
byte-identical files, which the reproducibility contract relies on.
"""

from __future__ import annotations

import pickle
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .models import AlignmentModel, ModelConfig, Vocab

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def state_to_numpy(module: torch.nn.Module) -> dict:
    return {
        name: tensor.detach().cpu().numpy().copy()
        for name, tensor in module.state_dict().items()
    }


def save_checkpoint(path, model: AlignmentModel, extra: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "alignment",
        "model_config": asdict(model.config),
        "vocab": model.vocab.itos,
        "tensors": state_to_numpy(model),
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        pickle.dump(payload, f, protocol=4)


def load_checkpoint(path, dtype=torch.float32) -> AlignmentModel:
    with open(path, "rb") as f:
        payload = pickle.load(f)
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {payload.get('format_version')!r}"
        )
    if payload.get("kind") != "alignment":
        raise CheckpointError(f"not an alignment checkpoint: {payload.get('kind')!r}")
    config = ModelConfig(**payload["model_config"])
    vocab = Vocab(payload["vocab"])
    model = AlignmentModel(config, vocab).to(dtype)
    expected = model.state_dict()
    tensors = payload["tensors"]
    if set(tensors) != set(expected):
        missing = set(expected) - set(tensors)
        surplus = set(tensors) - set(expected)
        raise CheckpointError(f"tensor name mismatch: missing {missing}, surplus {surplus}")
    for name, arr in tensors.items():
        if tuple(arr.shape) != tuple(expected[name].shape):
            raise CheckpointError(
                f"shape mismatch for {name}: file {arr.shape}, model "
                f"{tuple(expected[name].shape)}"
            )
    model.load_state_dict(
        {name: torch.as_tensor(np.asarray(arr), dtype=dtype) for name, arr in tensors.items()}
    )
    return model


def checkpoint_extra(path) -> dict:
    with open(path, "rb") as f:
        return pickle.load(f).get("extra", {})
