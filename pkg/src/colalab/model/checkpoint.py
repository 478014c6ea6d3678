"""Single-file model archives."""

import json

import torch

from ..exceptions import InvalidArgumentError
from .cola import CoLaNet
from .config import ModelConfig

CHECKPOINT_VERSION = 1


def save_model(path, model, **extra):
    """Write config, all named tensors (slot-init Gaussian and teacher included) and ``extra``."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_json(),
        "state_dict": model.state_dict(),
        "dtype": str(model.eps_mu.dtype),
    }
    payload.update(extra)
    torch.save(payload, path)


def load_archive(path):
    payload = torch.load(path, weights_only=False)
    if "version" not in payload:
        raise InvalidArgumentError(f"{path} has no version field")
    if payload["version"] > CHECKPOINT_VERSION:
        raise InvalidArgumentError(f"checkpoint version {payload['version']} is newer than supported")
    return payload


def load_model(path):
    """Rebuild a CoLaNet from an archive. Returns ``(model, archive)``."""
    payload = load_archive(path)
    config = ModelConfig.from_dict(json.loads(payload["config"]))
    model = CoLaNet(config)
    if payload.get("dtype") == "torch.float64":
        model = model.double()
    model.load_state_dict(payload["state_dict"])
    if model.teacher.is_frozen:
        model.teacher.freeze()
    model.training_record = payload.get("training_record")
    return model, payload
