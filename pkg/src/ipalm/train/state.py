"""Model construction from configs and (de)serialization of training state."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..gpt import GPTConfig, GPTModel
from ..ipa import IPAModel, ModelConfig
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import Adam

MODEL_KINDS = {"ipa": (ModelConfig, IPAModel), "gpt": (GPTConfig, GPTModel)}


def build_model(kind: str, config: dict, seed: int = 0):
    try:
        cfg_cls, model_cls = MODEL_KINDS[kind]
    except KeyError:
        raise ContractError(f"model_kind must be one of {sorted(MODEL_KINDS)}, got {kind!r}") from None
    return model_cls(cfg_cls.from_dict(config), seed=seed)


def model_tensors(model) -> dict[str, np.ndarray]:
    return {p.name: p.data for p in model.parameters()}


def load_model_tensors(model, tensors: dict[str, np.ndarray]) -> None:
    for p in model.parameters():
        if p.name not in tensors:
            raise ContractError(f"checkpoint lacks parameter {p.name!r}")
        if tensors[p.name].shape != p.shape:
            raise ContractError(f"checkpoint shape {tensors[p.name].shape} != {p.shape} for {p.name!r}")
        p.data[...] = tensors[p.name]


def save_training_state(path, model, optimizer: Adam | None, step: int, train_config: dict,
                        tokenizer_hash: str = "", extra: dict | None = None) -> None:
    meta = {
        "model_kind": model.kind,
        "model": model.config.to_dict(),
        "train": train_config,
        "step": int(step),
        "optimizer_step": optimizer.step_count if optimizer is not None else 0,
        "tokenizer_hash": tokenizer_hash,
    }
    if extra:
        meta.update(extra)
    tensors = model_tensors(model)
    if optimizer is not None:
        tensors.update(optimizer.state_tensors())
    save_checkpoint(path, meta, tensors)


def load_training_state(path):
    """Returns ``(model, meta, tensors)``; optimizer tensors stay in ``tensors``."""
    meta, tensors = load_checkpoint(path)
    model = build_model(meta["model_kind"], meta["model"])
    load_model_tensors(model, tensors)
    return model, meta, tensors
