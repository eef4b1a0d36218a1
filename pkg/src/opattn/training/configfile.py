"""Flat key=value training configuration files ('#' starts a comment)."""

from __future__ import annotations

from pathlib import Path

from ..model import ModelConfig, op_spec_from_token

MODEL_KEYS = ("num_layers", "group_size", "channels", "attn_hidden",
              "num_res_blocks", "in_channels", "ops", "attention_mode")
TRAIN_KEYS = ("epochs", "batch_size", "seed", "checkpoint_every", "data_dir",
              "out_dir", "eta_max", "eta_min", "augment", "precision")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_kv_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def parse_bool(value: str, key: str) -> bool:
    v = value.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"{key}: expected a boolean, got {value!r}")


def load_train_config(path):
    """Parse a config file into a TrainConfig (import deferred to avoid a cycle)."""
    from .loop import TrainConfig

    kv = parse_kv_text(Path(path).read_text())
    unknown = set(kv) - set(MODEL_KEYS) - set(TRAIN_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    model_kwargs = {}
    for key in MODEL_KEYS:
        if key not in kv:
            continue
        if key == "ops":
            model_kwargs[key] = tuple(op_spec_from_token(t.strip())
                                      for t in kv[key].split(","))
        elif key == "attention_mode":
            model_kwargs[key] = kv[key]
        else:
            model_kwargs[key] = int(kv[key])

    train_kwargs = {"model": ModelConfig(**model_kwargs)}
    for key in TRAIN_KEYS:
        if key not in kv:
            continue
        if key in ("epochs", "batch_size", "seed", "checkpoint_every"):
            train_kwargs[key] = int(kv[key])
        elif key in ("eta_max", "eta_min"):
            train_kwargs[key] = float(kv[key])
        elif key == "augment":
            train_kwargs[key] = parse_bool(kv[key], key)
        else:
            train_kwargs[key] = kv[key]
    return TrainConfig(**train_kwargs)
