"""End-to-end training: L1 loss, Adam, cosine schedule, resumable checkpoints.

Training is a deterministic function of (TrainConfig, dataset bytes): epoch
shuffles and augmentation derive functionally from (seed, epoch), the
optimizer is sequential, and checkpoints capture everything needed to
continue bit-identically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import Model, ModelConfig
from ..tensor import Tape, Tensor, l1_loss
from .checkpoint import (
    AdamGroupState, Checkpoint, config_to_text, load_checkpoint, save_checkpoint,
)
from .data import PatchDataset, augment_batch, epoch_plan
from .optim import AdamState, ScheduleConfig, adam_step, cosine_lr

log = logging.getLogger(__name__)

FINAL_CHECKPOINT = "final.ckpt"
DIAGNOSTIC_CHECKPOINT = "diagnostic.ckpt"
LOSS_LOG = "loss_log.csv"
MIN_PATCH = 7


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    data_dir: str = ""
    out_dir: str = ""
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    checkpoint_every: int = 1000
    eta_max: float = 1e-3
    eta_min: float = 0.0
    augment: bool = False
    precision: str = "f32"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        for key in ("epochs", "batch_size", "checkpoint_every"):
            if getattr(self, key) < (0 if key == "epochs" else 1):
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


@dataclass
class TrainResult:
    checkpoint_path: Path
    rows: list               # (step, lr, loss) for steps run in this call
    model: Model


def _adam_groups_for(model: Model) -> list[tuple[str, AdamState]]:
    """'fixed' mode alternates two groups (kernels / logits); other modes use one."""
    if model.config.attention_mode == "fixed":
        kernel = [n for n in model.trainable_names() if n != "fixed_logits"]
        return [("kernel", AdamState(model.params, kernel)),
                ("logits", AdamState(model.params, ["fixed_logits"]))]
    return [("all", AdamState(model.params, model.trainable_names()))]


def _groups_to_ckpt(groups) -> dict:
    return {name: AdamGroupState(t=st.t, m=st.m, v=st.v) for name, st in groups}


def _groups_from_ckpt(model: Model, saved: dict) -> list[tuple[str, AdamState]]:
    groups = _adam_groups_for(model)
    for name, st in groups:
        g = saved.get(name)
        if g is None:
            raise TrainError(f"checkpoint is missing Adam group {name!r}")
        if sorted(g.m) != st.names():
            raise TrainError(f"checkpoint Adam group {name!r} does not match the model")
        st.t = g.t
        for p in st.names():
            st.m[p] = g.m[p].astype(model.dtype)
            st.v[p] = g.v[p].astype(model.dtype)
    return groups


def train(config: TrainConfig, resume=None, on_step=None) -> TrainResult:
    """Run (or continue) a training session; returns the final checkpoint path.

    ``on_step(step, lr, loss)`` is an optional observer hook.
    """
    ds = PatchDataset(config.data_dir, dtype=config.dtype)
    ph, pw = ds.patch_size
    if ph < MIN_PATCH or pw < MIN_PATCH:
        raise TrainError(f"patches are {ph}x{pw}; minimum supported is {MIN_PATCH}x{MIN_PATCH}")
    n = len(ds)
    bpe = math.ceil(n / config.batch_size)
    total_steps = config.epochs * bpe
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if resume is not None:
        ckpt = load_checkpoint(resume)
        if config_to_text(ckpt.config) != config_to_text(config.model):
            raise TrainError("checkpoint architecture does not match the config file")
        if ckpt.seed != config.seed:
            raise TrainError(f"checkpoint seed {ckpt.seed} != config seed {config.seed}")
        model = ckpt.build_model(config.dtype)
        groups = _groups_from_ckpt(model, ckpt.adam_groups)
        start_step = ckpt.step
        log.info("resumed from %s at step %d", resume, start_step)
    else:
        model = Model.build(config.model, config.seed, dtype=config.dtype)
        groups = _adam_groups_for(model)
        start_step = 0

    sched = ScheduleConfig(max(total_steps, 1), config.eta_max, config.eta_min)
    log_path = out_dir / LOSS_LOG
    log_mode = "a" if resume is not None else "w"

    def save(path, step):
        save_checkpoint(path, config.model, model.params, dict(_groups_to_ckpt(groups)),
                        step, config.seed)

    rows = []
    with open(log_path, log_mode, newline="") as logf:
        if resume is None:
            logf.write("step,lr,loss\n")
        for step in range(start_step, total_steps):
            epoch, bi = divmod(step, bpe)
            if bi == 0 or step == start_step:
                perm, flips = epoch_plan(config.seed, epoch, n)
            idx = perm[bi * config.batch_size:(bi + 1) * config.batch_size]
            xb = ds.distorted[idx]
            yb = ds.clean[idx]
            if config.augment:
                xb = augment_batch(xb, flips[idx])
                yb = augment_batch(yb, flips[idx])
            x = Tensor(np.ascontiguousarray(xb))
            y = Tensor(np.ascontiguousarray(yb))
            model.params.zero_grad()
            with Tape() as tape:
                out, _ = model.forward(x)
                loss = l1_loss(out, y)
                tape.backward(loss)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                save(out_dir / DIAGNOSTIC_CHECKPOINT, step)
                raise TrainError(f"non-finite loss at step {step}; "
                                 f"diagnostic checkpoint written to {DIAGNOSTIC_CHECKPOINT}")
            lr = cosine_lr(step, sched)
            gname, gstate = groups[step % len(groups)]
            adam_step(model.params, gstate, lr)
            rows.append((step, lr, loss_val))
            logf.write(f"{step},{lr!r},{loss_val!r}\n")
            if on_step is not None:
                on_step(step, lr, loss_val)
            if (step + 1) % config.checkpoint_every == 0 and step + 1 < total_steps:
                save(out_dir / f"checkpoint_{step + 1:08d}.ckpt", step + 1)

    final = out_dir / FINAL_CHECKPOINT
    save(final, total_steps)
    return TrainResult(final, rows, model)
