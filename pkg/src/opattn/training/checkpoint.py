"""Binary checkpoints: magic + version header, config text, parameters,
Adam moment groups, seed and step counter.

All tensor payloads are little-endian float32 regardless of compute
precision (a double-precision session loses the low bits on save - documented
and accepted). Loading parses the whole file before any state is returned, so
a truncated or corrupt file never applies partially.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import Model, ModelConfig, op_spec_from_token
from ..tensor import ParamStore, Tensor

MAGIC = b"OPAT"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt header, truncated data, or unsupported version."""


@dataclass
class AdamGroupState:
    t: int
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class Checkpoint:
    config: ModelConfig
    step: int
    seed: int
    params: dict            # name -> float32 ndarray
    adam_groups: dict       # group name -> AdamGroupState

    def build_model(self, dtype=np.float32) -> Model:
        store = ParamStore()
        for name, arr in self.params.items():
            store.add(name, Tensor(arr.astype(dtype)))
        return Model(self.config, store, dtype)


def config_to_text(cfg: ModelConfig) -> str:
    lines = [
        f"num_layers={cfg.num_layers}",
        f"group_size={cfg.group_size}",
        f"channels={cfg.channels}",
        f"attn_hidden={cfg.attn_hidden}",
        f"num_res_blocks={cfg.num_res_blocks}",
        f"in_channels={cfg.in_channels}",
        f"ops={','.join(o.token() for o in cfg.ops)}",
        f"attention_mode={cfg.attention_mode}",
    ]
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ModelConfig:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    return ModelConfig(
        num_layers=int(kv["num_layers"]),
        group_size=int(kv["group_size"]),
        channels=int(kv["channels"]),
        attn_hidden=int(kv["attn_hidden"]),
        num_res_blocks=int(kv["num_res_blocks"]),
        in_channels=int(kv["in_channels"]),
        ops=tuple(op_spec_from_token(t) for t in kv["ops"].split(",")),
        attention_mode=kv["attention_mode"],
    )


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode()
    fh.write(struct.pack("<H", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<B", data.ndim))
    fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
    fh.write(data.tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensor(r: _Reader) -> tuple[str, np.ndarray]:
    (nlen,) = r.unpack("<H")
    name = r.take(nlen).decode()
    (ndim,) = r.unpack("<B")
    shape = r.unpack(f"<{ndim}I") if ndim else ()
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).copy()
    return name, arr


def save_checkpoint(path, config: ModelConfig, store: ParamStore,
                    adam_groups: dict, step: int, seed: int) -> None:
    """Atomic write (temp file + rename); byte layout is deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        cfg = config_to_text(config).encode()
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<QQ", step, seed))
        fh.write(struct.pack("<I", len(store)))
        for name, t in store.items():
            _write_tensor(fh, name, t.data)
        fh.write(struct.pack("<B", len(adam_groups)))
        for gname in sorted(adam_groups):
            g = adam_groups[gname]
            gb = gname.encode()
            fh.write(struct.pack("<H", len(gb)))
            fh.write(gb)
            fh.write(struct.pack("<Q", g.t))
            fh.write(struct.pack("<I", len(g.m)))
            for pname in sorted(g.m):
                _write_tensor(fh, pname, g.m[pname])
                _write_tensor(fh, pname, g.v[pname])
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (clen,) = r.unpack("<I")
    config = config_from_text(r.take(clen).decode())
    step, seed = r.unpack("<QQ")
    (nparams,) = r.unpack("<I")
    params = dict(_read_tensor(r) for _ in range(nparams))
    (ngroups,) = r.unpack("<B")
    groups = {}
    for _ in range(ngroups):
        (glen,) = r.unpack("<H")
        gname = r.take(glen).decode()
        (gt,) = r.unpack("<Q")
        (gp,) = r.unpack("<I")
        g = AdamGroupState(t=gt)
        for _ in range(gp):
            mname, m = _read_tensor(r)
            vname, v = _read_tensor(r)
            if mname != vname:
                raise CheckpointError("mismatched moment tensor names")
            g.m[mname] = m
            g.v[mname] = v
        groups[gname] = g
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.pos} trailing bytes")
    return Checkpoint(config, step, seed, params, groups)
