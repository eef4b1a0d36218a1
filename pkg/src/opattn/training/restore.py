"""Run a trained checkpoint over a directory of images, tiling large inputs."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .. import pngio
from ..tensor import Tensor
from .checkpoint import load_checkpoint

log = logging.getLogger(__name__)


def _tile_positions(extent: int, tile: int, stride: int) -> list[int]:
    if extent <= tile:
        return [0]
    pos = list(range(0, extent - tile, stride))
    pos.append(extent - tile)
    return sorted(set(pos))


def restore_image(model, img: np.ndarray, collect_attention=False, sample_id="0",
                  tile_size=256, overlap=16):
    """Restore one (H,W,3) image in [0,1]; returns (restored, records).

    Images larger than tile_size are processed in overlapping tiles and
    blended by averaging inside the overlap bands.
    """
    h, w = img.shape[:2]
    chw = img.transpose(2, 0, 1).astype(model.dtype)
    if h <= tile_size and w <= tile_size:
        out, records = model.forward(Tensor(chw[None]), collect_attention, [sample_id])
        return np.clip(out.data[0].transpose(1, 2, 0), 0.0, 1.0), records

    stride = tile_size - overlap
    acc = np.zeros((3, h, w), dtype=np.float64)
    weight = np.zeros((h, w), dtype=np.float64)
    records = [] if collect_attention else None
    for ty in _tile_positions(h, tile_size, stride):
        for tx in _tile_positions(w, tile_size, stride):
            tile = chw[:, ty:ty + tile_size, tx:tx + tile_size]
            tid = f"{sample_id}#t{ty}_{tx}"
            out, recs = model.forward(Tensor(np.ascontiguousarray(tile[None])),
                                      collect_attention, [tid])
            acc[:, ty:ty + tile_size, tx:tx + tile_size] += out.data[0]
            weight[ty:ty + tile_size, tx:tx + tile_size] += 1.0
            if records is not None and recs:
                records.extend(recs)
    return np.clip(acc / weight, 0.0, 1.0).transpose(1, 2, 0), records


def write_attention_csv(records, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("sample_id", "layer", "op", "weight"))
        for r in records:
            w.writerow((r.sample_id, r.layer, r.op, repr(r.weight)))


def restore_images(ckpt_path, input_dir, output_dir, attention_csv=None,
                   tile_size=256, overlap=16) -> list[str]:
    """Restore every readable image of a directory; returns written filenames."""
    model = load_checkpoint(ckpt_path).build_model()
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    collect = attention_csv is not None
    all_records = []
    written = []
    for path in pngio.list_images(input_dir):
        try:
            img = pngio.read_image(path)
        except OSError as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            continue
        restored, records = restore_image(model, img, collect, path.name,
                                          tile_size, overlap)
        pngio.write_image(out_dir / path.name, restored)
        written.append(path.name)
        if collect and records:
            all_records.extend(records)
    if collect:
        write_attention_csv(all_records, attention_csv)
    return written
