"""Attention-weight statistics: per-(layer, op) mean/variance matrices and
per-distortion-type difference maps against the pooled mean."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pngio
from .model import AttentionRecord
from .tensor import Tensor
from .training.checkpoint import load_checkpoint


@dataclass
class AttentionStats:
    """Aggregated attention weights for one distortion tag."""
    tag: str
    mean: np.ndarray        # (L, |O|)
    variance: np.ndarray    # (L, |O|), population variance
    count: int              # samples aggregated


def collect_attention(ckpt_path, dataset_dir, tag: str,
                      batch_size: int = 16) -> list[AttentionRecord]:
    """Evaluation forward passes over a patch directory, one record per
    (sample, layer, op).

    ``dataset_dir`` is either a synthesized dataset root (its distorted/
    subdirectory is used) or a flat directory of images.
    """
    root = Path(dataset_dir)
    img_dir = root / "distorted" if (root / "distorted").is_dir() else root
    paths = pngio.list_images(img_dir)
    if not paths:
        raise ValueError(f"no images found under {img_dir}")
    model = load_checkpoint(ckpt_path).build_model()
    records: list[AttentionRecord] = []
    batch, ids = [], []

    def flush():
        if not batch:
            return
        x = np.stack(batch).astype(model.dtype)
        _, recs = model.forward(Tensor(x), collect_attention=True, sample_ids=list(ids))
        records.extend(recs)
        batch.clear()
        ids.clear()

    for p in paths:
        img = pngio.read_image(p).transpose(2, 0, 1)
        if batch and batch[0].shape != img.shape:
            flush()
        batch.append(img)
        ids.append(p.name)
        if len(batch) >= batch_size:
            flush()
    flush()
    return records


def stats(records: list[AttentionRecord], tag: str = "") -> AttentionStats:
    """Population mean/variance per (layer, op) across samples."""
    if not records:
        raise ValueError("no attention records to aggregate")
    layers = max(r.layer for r in records)
    ops = max(r.op for r in records)
    cells: dict[tuple[int, int], list[float]] = {}
    samples = set()
    for r in records:
        cells.setdefault((r.layer, r.op), []).append(r.weight)
        samples.add(r.sample_id)
    mean = np.zeros((layers, ops))
    var = np.zeros((layers, ops))
    for (l, o), values in cells.items():
        arr = np.asarray(values, dtype=np.float64)
        mean[l - 1, o - 1] = arr.mean()
        var[l - 1, o - 1] = arr.var()
    return AttentionStats(tag, mean, var, len(samples))


def pooled_mean(stats_list: list[AttentionStats]) -> np.ndarray:
    """Sample-count-weighted average of per-tag means; equals the mean over
    all records pooled across tags."""
    total = sum(s.count for s in stats_list)
    return sum(s.mean * s.count for s in stats_list) / total


def diff_maps(stats_list: list[AttentionStats]) -> dict[str, np.ndarray]:
    """|tag mean - pooled mean| per tag, elementwise."""
    if not stats_list:
        raise ValueError("need at least one set of stats")
    shape = stats_list[0].mean.shape
    for s in stats_list[1:]:
        if s.mean.shape != shape:
            raise ValueError(f"stats shapes differ: {shape} vs {s.mean.shape} ({s.tag!r})")
    overall = pooled_mean(stats_list)
    return {s.tag: np.abs(s.mean - overall) for s in stats_list}


def export_stats_csv(stats_list: list[AttentionStats], path) -> None:
    """Rows (tag, layer, op, mean, variance), ordered by (tag, layer, op)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("tag", "layer", "op", "mean", "variance"))
        for s in sorted(stats_list, key=lambda s: s.tag):
            layers, ops = s.mean.shape
            for l in range(layers):
                for o in range(ops):
                    w.writerow((s.tag, l + 1, o + 1,
                                repr(float(s.mean[l, o])), repr(float(s.variance[l, o]))))


def export_diff_csv(diffs: dict[str, np.ndarray], path) -> None:
    """Rows (tag, layer, op, absdiff), ordered by (tag, layer, op)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("tag", "layer", "op", "absdiff"))
        for tag in sorted(diffs):
            m = diffs[tag]
            for l in range(m.shape[0]):
                for o in range(m.shape[1]):
                    w.writerow((tag, l + 1, o + 1, repr(float(m[l, o]))))
