"""Reproducible distortion pipelines and dataset construction.

Every sample is a pure function of (clean image, PipelineSpec). Stage
parameters are recorded in the manifest; stage RNG seeds are re-derived from
the per-sample seed, so replaying a manifest rebuilds the dataset bit-exactly
and generation order (or parallelism) cannot change the output.

Seed derivation (the documented split function):
    sample_seed  = derive_seed(master_seed, sample_index)
    crop rng     = derive_seed(sample_seed, 0)
    parameter rng= derive_seed(sample_seed, 1)
    stage i rng  = derive_seed(sample_seed, 2 + i)   # i = position in pipeline
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import pngio
from .blur import apply_gaussian_blur, apply_gaussian_noise
from .jpegsim import apply_jpeg
from .motion import TrajectoryParams, apply_motion_blur, generate_trajectory, trajectory_to_kernel

log = logging.getLogger(__name__)

DISTORTION_KINDS = ("gaussian_blur", "gaussian_noise", "jpeg", "motion_blur", "external")
SEVERITIES = ("mild", "moderate", "severe", "unclassed")

# full parameter ranges of the blur -> noise -> jpeg protocol
DIV2K_BLUR_RANGE = (0.0, 5.0)
DIV2K_NOISE_RANGE = (0.0, 50.0)
DIV2K_JPEG_RANGE = (10, 100)

# mixed protocol defaults and the disjoint novel-strength presets
MIXED_RANGES = {"gaussian_noise": (10.0, 30.0), "jpeg": (15, 35), "motion_blur": (10.0, 80.0)}
NOVEL_TRAIN_RANGES = {"gaussian_noise": (0.0, 20.0), "jpeg": (60, 100), "motion_blur": (10.0, 40.0)}
NOVEL_TEST_RANGES = {"gaussian_noise": (20.0, 40.0), "jpeg": (15, 60), "motion_blur": (40.0, 80.0)}

# nonempty subsets of the mixed-protocol stages, in a fixed order
_MIXED_STAGES = ("motion_blur", "gaussian_noise", "jpeg")
MIXED_SUBSETS = tuple(
    tuple(s for i, s in enumerate(_MIXED_STAGES) if mask >> i & 1)
    for mask in range(1, 8))


def derive_seed(base_seed: int, *path: int) -> int:
    """64-bit child seed; outputs are independent across distinct paths."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class DistortionSpec:
    """One distortion stage: kind, its single strength parameter, and a seed.

    param means: gaussian_blur -> sigma; gaussian_noise -> sigma on the 0-255
    scale; jpeg -> quality; motion_blur -> max trajectory arc length (pixels);
    external -> unused (pre-distorted pairs ingested from disk).
    """
    kind: str
    param: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        if self.kind in ("gaussian_blur", "gaussian_noise") and self.param < 0:
            raise ValueError(f"{self.kind} strength must be >= 0, got {self.param}")
        if self.kind == "jpeg" and not 1 <= self.param <= 100:
            raise ValueError(f"jpeg quality must be in [1,100], got {self.param}")
        if self.kind == "motion_blur" and self.param < 1:
            raise ValueError(f"motion_blur max length must be >= 1, got {self.param}")


@dataclass(frozen=True)
class PipelineSpec:
    """An ordered sequence of distortion stages plus a severity class."""
    stages: tuple
    severity: str = "unclassed"

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")
        object.__setattr__(self, "stages", tuple(self.stages))

    def param_of(self, kind: str):
        for s in self.stages:
            if s.kind == kind:
                return s.param
        return None


@dataclass
class PatchSample:
    """A clean/distorted patch pair with full provenance."""
    clean: np.ndarray
    distorted: np.ndarray
    pipeline: PipelineSpec
    source_image_id: str = ""
    crop_origin: tuple = (0, 0)


def apply_distortion(img: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    if spec.kind == "gaussian_blur":
        return apply_gaussian_blur(img, spec.param)
    if spec.kind == "gaussian_noise":
        return apply_gaussian_noise(img, spec.param, rng_from_seed(spec.seed))
    if spec.kind == "jpeg":
        return apply_jpeg(img, int(spec.param))
    if spec.kind == "motion_blur":
        rng = rng_from_seed(spec.seed)
        traj = generate_trajectory(TrajectoryParams(max_len=spec.param), rng)
        psf = trajectory_to_kernel(traj, 3)
        return apply_motion_blur(img, psf)
    raise ValueError(f"stage kind {spec.kind!r} cannot be synthesized")


def apply_pipeline(img: np.ndarray, pipe: PipelineSpec) -> np.ndarray:
    """Apply stages left to right; pure function of (img, pipe)."""
    out = img
    for stage in pipe.stages:
        out = apply_distortion(out, stage)
    return out


# -- severity classes (blur -> noise -> jpeg protocol) -----------------------

def _continuous_third(lo: float, hi: float, idx: int) -> tuple[float, float]:
    w = (hi - lo) / 3.0
    return lo + idx * w, lo + (idx + 1) * w


def severity_ranges(severity: str) -> dict:
    """Per-parameter sub-ranges for a severity class.

    Each full range is split into equal thirds; the low thirds of blur/noise
    are mild, and for JPEG quality the HIGH third is mild (quality improves
    upward). Returned JPEG bounds are integer-inclusive.
    """
    idx = {"mild": 0, "moderate": 1, "severe": 2}.get(severity)
    if idx is None:
        raise ValueError(f"severity must be mild/moderate/severe, got {severity!r}")
    blur = _continuous_third(*DIV2K_BLUR_RANGE, idx)
    noise = _continuous_third(*DIV2K_NOISE_RANGE, idx)
    qlo, qhi = DIV2K_JPEG_RANGE
    step = (qhi - qlo) // 3
    # mild (70,100], moderate (40,70], severe [10,40]
    bounds = {0: (qlo + 2 * step + 1, qhi), 1: (qlo + step + 1, qlo + 2 * step),
              2: (qlo, qlo + step)}[idx]
    return {"gaussian_blur": blur, "gaussian_noise": noise, "jpeg": bounds}


def synth_div2k_style(img: np.ndarray, severity: str, sample_seed: int) -> PatchSample:
    """Sequential blur -> noise -> jpeg with strengths drawn from the
    severity class's sub-ranges."""
    ranges = severity_ranges(severity)
    prng = rng_from_seed(derive_seed(sample_seed, 1))
    sigma_b = float(prng.uniform(*ranges["gaussian_blur"]))
    sigma_n = float(prng.uniform(*ranges["gaussian_noise"]))
    qlo, qhi = ranges["jpeg"]
    quality = int(prng.integers(qlo, qhi + 1))
    stages = (
        DistortionSpec("gaussian_blur", sigma_b, derive_seed(sample_seed, 2)),
        DistortionSpec("gaussian_noise", sigma_n, derive_seed(sample_seed, 3)),
        DistortionSpec("jpeg", quality, derive_seed(sample_seed, 4)),
    )
    pipe = PipelineSpec(stages, severity)
    return PatchSample(img, apply_pipeline(img, pipe), pipe)


def synth_mixed(img: np.ndarray, sample_seed: int, param_ranges=None) -> PatchSample:
    """Uniformly pick a nonempty subset of {motion blur, noise, jpeg}, draw
    each strength uniformly from its range, apply in fixed order
    motion_blur -> noise -> jpeg."""
    ranges = dict(MIXED_RANGES if param_ranges is None else param_ranges)
    prng = rng_from_seed(derive_seed(sample_seed, 1))
    subset = MIXED_SUBSETS[int(prng.integers(0, len(MIXED_SUBSETS)))]
    stages = []
    for kind in _MIXED_STAGES:
        if kind not in subset:
            continue
        lo, hi = ranges[kind]
        if kind == "jpeg":
            param = float(prng.integers(int(lo), int(hi) + 1))
        else:
            param = float(prng.uniform(lo, hi))
        stages.append(DistortionSpec(kind, param, derive_seed(sample_seed, 2 + len(stages))))
    pipe = PipelineSpec(tuple(stages), "unclassed")
    return PatchSample(img, apply_pipeline(img, pipe), pipe)


def crop_patches(img: np.ndarray, size: int, n: int, seed: int) -> list[tuple[np.ndarray, tuple]]:
    """n uniformly random size x size crops; deterministic per seed."""
    h, w = img.shape[:2]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than patch size {size}")
    rng = rng_from_seed(seed)
    out = []
    for _ in range(n):
        y = int(rng.integers(0, h - size + 1))
        x = int(rng.integers(0, w - size + 1))
        out.append((img[y:y + size, x:x + size].copy(), (x, y)))
    return out


# -- manifest ----------------------------------------------------------------

MANIFEST_FIELDS = ("sample_id", "source_image", "crop_x", "crop_y", "size", "severity",
                   "blur_sigma", "motion_max_len", "noise_sigma", "jpeg_quality", "seed")

_KIND_TO_COLUMN = {"gaussian_blur": "blur_sigma", "motion_blur": "motion_max_len",
                   "gaussian_noise": "noise_sigma", "jpeg": "jpeg_quality"}
_COLUMN_TO_KIND = {v: k for k, v in _KIND_TO_COLUMN.items()}
# canonical stage order: blur, motion, noise, jpeg (a superset consistent
# with both protocols' physical ordering)
_CANONICAL_COLUMNS = ("blur_sigma", "motion_max_len", "noise_sigma", "jpeg_quality")


def manifest_row(sample_id: str, source_image: str, crop, size: int,
                 pipe: PipelineSpec, sample_seed: int) -> dict:
    row = {f: "" for f in MANIFEST_FIELDS}
    row.update(sample_id=sample_id, source_image=source_image,
               crop_x=str(crop[0]), crop_y=str(crop[1]), size=str(size),
               severity=pipe.severity, seed=str(sample_seed))
    for stage in pipe.stages:
        if stage.kind == "external":
            continue
        col = _KIND_TO_COLUMN[stage.kind]
        row[col] = repr(int(stage.param)) if stage.kind == "jpeg" else repr(float(stage.param))
    return row


def pipeline_from_row(row: dict) -> PipelineSpec:
    """Reconstruct the exact PipelineSpec of a manifest row (stage seeds are
    re-derived from the recorded per-sample seed)."""
    sample_seed = int(row["seed"])
    stages = []
    for col in _CANONICAL_COLUMNS:
        if row.get(col, "") != "":
            stages.append(DistortionSpec(_COLUMN_TO_KIND[col], float(row[col]),
                                         derive_seed(sample_seed, 2 + len(stages))))
    return PipelineSpec(tuple(stages), row.get("severity") or "unclassed")


def write_manifest(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
        w.writeheader()
        w.writerows(rows)


def read_manifest(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- dataset construction -----------------------------------------------------

PROTOCOLS = ("div2k", "mixed", "novel-train", "novel-test")


def build_dataset(input_dir, output_dir, protocol: str, master_seed: int,
                  patches_per_image: int = 4, patch_size: int = 63,
                  severity: str = "moderate") -> list[dict]:
    """Synthesize clean/distorted patch pairs plus a provenance manifest.

    Layout: {output_dir}/clean/{id}.png, {output_dir}/distorted/{id}.png,
    {output_dir}/manifest.csv. Per-sample seeds come from the master seed by
    the documented split, so the output is independent of processing order.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r} (choose from {PROTOCOLS})")
    ranges = {"mixed": None, "novel-train": NOVEL_TRAIN_RANGES,
              "novel-test": NOVEL_TEST_RANGES}.get(protocol)
    paths = pngio.list_images(input_dir)
    images = []
    for p in paths:
        try:
            images.append((p.name, pngio.read_image(p)))
        except OSError as exc:
            log.warning("skipping unreadable image %s: %s", p, exc)
    if not images:
        raise ValueError(f"no readable images in {input_dir}")

    out = Path(output_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "distorted").mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (name, img) in enumerate(images):
        for j in range(patches_per_image):
            index = i * patches_per_image + j
            sample_seed = derive_seed(master_seed, index)
            (patch, origin), = crop_patches(img, patch_size, 1, derive_seed(sample_seed, 0))
            if protocol == "div2k":
                sample = synth_div2k_style(patch, severity, sample_seed)
            else:
                sample = synth_mixed(patch, sample_seed, ranges)
            sid = f"{index:06d}"
            pngio.write_image(out / "clean" / f"{sid}.png", sample.clean)
            pngio.write_image(out / "distorted" / f"{sid}.png", sample.distorted)
            rows.append(manifest_row(sid, name, origin, patch_size, sample.pipeline, sample_seed))
    write_manifest(out / "manifest.csv", rows)
    return rows


def ingest_pairs(clean_dir, distorted_dir, output_dir, master_seed: int,
                 patches_per_image: int = 4, patch_size: int = 128) -> list[dict]:
    """Ingest externally supplied clean/distorted image pairs (matched by
    filename), cropping aligned patches; stages are recorded as 'external'."""
    cleans = {p.name: p for p in pngio.list_images(clean_dir)}
    dists = {p.name: p for p in pngio.list_images(distorted_dir)}
    names = sorted(set(cleans) & set(dists))
    if not names:
        raise ValueError("no filename-matched clean/distorted pairs found")
    out = Path(output_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "distorted").mkdir(parents=True, exist_ok=True)
    pipe = PipelineSpec((DistortionSpec("external"),), "unclassed")
    rows = []
    for i, name in enumerate(names):
        clean = pngio.read_image(cleans[name])
        dist = pngio.read_image(dists[name])
        if clean.shape != dist.shape:
            log.warning("skipping %s: clean %s vs distorted %s", name, clean.shape, dist.shape)
            continue
        for j in range(patches_per_image):
            index = i * patches_per_image + j
            sample_seed = derive_seed(master_seed, index)
            (cpatch, origin), = crop_patches(clean, patch_size, 1, derive_seed(sample_seed, 0))
            x, y = origin
            dpatch = dist[y:y + patch_size, x:x + patch_size]
            sid = f"{index:06d}"
            pngio.write_image(out / "clean" / f"{sid}.png", cpatch)
            pngio.write_image(out / "distorted" / f"{sid}.png", dpatch)
            rows.append(manifest_row(sid, name, origin, patch_size, pipe, sample_seed))
    write_manifest(out / "manifest.csv", rows)
    return rows
