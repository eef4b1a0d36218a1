"""Deterministic synthesis of combined-distortion datasets."""

from .blur import apply_gaussian_blur, apply_gaussian_noise, gaussian_kernel
from .jpegsim import (
    BASE_TABLE_CHROMA, BASE_TABLE_LUMA, apply_jpeg, block_dct, block_idct,
    jpeg_quant_tables, rgb_to_ycbcr, ycbcr_to_rgb,
)
from .motion import (
    TrajectoryParams, apply_motion_blur, generate_trajectory, trajectory_to_kernel,
)
from .pipeline import (
    DISTORTION_KINDS, MIXED_RANGES, MIXED_SUBSETS, NOVEL_TEST_RANGES,
    NOVEL_TRAIN_RANGES, PROTOCOLS, DistortionSpec, PatchSample, PipelineSpec,
    apply_distortion, apply_pipeline, build_dataset, crop_patches, derive_seed,
    ingest_pairs, manifest_row, pipeline_from_row, read_manifest, rng_from_seed,
    severity_ranges, synth_div2k_style, synth_mixed, write_manifest,
)

__all__ = [
    "gaussian_kernel", "apply_gaussian_blur", "apply_gaussian_noise",
    "jpeg_quant_tables", "apply_jpeg", "block_dct", "block_idct",
    "rgb_to_ycbcr", "ycbcr_to_rgb", "BASE_TABLE_LUMA", "BASE_TABLE_CHROMA",
    "TrajectoryParams", "generate_trajectory", "trajectory_to_kernel", "apply_motion_blur",
    "DistortionSpec", "PipelineSpec", "PatchSample", "apply_distortion", "apply_pipeline",
    "synth_div2k_style", "synth_mixed", "severity_ranges", "crop_patches",
    "build_dataset", "ingest_pairs", "derive_seed", "rng_from_seed",
    "manifest_row", "pipeline_from_row", "read_manifest", "write_manifest",
    "DISTORTION_KINDS", "PROTOCOLS", "MIXED_RANGES", "MIXED_SUBSETS",
    "NOVEL_TRAIN_RANGES", "NOVEL_TEST_RANGES",
]
