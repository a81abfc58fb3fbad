from .batching import make_batches
from .dataset import Dataset, load_dataset, save_dataset
from .images import ImageFormatError, read_image, resize_bilinear, write_image
from .manifest import (
    AGE_GROUPS,
    GENDERS,
    Detection,
    ManifestError,
    ManifestRow,
    read_manifest,
    write_manifest,
)
from .preprocess import (
    DETECTORS,
    DetectorContractError,
    FilterReport,
    detect_and_crop,
    filter_counts_fixture,
    filter_rows,
    manifest_box_detector,
    preprocess,
    whole_image_detector,
)
from .synth import synthesize_dataset
from .transforms import (
    AugmentConfig,
    augment,
    augment_batch,
    intensity_histogram,
    normalize_batch,
    write_histogram_csv,
)

__all__ = [
    "AGE_GROUPS",
    "augment",
    "augment_batch",
    "AugmentConfig",
    "Dataset",
    "detect_and_crop",
    "Detection",
    "DetectorContractError",
    "DETECTORS",
    "filter_counts_fixture",
    "filter_rows",
    "FilterReport",
    "GENDERS",
    "ImageFormatError",
    "intensity_histogram",
    "load_dataset",
    "make_batches",
    "manifest_box_detector",
    "ManifestError",
    "ManifestRow",
    "normalize_batch",
    "preprocess",
    "read_image",
    "read_manifest",
    "resize_bilinear",
    "save_dataset",
    "synthesize_dataset",
    "whole_image_detector",
    "write_histogram_csv",
    "write_image",
    "write_manifest",
]
