"""Manifest filtering and detector-driven face cropping.

Rows are dropped in this order, each counted under the first reason that
applies: gender missing, gender unidentified, age missing, then (during
cropping) no detection above the confidence threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from ..numeric.rng import make_rng
from .images import resize_bilinear
from .manifest import AGE_GROUPS, Detection, ManifestRow

DEFAULT_THRESHOLD = 0.9


class DetectorContractError(ValueError):
    """A detector returned a degenerate box or an out-of-range confidence."""


@dataclass
class FilterReport:
    input: int = 0
    no_gender: int = 0
    gender_unidentified: int = 0
    no_age: int = 0
    no_face: int = 0
    missing_image: int = 0
    # rows with several confident detections; kept (best box wins), not dropped
    multiple_faces: int = 0
    missing_paths: list[str] = field(default_factory=list, repr=False)

    DROP_FIELDS = ("no_gender", "gender_unidentified", "no_age", "no_face", "missing_image")

    @property
    def dropped(self) -> int:
        return sum(getattr(self, k) for k in self.DROP_FIELDS)

    @property
    def retained(self) -> int:
        return self.input - self.dropped

    def to_text(self) -> str:
        pct = (lambda n: 100.0 * n / self.input) if self.input else (lambda n: 0.0)
        lines = [
            f"Number of images before removal: {self.input}",
            f"Images with no gender found: {self.no_gender}",
            f"Images with gender marked unidentified: {self.gender_unidentified}",
            f"Images with no age found: {self.no_age}",
            f"Images with no face detected: {self.no_face}",
            f"Images with more than one face detected: {self.multiple_faces}",
            f"Images with missing file: {self.missing_image}",
            f"Total images discarded: {self.dropped} ({pct(self.dropped):.1f}% of original)",
            f"Total of images after removal: {self.input} - {self.dropped} = {self.retained} "
            f"({pct(self.retained):.1f}% of original)",
        ]
        lines += [f"Missing file: {p}" for p in self.missing_paths]
        return "\n".join(lines) + "\n"


def filter_rows(rows: Sequence[ManifestRow]) -> tuple[list[ManifestRow], FilterReport]:
    report = FilterReport(input=len(rows))
    kept = []
    for row in rows:
        if row.gender is None:
            report.no_gender += 1
        elif row.gender not in ("m", "f"):
            report.gender_unidentified += 1
        elif row.age_group is None:
            report.no_age += 1
        else:
            kept.append(row)
    return kept, report


class Detector(Protocol):
    def __call__(self, image: np.ndarray | None, row: ManifestRow | None) -> list[Detection]: ...


def whole_image_detector(image, row=None) -> list[Detection]:
    """The full frame as a single face with confidence 1."""
    h, w = image.shape[:2]
    return [Detection(0, 0, w, h, 1.0)]


def manifest_box_detector(image, row) -> list[Detection]:
    """The detection stored on the manifest row, if any."""
    return [] if row is None or row.detection is None else [row.detection]


DETECTORS: dict[str, Callable] = {"whole": whole_image_detector, "manifest": manifest_box_detector}


def _check(det: Detection) -> None:
    if det.w <= 0 or det.h <= 0:
        raise DetectorContractError(f"degenerate box {det}")
    if not 0.0 <= det.confidence <= 1.0:
        raise DetectorContractError(f"confidence {det.confidence} outside [0, 1]")


def best_detection(detections: Sequence[Detection], threshold: float = DEFAULT_THRESHOLD):
    """Highest-confidence detection strictly above ``threshold`` and the count above it."""
    for d in detections:
        _check(d)
    above = [d for d in detections if d.confidence > threshold]
    if not above:
        return None, 0
    return max(above, key=lambda d: d.confidence), len(above)


def crop(image: np.ndarray, det: Detection) -> np.ndarray:
    """Copy of the box clipped to the image bounds."""
    h, w = image.shape[:2]
    x0, y0 = max(det.x, 0), max(det.y, 0)
    x1, y1 = min(det.x + det.w, w), min(det.y + det.h, h)
    if x1 <= x0 or y1 <= y0:
        raise DetectorContractError(f"box {det} lies outside a {w}x{h} image")
    return image[y0:y1, x0:x1].copy()


def detect_and_crop(image: np.ndarray, detector, row: ManifestRow | None = None,
                    threshold: float = DEFAULT_THRESHOLD) -> np.ndarray | None:
    """Crop the most confident face above ``threshold``; None when there is none.

    ``image`` should already be at working resolution.  It is never modified.
    """
    det, _ = best_detection(detector(image, row), threshold)
    return None if det is None else crop(image, det)


def preprocess(rows: Sequence[ManifestRow], detector, load_image=None, size: int | None = None,
               threshold: float = DEFAULT_THRESHOLD, on_crop=None) -> tuple[list[ManifestRow], FilterReport]:
    """Filter rows, then keep those with a confident detection.

    ``load_image(row)`` returns raw pixels; the image is resized to
    ``size`` x ``size`` before detection.  Without a loader only detectors that
    do not need pixels (the manifest-box one) can be used and nothing is
    cropped.  ``on_crop(row, face, detection)`` receives each cropped face.
    """
    kept, report = filter_rows(rows)
    out = []
    for row in kept:
        image = None
        if load_image is not None:
            try:
                image = load_image(row)
            except FileNotFoundError:
                report.missing_image += 1
                report.missing_paths.append(row.path)
                continue
            if size is not None:
                image = resize_bilinear(image, size, size)
        det, n_confident = best_detection(detector(image, row), threshold)
        if det is None:
            report.no_face += 1
            continue
        if n_confident > 1:
            report.multiple_faces += 1
        if image is not None and on_crop is not None:
            on_crop(row, crop(image, det), det)
        out.append(row)
    return out, report


def filter_counts_fixture(seed: int = 0) -> list[ManifestRow]:
    """Synthetic manifest with known drop counts for every filter stage.

    19370 rows: 779 without gender, 1099 with gender ``u``, 1252 without age,
    185 whose only detection has confidence below 0.9; the rest are clean.
    Rows missing gender partly also miss age, to exercise drop precedence.
    """
    rng = make_rng(seed)
    counts = {"no_gender": 779, "u": 1099, "no_age": 1252, "no_face": 185}
    total = 19370
    kinds = [k for k, n in counts.items() for _ in range(n)]
    kinds += ["ok"] * (total - len(kinds))
    kinds = [kinds[i] for i in rng.permutation(total)]
    rows = []
    for i, kind in enumerate(kinds):
        age = AGE_GROUPS[int(rng.integers(len(AGE_GROUPS)))]
        gender = ("f", "m")[int(rng.integers(2))]
        conf = float(np.round(rng.uniform(0.91, 1.0), 4))
        if kind == "no_gender":
            gender = None
            if i % 3 == 0:
                age = None
        elif kind == "u":
            gender = "u"
            if i % 4 == 0:
                age = None
        elif kind == "no_age":
            age = None
        elif kind == "no_face":
            conf = float(np.round(rng.uniform(0.3, 0.9), 4))
        rows.append(ManifestRow(f"img_{i:05d}.ppm", age, gender, Detection(40, 30, 144, 160, conf)))
    return rows
