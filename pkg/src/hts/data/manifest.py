"""Manifest rows and their CSV form.

Header: ``path,age_group,gender,box_x,box_y,box_w,box_h,confidence``.  Empty
cells mean missing; age groups are written ``lo-hi``.  Box coordinates are in
pixels of the working resolution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

AGE_GROUPS: tuple[tuple[int, int], ...] = (
    (0, 2), (4, 6), (8, 12), (15, 20), (25, 32), (38, 43), (48, 53), (60, 100),
)
GENDERS = ("f", "m")  # label order: f=0, m=1
FIELDS = ("path", "age_group", "gender", "box_x", "box_y", "box_w", "box_h", "confidence")


class ManifestError(ValueError):
    """Malformed manifest content."""


@dataclass(frozen=True)
class Detection:
    x: int
    y: int
    w: int
    h: int
    confidence: float


@dataclass(frozen=True)
class ManifestRow:
    path: str
    age_group: tuple[int, int] | None = None
    gender: str | None = None
    detection: Detection | None = None

    @property
    def age_label(self) -> int:
        return AGE_GROUPS.index(self.age_group)

    @property
    def gender_label(self) -> int:
        return GENDERS.index(self.gender)

    def label(self, task: str) -> int:
        return self.age_label if task == "age8" else self.gender_label


def format_age(group: tuple[int, int] | None) -> str:
    return "" if group is None else f"{group[0]}-{group[1]}"


def parse_age(text: str) -> tuple[int, int] | None:
    text = text.strip()
    if not text:
        return None
    lo, sep, hi = text.strip("()").replace(",", "-").partition("-")
    try:
        group = (int(lo), int(hi))
    except ValueError:
        raise ManifestError(f"bad age group {text!r}") from None
    if not sep or group not in AGE_GROUPS:
        raise ManifestError(f"age group {text!r} is not one of the 8 intervals")
    return group


def _row_from_record(rec: dict[str, str]) -> ManifestRow:
    gender = (rec.get("gender") or "").strip() or None
    if gender is not None and gender not in ("f", "m", "u"):
        raise ManifestError(f"bad gender {gender!r} for {rec.get('path')!r}")
    box = [rec.get(k, "").strip() for k in FIELDS[3:]]
    if all(box):
        det = Detection(int(float(box[0])), int(float(box[1])), int(float(box[2])),
                        int(float(box[3])), float(box[4]))
    elif any(box):
        raise ManifestError(f"partial detection box for {rec.get('path')!r}")
    else:
        det = None
    return ManifestRow(rec["path"], parse_age(rec.get("age_group") or ""), gender, det)


def read_manifest(path) -> list[ManifestRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "path" not in reader.fieldnames:
            raise ManifestError(f"{path}: missing header with a 'path' column")
        return [_row_from_record(rec) for rec in reader]


def write_manifest(path, rows: Iterable[ManifestRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for r in rows:
            d = r.detection
            box = ["", "", "", "", ""] if d is None else [d.x, d.y, d.w, d.h, repr(float(d.confidence))]
            w.writerow([r.path, format_age(r.age_group), r.gender or "", *box])


def resolve(root, row: ManifestRow) -> Path:
    p = Path(row.path)
    return p if p.is_absolute() else Path(root) / p
