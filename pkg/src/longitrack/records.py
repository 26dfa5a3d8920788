"""Per-patient records: lesion prompts, case bundles and their on-disk layout."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import FormatError, IoError, UnknownLesion
from .volgrid import Volume3, read_svol, write_svol

VoxelIndex = Tuple[int, int, int]

CASE_FILES = ("baseline.svol", "followup.svol", "gt_baseline.svol", "gt_followup.svol", "lesions.json")


@dataclass(frozen=True)
class LesionPrompt:
    id: int
    center_baseline: VoxelIndex
    center_followup: VoxelIndex

    def __post_init__(self):
        object.__setattr__(self, "center_baseline", tuple(int(c) for c in self.center_baseline))
        object.__setattr__(self, "center_followup", tuple(int(c) for c in self.center_followup))


@dataclass(frozen=True)
class CaseRecord:
    """One patient: both scans, lesion prompts and (optionally) GT label maps.

    The GT maps are u16 multilabel volumes whose nonzero values are lesion ids.
    """

    patient_id: str
    baseline: Volume3
    followup: Volume3
    lesions: Tuple[LesionPrompt, ...] = field(default_factory=tuple)
    gt_baseline: Optional[Volume3] = None
    gt_followup: Optional[Volume3] = None

    def __post_init__(self):
        object.__setattr__(self, "lesions", tuple(self.lesions))

    def lesion(self, lesion_id: int) -> LesionPrompt:
        for les in self.lesions:
            if les.id == lesion_id:
                return les
        raise UnknownLesion(f"lesion {lesion_id} not in case {self.patient_id}")

    @property
    def lesion_ids(self) -> List[int]:
        return [les.id for les in self.lesions]

    def gt_mask(self, lesion_id: int, timepoint: str = "followup") -> np.ndarray:
        """Binary GT mask of one lesion at ``timepoint`` ("baseline" or "followup")."""
        self.lesion(lesion_id)
        gt = self.gt_followup if timepoint == "followup" else self.gt_baseline
        if gt is None:
            raise UnknownLesion(f"case {self.patient_id} carries no {timepoint} ground truth")
        return gt.data == lesion_id


def lesions_json(case: CaseRecord) -> str:
    doc = {
        "patient_id": case.patient_id,
        "lesions": [
            {
                "id": les.id,
                "center_baseline": list(les.center_baseline),
                "center_followup": list(les.center_followup),
            }
            for les in case.lesions
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_lesions_json(text: str) -> Tuple[str, List[LesionPrompt]]:
    try:
        doc = json.loads(text)
        pid = str(doc["patient_id"])
        lesions = [
            LesionPrompt(int(d["id"]), d["center_baseline"], d["center_followup"])
            for d in doc["lesions"]
        ]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed lesions.json: {exc}") from exc
    for les in lesions:
        if les.id <= 0:
            raise FormatError(f"lesion ids must be > 0, got {les.id}")
    return pid, lesions


def save_case(case: CaseRecord, case_dir) -> Path:
    case_dir = Path(case_dir)
    try:
        case_dir.mkdir(parents=True, exist_ok=True)
        (case_dir / "lesions.json").write_text(lesions_json(case), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write case {case.patient_id}: {exc}") from exc
    write_svol(case.baseline, case_dir / "baseline.svol")
    write_svol(case.followup, case_dir / "followup.svol")
    if case.gt_baseline is not None:
        write_svol(case.gt_baseline, case_dir / "gt_baseline.svol")
    if case.gt_followup is not None:
        write_svol(case.gt_followup, case_dir / "gt_followup.svol")
    return case_dir


def load_case(case_dir) -> CaseRecord:
    case_dir = Path(case_dir)
    try:
        text = (case_dir / "lesions.json").read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {case_dir / 'lesions.json'}: {exc}") from exc
    pid, lesions = parse_lesions_json(text)

    def _opt(name):
        p = case_dir / name
        return read_svol(p) if p.exists() else None

    return CaseRecord(
        patient_id=pid,
        baseline=read_svol(case_dir / "baseline.svol"),
        followup=read_svol(case_dir / "followup.svol"),
        lesions=lesions,
        gt_baseline=_opt("gt_baseline.svol"),
        gt_followup=_opt("gt_followup.svol"),
    )


def list_cases(root) -> List[str]:
    """Patient ids (subdirectory names holding a lesions.json) under ``root``, sorted."""
    root = Path(root)
    if not root.is_dir():
        raise IoError(f"dataset root {root} does not exist")
    return sorted(p.name for p in root.iterdir() if (p / "lesions.json").is_file())


def case_path(root, patient_id: str) -> Path:
    return Path(os.fspath(root)) / patient_id
