"""Merge per-lesion predictions into one label map, or export them one by one."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .errors import DuplicateLesion, ReservedLabel, ShapeMismatch
from .patcher import PatchUpdate
from .volgrid import Volume3

MAX_LABEL = np.iinfo(np.uint16).max


def _dense(update, full_shape) -> np.ndarray:
    if isinstance(update, PatchUpdate):
        if update.full_shape != tuple(full_shape):
            raise ShapeMismatch(f"update for shape {update.full_shape}, expected {tuple(full_shape)}")
        return update.to_dense(0.0, np.float64)
    arr = np.asarray(update, dtype=np.float64)
    if arr.shape != tuple(full_shape):
        raise ShapeMismatch(f"prediction shape {arr.shape}, expected {tuple(full_shape)}")
    return arr


def _checked(preds) -> List[Tuple[int, object]]:
    seen = set()
    out = []
    for lesion_id, upd in preds:
        lesion_id = int(lesion_id)
        if lesion_id == 0:
            raise ReservedLabel("label 0 is background")
        if not 0 < lesion_id <= MAX_LABEL:
            raise ReservedLabel(f"lesion id {lesion_id} does not fit a u16 label")
        if lesion_id in seen:
            raise DuplicateLesion(f"lesion {lesion_id} given twice")
        seen.add(lesion_id)
        out.append((lesion_id, upd))
    return sorted(out, key=lambda t: t[0])


def merge_multilabel(preds: Sequence[Tuple[int, object]], full_shape: Sequence[int],
                     threshold: float = 0.5, spacing=(1.0, 1.0, 1.0)) -> Volume3:
    """Resolve per-lesion probabilities into a single u16 label map.

    Each ``preds`` item is ``(lesion_id, update)`` where ``update`` is a
    :class:`PatchUpdate` or a dense full-volume array. A voxel takes the
    label whose probability passes ``threshold`` and is strictly highest;
    equal probabilities go to the smaller lesion id.
    """
    full_shape = tuple(int(s) for s in full_shape)
    best = np.full(full_shape, -np.inf)
    labels = np.zeros(full_shape, dtype=np.uint16)
    # ascending ids + strict ">" keeps the smaller id on ties
    for lesion_id, upd in _checked(preds):
        prob = _dense(upd, full_shape)
        win = (prob >= threshold) & (prob > best)
        labels[win] = lesion_id
        best[win] = prob[win]
    return Volume3(labels, spacing)


def export_separate(preds: Sequence[Tuple[int, object]], full_shape: Sequence[int],
                    threshold: float = 0.5, spacing=(1.0, 1.0, 1.0)) -> List[Tuple[int, Volume3]]:
    """One u8 binary volume per lesion, each thresholded on its own."""
    full_shape = tuple(int(s) for s in full_shape)
    return [
        (lesion_id, Volume3((_dense(upd, full_shape) >= threshold).astype(np.uint8), spacing))
        for lesion_id, upd in _checked(preds)
    ]


def merged_name(patient_id: str) -> str:
    return f"{patient_id}_merged.svol"


def lesion_name(patient_id: str, lesion_id: int) -> str:
    return f"{patient_id}_lesion{lesion_id}.svol"
