"""
Lesion-group metrics: Dice, false-negative and false-positive volume.

Ground-truth lesions that overlap or touch (26-connectivity) are merged
into one group, transitively. Each group's prediction is the union of its
members' predictions. Per patient, Dice is the mean over groups (x100) and
FN/FP volumes are summed over groups in mm^3; the dataset row is the
unweighted mean over patients.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DuplicateId, NoLesions, NoPatients, ShapeMismatch
from .volgrid import Volume3, volume_mm3

log = logging.getLogger(__name__)

CSV_HEADER = ("patient_id", "dice", "fnvol_mm3", "fpvol_mm3", "n_groups")


class UnionFind:
    """Disjoint sets over arbitrary hashable items, with path halving."""

    def __init__(self, items: Iterable = ()):
        self._parent = {}
        self._rank = {}
        for it in items:
            self.add(it)

    def add(self, item):
        if item not in self._parent:
            self._parent[item] = item
            self._rank[item] = 0

    def find(self, item):
        parent = self._parent
        while parent[item] != item:
            parent[item] = parent[parent[item]]
            item = parent[item]
        return item

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._rank[ra] < self._rank[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        if self._rank[ra] == self._rank[rb]:
            self._rank[ra] += 1

    def groups(self) -> List[List]:
        out: Dict = {}
        for it in self._parent:
            out.setdefault(self.find(it), []).append(it)
        return list(out.values())


@dataclass
class LesionGroup:
    group_id: int
    members: tuple
    gt: np.ndarray
    pred: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MetricsRow:
    patient_id: str
    dice: float
    fnvol: float
    fpvol: float
    n_groups: int


def group_gt_lesions(gt_masks: Mapping[int, np.ndarray],
                     pred_masks: Optional[Mapping[int, np.ndarray]] = None) -> List[LesionGroup]:
    """Partition lesions into groups of touching or overlapping GT masks.

    Parameters
    ----------
    gt_masks : dict of lesion id -> binary array
        Follow-up GT per lesion; all of one shape.
    pred_masks : dict of lesion id -> binary array, optional
        Per-lesion predictions. When given, every group gets the union of
        its members' predictions (missing members count as empty).

    Returns
    -------
    list of LesionGroup
        Ordered by smallest member id; group ids count from 1.
    """
    ids = sorted(int(i) for i in gt_masks)
    if not ids:
        return []
    masks = {i: np.asarray(gt_masks[i]).astype(bool) for i in ids}
    shape = masks[ids[0]].shape
    for i in ids:
        if masks[i].shape != shape:
            raise ShapeMismatch(f"GT mask of lesion {i} has shape {masks[i].shape}, expected {shape}")

    union = np.zeros(shape, dtype=bool)
    for m in masks.values():
        union |= m
    comp, _ = ndimage.label(union, structure=np.ones((3, 3, 3), dtype=bool))

    uf = UnionFind(ids)
    owner = {}
    for i in ids:
        for c in np.unique(comp[masks[i]]):
            if c in owner:
                uf.union(owner[c], i)
            else:
                owner[c] = i

    groups = []
    for gid, members in enumerate(sorted(sorted(g) for g in uf.groups()), start=1):
        gt = np.zeros(shape, dtype=bool)
        for i in members:
            gt |= masks[i]
        pred = None
        if pred_masks is not None:
            pred = np.zeros(shape, dtype=bool)
            for i in members:
                if i in pred_masks:
                    p = np.asarray(pred_masks[i]).astype(bool)
                    if p.shape != shape:
                        raise ShapeMismatch(f"prediction of lesion {i} has shape {p.shape}")
                    pred |= p
        groups.append(LesionGroup(gid, tuple(members), gt, pred))
    return groups


def _pair(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A∩B| / (|A|+|B|), with two empty masks scoring 1.0."""
    a, b = _pair(a, b)
    na, nb = int(np.count_nonzero(a)), int(np.count_nonzero(b))
    if na + nb == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / (na + nb)


def fnvol(gt: np.ndarray, pred: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> float:
    gt, pred = _pair(gt, pred)
    return volume_mm3(int(np.count_nonzero(gt & ~pred)), spacing)


def fpvol(gt: np.ndarray, pred: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> float:
    gt, pred = _pair(gt, pred)
    return volume_mm3(int(np.count_nonzero(pred & ~gt)), spacing)


def evaluate_patient(groups: Sequence[LesionGroup], spacing=(1.0, 1.0, 1.0),
                     patient_id: str = "") -> MetricsRow:
    if not groups:
        raise NoLesions(f"patient {patient_id!r} has no lesion groups")
    dices, fn, fp = [], 0.0, 0.0
    for g in groups:
        if g.pred is None:
            raise ValueError(f"group {g.group_id} carries no prediction")
        dices.append(dice(g.gt, g.pred))
        fn += fnvol(g.gt, g.pred, spacing)
        fp += fpvol(g.gt, g.pred, spacing)
    return MetricsRow(patient_id, 100.0 * float(np.mean(dices)), fn, fp, len(groups))


def evaluate_dataset(rows: Sequence[MetricsRow]) -> MetricsRow:
    if not rows:
        raise NoPatients("no patient rows to average")
    return MetricsRow(
        "MEAN",
        float(np.mean([r.dice for r in rows])),
        float(np.mean([r.fnvol for r in rows])),
        float(np.mean([r.fpvol for r in rows])),
        sum(r.n_groups for r in rows),
    )


def evaluate_labelmaps(gt: Volume3, pred: Volume3, lesion_ids: Sequence[int],
                       patient_id: str = "") -> MetricsRow:
    """Evaluate a predicted multilabel map against a GT multilabel map.

    Only ``lesion_ids`` take part; predicted labels of other ids are ignored.
    """
    if gt.shape != pred.shape:
        raise ShapeMismatch(f"GT shape {gt.shape} vs prediction shape {pred.shape}")
    gt_masks = {i: gt.data == i for i in lesion_ids}
    pred_masks = {i: pred.data == i for i in lesion_ids}
    groups = group_gt_lesions(gt_masks, pred_masks)
    return evaluate_patient(groups, gt.spacing, patient_id)


def metrics_csv(rows: Sequence[MetricsRow], mean: Optional[MetricsRow] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in list(rows) + ([mean] if mean is not None else []):
        w.writerow([r.patient_id, f"{r.dice:.2f}", f"{r.fnvol:.2f}", f"{r.fpvol:.2f}", r.n_groups])
    return buf.getvalue()


def read_metrics_csv(text: str) -> List[MetricsRow]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        MetricsRow(d["patient_id"], float(d["dice"]), float(d["fnvol_mm3"]),
                   float(d["fpvol_mm3"]), int(d["n_groups"]))
        for d in reader
    ]


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def fold_split(patient_ids: Sequence[str], k: int = 5) -> Dict[str, int]:
    """Assign each patient to fold ``FNV-1a-64(utf8(id)) mod k``.

    The assignment of an id never depends on the other ids, so adding
    patients leaves earlier assignments unchanged.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    seen = set()
    for pid in patient_ids:
        if pid in seen:
            raise DuplicateId(f"patient id {pid!r} listed twice")
        seen.add(pid)
    return {pid: fnv1a64(pid.encode("utf-8")) % k for pid in patient_ids}
