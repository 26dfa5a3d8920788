"""
Center-aligned longitudinal patch extraction.

Both scans are aligned through the lesion centers given with the dataset;
no registration happens here. A patch is placed so that a (possibly
jittered) center lands at a chosen in-patch offset. Voxels outside the
volume are padded: images with ``pad_value_hu``, masks with 0.

Training draws share one in-patch offset between the two scans, sampled
per axis from the inner half ``[P//4, 3*P//4)``, and jitter each scan's
center independently by up to ``train_shift_max`` voxels per axis.
Inference puts both centers at ``P//2`` with no jitter.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import UnknownLesion
from .promptenc import NormalizationConfig, PointBlobConfig, normalize_hu, rasterize_point
from .records import CaseRecord, LesionPrompt, VoxelIndex

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatchSpec:
    patch_size: Tuple[int, int, int] = (64, 64, 64)
    pad_value_hu: float = -1000.0
    train_shift_max: int = 4

    def __post_init__(self):
        size = tuple(int(p) for p in self.patch_size)
        if len(size) != 3 or any(p < 4 or p % 2 for p in size):
            raise ValueError(f"patch_size components must be even and >= 4, got {self.patch_size}")
        if self.train_shift_max < 0:
            raise ValueError("train_shift_max must be >= 0")
        object.__setattr__(self, "patch_size", size)


@dataclass(frozen=True)
class RngStream:
    """A labelled random stream; equal (seed, label) pairs give equal draws."""

    seed: int
    label: str = ""

    def generator(self) -> np.random.Generator:
        label_key = int.from_bytes(hashlib.sha256(self.label.encode("utf-8")).digest()[:8], "little")
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, label_key])
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class PatchPair:
    """Aligned patches of both timepoints for one lesion.

    ``curr_hu``/``prior_hu`` keep raw HU next to the normalized patches.
    ``valid_curr`` marks follow-up patch voxels that lie inside the scan.
    ``center_in_patch`` is where the point prompt sits (the channel peak).
    """

    lesion_id: int
    curr_patch: np.ndarray
    curr_hu: np.ndarray
    prior_patch: np.ndarray
    prior_hu: np.ndarray
    prior_mask_patch: Optional[np.ndarray]
    point_channel: np.ndarray
    origin_curr: VoxelIndex
    origin_prior: VoxelIndex
    center_in_patch: VoxelIndex
    valid_curr: np.ndarray

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.curr_patch.shape)

    def tobytes(self) -> bytes:
        parts = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                parts.append(f.name.encode() + v.dtype.str.encode() + v.tobytes())
            else:
                parts.append(f.name.encode() + repr(v).encode())
        return b"|".join(parts)

    def __eq__(self, other):
        if not isinstance(other, PatchPair):
            return NotImplemented
        return self.tobytes() == other.tobytes()


def crop_padded(arr: np.ndarray, origin: Sequence[int], size: Sequence[int], fill) -> Tuple[np.ndarray, np.ndarray]:
    """Crop ``size`` voxels starting at ``origin``; out-of-bounds voxels get ``fill``.

    Returns the patch and a boolean mask of in-bounds patch voxels.
    """
    out = np.full(tuple(size), fill, dtype=arr.dtype)
    valid = np.zeros(tuple(size), dtype=bool)
    src, dst = [], []
    for o, p, n in zip(origin, size, arr.shape):
        lo, hi = max(o, 0), min(o + p, n)
        if hi <= lo:
            return out, valid
        src.append(slice(lo, hi))
        dst.append(slice(lo - o, hi - o))
    out[tuple(dst)] = arr[tuple(src)]
    valid[tuple(dst)] = True
    return out, valid


def extract_pair(case: CaseRecord, lesion: LesionPrompt, spec: PatchSpec,
                 offset: Sequence[int], jitter_curr: Sequence[int] = (0, 0, 0),
                 jitter_prior: Sequence[int] = (0, 0, 0),
                 norm: NormalizationConfig = NormalizationConfig(),
                 blob: PointBlobConfig = PointBlobConfig()) -> PatchPair:
    """Cut patches so that each jittered center sits at ``offset`` inside its patch."""
    if lesion not in case.lesions:
        raise UnknownLesion(f"lesion {lesion.id} not in case {case.patient_id}")
    size = spec.patch_size
    offset = tuple(int(o) for o in offset)
    origin_curr = tuple(int(c + j - o) for c, j, o in zip(lesion.center_followup, jitter_curr, offset))
    origin_prior = tuple(int(c + j - o) for c, j, o in zip(lesion.center_baseline, jitter_prior, offset))

    pad = np.float32(spec.pad_value_hu)
    curr_hu, valid = crop_padded(case.followup.data.astype(np.float32, copy=False), origin_curr, size, pad)
    prior_hu, _ = crop_padded(case.baseline.data.astype(np.float32, copy=False), origin_prior, size, pad)
    mask = None
    if case.gt_baseline is not None:
        labels, _ = crop_padded(case.gt_baseline.data, origin_prior, size, 0)
        mask = (labels == lesion.id).astype(np.float32)

    return PatchPair(
        lesion_id=lesion.id,
        curr_patch=normalize_hu(curr_hu, norm),
        curr_hu=curr_hu,
        prior_patch=normalize_hu(prior_hu, norm),
        prior_hu=prior_hu,
        prior_mask_patch=mask,
        point_channel=rasterize_point(offset, size, blob),
        origin_curr=origin_curr,
        origin_prior=origin_prior,
        center_in_patch=offset,
        valid_curr=valid,
    )


def _resolve(case: CaseRecord, lesion) -> LesionPrompt:
    if isinstance(lesion, LesionPrompt):
        if lesion not in case.lesions:
            raise UnknownLesion(f"lesion {lesion.id} not in case {case.patient_id}")
        return lesion
    return case.lesion(int(lesion))


def train_sample(case: CaseRecord, lesion, spec: PatchSpec, rng: RngStream,
                 norm: NormalizationConfig = NormalizationConfig(),
                 blob: PointBlobConfig = PointBlobConfig()) -> PatchPair:
    """Draw one jittered training patch pair for ``lesion`` (prompt or id)."""
    lesion = _resolve(case, lesion)
    gen = rng.generator()
    size = np.asarray(spec.patch_size)
    offset = gen.integers(size // 4, (3 * size) // 4)
    s = spec.train_shift_max
    jitter_curr = gen.integers(-s, s + 1, size=3)
    jitter_prior = gen.integers(-s, s + 1, size=3)
    return extract_pair(case, lesion, spec, offset, jitter_curr, jitter_prior, norm, blob)


def infer_patch(case: CaseRecord, lesion, spec: PatchSpec,
                norm: NormalizationConfig = NormalizationConfig(),
                blob: PointBlobConfig = PointBlobConfig()) -> PatchPair:
    """Deterministic patch pair with both centers at the patch middle."""
    lesion = _resolve(case, lesion)
    offset = tuple(p // 2 for p in spec.patch_size)
    return extract_pair(case, lesion, spec, offset, norm=norm, blob=blob)


@dataclass(frozen=True, eq=False)
class PatchUpdate:
    """Sparse full-volume values produced by pasting a patch back."""

    full_shape: Tuple[int, int, int]
    flat_index: np.ndarray
    values: np.ndarray

    def __len__(self):
        return int(self.flat_index.size)

    def to_dense(self, fill=0.0, dtype=np.float32) -> np.ndarray:
        out = np.full(self.full_shape, fill, dtype=dtype)
        out.reshape(-1)[self.flat_index] = self.values
        return out


def paste_patch(full_shape: Sequence[int], origin: Sequence[int], patch: np.ndarray) -> PatchUpdate:
    """Map patch voxels back to full-volume coordinates, dropping those in padding."""
    full_shape = tuple(int(s) for s in full_shape)
    patch = np.asarray(patch)
    src, dst = [], []
    for o, p, n in zip(origin, patch.shape, full_shape):
        lo, hi = max(o, 0), min(o + p, n)
        if hi <= lo:
            return PatchUpdate(full_shape, np.zeros(0, np.int64), np.zeros(0, patch.dtype))
        src.append(slice(lo - o, hi - o))
        dst.append(np.arange(lo, hi))
    zz, yy, xx = np.meshgrid(*dst, indexing="ij")
    flat = np.ravel_multi_index((zz.ravel(), yy.ravel(), xx.ravel()), full_shape)
    return PatchUpdate(full_shape, flat.astype(np.int64), patch[tuple(src)].ravel().copy())


def edge_lesion_ids(case: CaseRecord, margin: int = 0) -> List[int]:
    """Ids of lesions whose follow-up center is within ``margin`` voxels of a scan face."""
    shape = case.followup.shape
    return [
        les.id for les in case.lesions
        if min(min(c, n - 1 - c) for c, n in zip(les.center_followup, shape)) <= margin
    ]


def validate_case(case: CaseRecord, margin: int = 0) -> List[str]:
    """Warn about lesions whose follow-up center is within ``margin`` voxels of a face.

    Such prompts usually mean the lesion is not visible in the follow-up scan.
    """
    warnings = []
    for lesion_id in edge_lesion_ids(case, margin):
        les = case.lesion(lesion_id)
        msg = (f"{case.patient_id}: lesion {les.id} follow-up center {les.center_followup} "
               f"lies within {margin} voxels of the scan edge")
        log.debug(msg)
        warnings.append(msg)
    return warnings
