"""
Per-lesion segmentation backends, fold ensembling and thresholding.

A backend is any callable ``backend(pair, mode) -> np.ndarray`` returning a
probability patch in [0, 1] shaped like the pair. Two deterministic
backends ship here: an intensity region grower seeded at the point prompt
and a ground-truth oracle used to check the pipeline end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, EmptyEnsemble, MissingChannel, SeedInPadding, ShapeMismatch, UnknownLesion
from .patcher import PatchPair, crop_padded
from .promptenc import InputMode
from .volgrid import Volume3

Backend = Callable[[PatchPair, InputMode], np.ndarray]


@dataclass(frozen=True)
class RegionGrowConfig:
    # two noise std-devs of the default phantom; wider bands leak into 0 HU tissue
    tau_hu: float = 40.0
    r_max_vox: float = 24.0
    connectivity: int = 6
    mask_dilation_vox: int = 3
    mask_tau_relax: float = 1.5

    def __post_init__(self):
        if not self.tau_hu > 0:
            raise ValueError("tau_hu must be > 0")
        if not self.r_max_vox > 0:
            raise ValueError("r_max_vox must be > 0")
        if self.connectivity not in (6, 26):
            raise ValueError("connectivity must be 6 or 26")
        if self.mask_dilation_vox < 0:
            raise ValueError("mask_dilation_vox must be >= 0")
        if not self.mask_tau_relax >= 1:
            raise ValueError("mask_tau_relax must be >= 1")


def relaxed_zone(prior_mask: np.ndarray, dilation_vox: int) -> np.ndarray:
    """Voxels within Euclidean distance ``dilation_vox`` of the prior mask."""
    m = np.asarray(prior_mask) > 0
    if not m.any():
        return np.zeros(m.shape, dtype=bool)
    return ndimage.distance_transform_edt(~m) <= dilation_vox


def region_grow(pair: PatchPair, cfg: RegionGrowConfig = RegionGrowConfig(),
                use_prior_mask: bool = True) -> np.ndarray:
    """Flood fill from the prompt voxel over an HU band around the seed value.

    A voxel joins when ``|HU - HU(seed)| <= tau_hu`` and it lies within
    ``r_max_vox`` of the seed. Near the prior mask (if used and present)
    the band widens to ``tau_hu * mask_tau_relax``. Padding never joins.
    Returns a {0, 1} f32 patch holding the component that contains the seed.
    """
    hu = pair.curr_hu.astype(np.float64)
    seed = tuple(pair.center_in_patch)
    if not pair.valid_curr[seed]:
        raise SeedInPadding(f"seed {seed} falls in padding")

    tau = np.full(hu.shape, cfg.tau_hu)
    if use_prior_mask and pair.prior_mask_patch is not None:
        tau[relaxed_zone(pair.prior_mask_patch, cfg.mask_dilation_vox)] = cfg.tau_hu * cfg.mask_tau_relax

    zz, yy, xx = np.ogrid[: hu.shape[0], : hu.shape[1], : hu.shape[2]]
    d2 = (zz - seed[0]) ** 2 + (yy - seed[1]) ** 2 + (xx - seed[2]) ** 2
    allowed = (np.abs(hu - hu[seed]) <= tau) & (d2 <= cfg.r_max_vox ** 2) & pair.valid_curr

    structure = ndimage.generate_binary_structure(3, 1 if cfg.connectivity == 6 else 3)
    labels, _ = ndimage.label(allowed, structure=structure)
    return (labels == labels[seed]).astype(np.float32)


def oracle_segment(pair: PatchPair, gt: Volume3, known_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """The GT follow-up mask of ``pair.lesion_id`` cropped to the patch window.

    ``known_ids`` lists the lesions the GT annotates; a lesion that is known
    but has vanished at follow-up yields an all-zero patch.
    """
    if gt is None or (known_ids is not None and pair.lesion_id not in set(known_ids)):
        raise UnknownLesion(f"lesion {pair.lesion_id} absent from ground truth")
    patch, _ = crop_padded(gt.data == pair.lesion_id, pair.origin_curr, pair.shape, False)
    return patch.astype(np.float32)


class RegionGrowBackend:
    def __init__(self, cfg: RegionGrowConfig = RegionGrowConfig()):
        self.cfg = cfg

    def __call__(self, pair: PatchPair, mode: InputMode) -> np.ndarray:
        if mode.use_prior_mask and pair.prior_mask_patch is None:
            raise MissingChannel("input mode needs a prior mask but the case has no baseline GT")
        return region_grow(pair, self.cfg, use_prior_mask=mode.use_prior_mask)


class OracleBackend:
    def __init__(self, gt: Volume3, known_ids: Optional[Sequence[int]] = None):
        self.gt = gt
        self.known_ids = None if known_ids is None else frozenset(known_ids)

    def __call__(self, pair: PatchPair, mode: InputMode) -> np.ndarray:
        return oracle_segment(pair, self.gt, self.known_ids)


BACKEND_NAMES = ("region_grow", "oracle")


def build_backend(name: str, options: Optional[Dict] = None, case=None) -> Backend:
    """Instantiate a backend by name for one case.

    ``options`` are keyword arguments of the backend's config; the oracle
    takes none but needs ``case`` to carry follow-up ground truth.
    """
    options = dict(options or {})
    if name == "region_grow":
        try:
            return RegionGrowBackend(RegionGrowConfig(**options))
        except TypeError as exc:
            raise ConfigError(f"bad region_grow options: {exc}") from exc
    if name == "oracle":
        if case is None or case.gt_followup is None:
            raise ConfigError("oracle backend requires follow-up ground truth")
        return OracleBackend(case.gt_followup, case.lesion_ids)
    raise ConfigError(f"unknown backend {name!r}; choose from {', '.join(BACKEND_NAMES)}")


def ensemble_mean(maps: Sequence[np.ndarray]) -> np.ndarray:
    """Voxelwise mean of probability maps, independent of list order.

    Members are sorted per voxel before summing in float64, so any
    permutation of ``maps`` gives a bit-identical result.
    """
    if len(maps) == 0:
        raise EmptyEnsemble("cannot ensemble zero maps")
    shape = np.shape(maps[0])
    for m in maps:
        if np.shape(m) != shape:
            raise ShapeMismatch(f"ensemble member shape {np.shape(m)} != {shape}")
    stack = np.sort(np.stack([np.asarray(m, dtype=np.float64) for m in maps]), axis=0)
    return (stack.sum(axis=0) / len(maps)).astype(np.float32)


def binarize(prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return np.asarray(prob) >= threshold
