"""
CT intensity normalization and prompt channels.

A point prompt becomes an isotropic Gaussian blob measured in voxel units.
In ``unit_intensity`` mode the blob peaks at exactly 1.0 on the prompt
voxel, which keeps it on the scale of normalized CT values; ``unit_volume``
mode divides by the blob sum instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import MissingChannel, PromptOutOfPatch, ShapeMismatch
from .volgrid import Volume3

UNIT_INTENSITY = "unit_intensity"
UNIT_VOLUME = "unit_volume"


@dataclass(frozen=True)
class NormalizationConfig:
    clip_lo: float = -1000.0
    clip_hi: float = 1000.0
    mu: float = 0.0
    sigma_hu: float = 500.0

    def __post_init__(self):
        if not self.clip_lo < self.clip_hi:
            raise ValueError("clip_lo must be < clip_hi")
        if not self.sigma_hu > 0:
            raise ValueError("sigma_hu must be > 0")


@dataclass(frozen=True)
class PointBlobConfig:
    sigma_vox: float = 2.0
    truncation_radius: float = 3.0
    mode: str = UNIT_INTENSITY

    def __post_init__(self):
        if not self.sigma_vox > 0:
            raise ValueError("sigma_vox must be > 0")
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be > 0")
        if self.mode not in (UNIT_INTENSITY, UNIT_VOLUME):
            raise ValueError(f"unknown blob mode {self.mode!r}")


@dataclass(frozen=True)
class InputMode:
    """Which optional channels accompany the current image."""

    use_prior_image: bool = True
    use_prior_mask: bool = True
    use_point: bool = True

    def __post_init__(self):
        if not (self.use_prior_mask or self.use_point):
            raise ValueError("an input mode needs a prior mask or a point prompt")

    @property
    def n_channels(self) -> int:
        return 1 + int(self.use_prior_image) + int(self.use_prior_mask) + int(self.use_point)


CROSS_SECTIONAL_POINT = InputMode(use_prior_image=False, use_prior_mask=False, use_point=True)
CROSS_SECTIONAL_MASK = InputMode(use_prior_image=False, use_prior_mask=True, use_point=False)
LONGITUDINAL_MASK_POINT = InputMode(use_prior_image=True, use_prior_mask=True, use_point=True)

INPUT_MODES = {
    "cross_sectional_point": CROSS_SECTIONAL_POINT,
    "cross_sectional_mask": CROSS_SECTIONAL_MASK,
    "longitudinal_mask_point": LONGITUDINAL_MASK_POINT,
}


def normalize_hu(raw: np.ndarray, cfg: NormalizationConfig = NormalizationConfig()) -> np.ndarray:
    """Clip to ``[clip_lo, clip_hi]``, subtract ``mu`` and divide by ``sigma_hu`` (f32 out)."""
    v = np.array(raw, dtype=np.float32)
    np.maximum(v, np.float32(cfg.clip_lo), out=v)
    np.minimum(v, np.float32(cfg.clip_hi), out=v)
    v -= np.float32(cfg.mu)
    v /= np.float32(cfg.sigma_hu)
    return v


def normalize_ct(raw: Volume3, cfg: NormalizationConfig = NormalizationConfig()) -> Volume3:
    return Volume3(normalize_hu(raw.data, cfg), raw.spacing)


def rasterize_point(center: Sequence[int], patch_shape: Sequence[int],
                    cfg: PointBlobConfig = PointBlobConfig()) -> np.ndarray:
    """Render a Gaussian point prompt into a patch-shaped f32 channel.

    Parameters
    ----------
    center : 3 ints
        Prompt voxel, in patch coordinates.
    patch_shape : 3 ints
    cfg : PointBlobConfig

    Returns
    -------
    np.ndarray
        f32 array of ``patch_shape``. Voxels farther than
        ``truncation_radius * sigma_vox`` from ``center`` are 0.
    """
    center = tuple(int(c) for c in center)
    shape = tuple(int(s) for s in patch_shape)
    if len(center) != 3 or any(c < 0 or c >= s for c, s in zip(center, shape)):
        raise PromptOutOfPatch(f"center {center} outside patch {shape}")

    cutoff = cfg.truncation_radius * cfg.sigma_vox
    reach = int(np.floor(cutoff))
    # only the cube around the center can be nonzero
    box = tuple(slice(max(c - reach, 0), min(c + reach + 1, n)) for c, n in zip(center, shape))
    zz, yy, xx = np.ogrid[box]
    d2 = (zz - center[0]) ** 2 + (yy - center[1]) ** 2 + (xx - center[2]) ** 2
    g = np.exp(-d2 / (2.0 * cfg.sigma_vox ** 2))
    g[d2 > cutoff * cutoff] = 0.0
    if cfg.mode == UNIT_VOLUME:
        g /= g.sum()
    out = np.zeros(shape, dtype=np.float32)
    out[box] = g
    return out


def stack_inputs(curr_img: np.ndarray, prior_img: Optional[np.ndarray] = None,
                 prior_mask: Optional[np.ndarray] = None, point_channel: Optional[np.ndarray] = None,
                 mode: InputMode = LONGITUDINAL_MASK_POINT) -> np.ndarray:
    """Concatenate patches along a leading channel axis.

    Order is current image, then prior image, prior mask and point channel,
    each included only if ``mode`` asks for it. Returns a (C, z, y, x) f32
    array; ``C == mode.n_channels``.
    """
    if curr_img is None:
        raise MissingChannel("current image is always required")
    wanted = [("current image", curr_img)]
    if mode.use_prior_image:
        wanted.append(("prior image", prior_img))
    if mode.use_prior_mask:
        wanted.append(("prior mask", prior_mask))
    if mode.use_point:
        wanted.append(("point", point_channel))

    shape = np.shape(curr_img)
    chans = []
    for name, arr in wanted:
        if arr is None:
            raise MissingChannel(f"{name} channel required by {mode}")
        if np.shape(arr) != shape:
            raise ShapeMismatch(f"{name} has shape {np.shape(arr)}, expected {shape}")
        chans.append(np.asarray(arr, dtype=np.float32))
    return np.stack(chans, axis=0)
