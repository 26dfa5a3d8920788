"""
Toy longitudinal CT phantoms.

A case is an air-filled box holding a soft-tissue cylinder (the "body")
with axis-aligned ellipsoidal lesions inside it. The follow-up scan scales
each lesion by a drawn growth factor and drifts its center by a few voxels;
the drifted centers are the propagated follow-up prompts. Both scans get
independent Gaussian noise. Everything is a pure function of the seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import DuplicateId, IoError, PlacementFailed
from .records import CaseRecord, LesionPrompt, save_case
from .volgrid import Volume3

log = logging.getLogger(__name__)

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(seed: int, index: int) -> int:
    """The ``index``-th output (0-based) of a SplitMix64 generator seeded with ``seed``."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def patient_id_for(seed: int) -> str:
    return f"{splitmix64(seed, 0):016x}"[:10]


@dataclass(frozen=True)
class PhantomConfig:
    shape: Tuple[int, int, int] = (64, 64, 64)
    spacing: Tuple[float, float, float] = (1.5, 1.5, 1.5)
    max_lesions: int = 5
    radius_mm: Tuple[float, float] = (3.0, 10.0)
    lesion_hu: Tuple[float, float] = (50.0, 150.0)
    background_hu: float = -1000.0
    body_hu: float = 0.0
    body_radius_frac: float = 0.45
    noise_std_hu: float = 20.0
    growth: Tuple[float, float] = (0.6, 1.6)
    drift_max_vox: int = 3
    min_gap_vox: int = 2
    max_tries: int = 200

    def __post_init__(self):
        if len(self.shape) != 3 or min(self.shape) < 8:
            raise ValueError("shape needs 3 components >= 8")
        if self.max_lesions < 1:
            raise ValueError("max_lesions must be >= 1")
        lo, hi = self.radius_mm
        if not 0 < lo <= hi:
            raise ValueError("radius range must be positive and ordered")
        glo, ghi = self.growth
        if not 0 < glo <= ghi:
            raise ValueError("growth factors must be positive and ordered")
        if not 0 <= self.drift_max_vox <= min(self.shape) / 8:
            raise ValueError("drift_max_vox must lie in [0, min(shape)/8]")
        if self.noise_std_hu < 0:
            raise ValueError("noise_std_hu must be >= 0")

    @property
    def contrast_hu(self) -> float:
        return min(self.lesion_hu) - self.body_hu


def ellipsoid_mask(shape, center, semi_axes) -> np.ndarray:
    zz, yy, xx = np.ogrid[: shape[0], : shape[1], : shape[2]]
    (cz, cy, cx), (az, ay, ax) = center, semi_axes
    return ((zz - cz) / az) ** 2 + ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0


def _body_mask(cfg: PhantomConfig):
    _, ny, nx = cfg.shape
    cy, cx = (ny - 1) / 2.0, (nx - 1) / 2.0
    radius = cfg.body_radius_frac * min(ny, nx)
    yy, xx = np.ogrid[:ny, :nx]
    disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    return np.broadcast_to(disk, cfg.shape), (cy, cx), radius


def gen_case(seed: int, cfg: PhantomConfig = PhantomConfig()) -> CaseRecord:
    """Generate one baseline/follow-up phantom pair with per-lesion GT.

    Raises
    ------
    PlacementFailed
        If a lesion cannot be placed inside the body, clear of the others
        at both timepoints, within ``cfg.max_tries`` draws.
    """
    rng = np.random.default_rng(seed & _MASK64)
    shape = tuple(cfg.shape)
    spacing = np.asarray(cfg.spacing, dtype=np.float64)
    body, (cy, cx), body_r = _body_mask(cfg)
    n_lesions = int(rng.integers(1, cfg.max_lesions + 1))
    gap = ndimage.generate_binary_structure(3, 3)

    occupied_bl = np.zeros(shape, dtype=bool)
    occupied_fu = np.zeros(shape, dtype=bool)
    gt_bl = np.zeros(shape, dtype=np.uint16)
    gt_fu = np.zeros(shape, dtype=np.uint16)
    lesion_hu = {}
    lesions = []

    for lesion_id in range(1, n_lesions + 1):
        for _ in range(cfg.max_tries):
            semi_bl = rng.uniform(*cfg.radius_mm, size=3) / spacing
            growth = rng.uniform(*cfg.growth)
            semi_fu = semi_bl * growth
            drift = rng.integers(-cfg.drift_max_vox, cfg.drift_max_vox + 1, size=3)
            hu = rng.uniform(*cfg.lesion_hu)
            ext = int(math.ceil(max(semi_bl.max(), semi_fu.max()))) + 2
            lo = np.full(3, ext) + np.maximum(-drift, 0)
            hi = np.asarray(shape) - 1 - ext - np.maximum(drift, 0)
            if np.any(hi < lo):
                continue
            c_bl = rng.integers(lo, hi + 1)
            c_fu = c_bl + drift
            reach = max(semi_bl[1:].max(), semi_fu[1:].max()) + 1.0
            if any(math.hypot(c[1] - cy, c[2] - cx) + reach > body_r for c in (c_bl, c_fu)):
                continue
            m_bl = ellipsoid_mask(shape, c_bl, semi_bl)
            m_fu = ellipsoid_mask(shape, c_fu, semi_fu)
            if (m_bl & occupied_bl).any() or (m_fu & occupied_fu).any():
                continue
            break
        else:
            raise PlacementFailed(f"seed {seed}: could not place lesion {lesion_id} in {cfg.max_tries} tries")

        gt_bl[m_bl] = lesion_id
        gt_fu[m_fu] = lesion_id
        occupied_bl |= ndimage.binary_dilation(m_bl, gap, iterations=cfg.min_gap_vox)
        occupied_fu |= ndimage.binary_dilation(m_fu, gap, iterations=cfg.min_gap_vox)
        lesion_hu[lesion_id] = hu
        lesions.append(LesionPrompt(lesion_id, tuple(c_bl), tuple(c_fu)))

    def render(gt):
        img = np.where(body, cfg.body_hu, cfg.background_hu)
        for lid, hu in lesion_hu.items():
            img[gt == lid] = hu
        img = img + rng.normal(0.0, cfg.noise_std_hu, size=shape)
        return img.astype(np.float32)

    sp = tuple(float(s) for s in spacing)
    return CaseRecord(
        patient_id=patient_id_for(seed),
        baseline=Volume3(render(gt_bl), sp),
        followup=Volume3(render(gt_fu), sp),
        lesions=lesions,
        gt_baseline=Volume3(gt_bl, sp),
        gt_followup=Volume3(gt_fu, sp),
    )


def case_seeds(master_seed: int, n_cases: int):
    return [splitmix64(master_seed, i) for i in range(n_cases)]


def gen_dataset(master_seed: int, n_cases: int, cfg: PhantomConfig = PhantomConfig(),
                root=None) -> Path:
    """Write ``n_cases`` phantoms under ``root/<patient_id>/``.

    Case ``i`` uses seed ``splitmix64(master_seed, i)``.
    """
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    if root is None:
        raise ValueError("root directory required")
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {root}: {exc}") from exc
    seen = set()
    for i, seed in enumerate(case_seeds(master_seed, n_cases)):
        case = gen_case(seed, cfg)
        if case.patient_id in seen:
            raise DuplicateId(f"patient id collision {case.patient_id}")
        seen.add(case.patient_id)
        save_case(case, root / case.patient_id)
        log.info("case %d/%d: %s with %d lesions", i + 1, n_cases, case.patient_id, len(case.lesions))
    return root
