# Prompt channels: normalized CT plus a Gaussian point blob and the prior mask
import numpy as np

from longitrack.promptenc import (INPUT_MODES, NormalizationConfig, PointBlobConfig, normalize_hu,
                                  rasterize_point, stack_inputs)

# HU values outside [-1000, 1000] are clipped before scaling
hu = np.array([-3000.0, -1000.0, 0.0, 40.0, 500.0, 2500.0])
print(normalize_hu(hu))
print(normalize_hu(hu, NormalizationConfig(mu=40.0, sigma_hu=100.0)))

# blob peaks at exactly 1.0 on the prompt voxel
blob = rasterize_point((8, 8, 8), (17, 17, 17))
print(blob[8, 8, 6:11])
print("nonzero voxels:", np.count_nonzero(blob))

# unit_volume integrates to one instead
vol = rasterize_point((8, 8, 8), (17, 17, 17), PointBlobConfig(mode="unit_volume"))
print("sum:", vol.sum(dtype=np.float64))

# a prompt at the patch corner is truncated, not shifted
corner = rasterize_point((0, 0, 0), (17, 17, 17))
print("corner blob mass vs centered:", corner.sum() / blob.sum())

img = normalize_hu(np.random.default_rng(0).normal(0, 50, (17, 17, 17)))
mask = np.zeros_like(img)
mask[6:11, 6:11, 6:11] = 1
for name, mode in INPUT_MODES.items():
    x = stack_inputs(img, img, mask, blob, mode)
    print(f"{name:26s} -> {x.shape}")
