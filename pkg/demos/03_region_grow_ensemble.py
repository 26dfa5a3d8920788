# Classical stand-in for the network: seeded region growing, then a fold ensemble
import numpy as np

from longitrack.evalx import dice
from longitrack.patcher import PatchSpec, crop_padded, infer_patch
from longitrack.segmenter import RegionGrowConfig, binarize, ensemble_mean, region_grow
from longitrack.synthgen import PhantomConfig, gen_case

case = gen_case(11, PhantomConfig())
spec = PatchSpec()

for les in case.lesions:
    pair = infer_patch(case, les, spec)
    # truth in patch coordinates, zero outside the scan
    ref, _ = crop_padded(case.gt_mask(les.id), pair.origin_curr, pair.shape, False)
    for use_mask in (False, True):
        pred = region_grow(pair, RegionGrowConfig(), use_prior_mask=use_mask)
        print(f"lesion {les.id} prior mask={use_mask!s:5s} voxels={int(pred.sum()):5d} "
              f"dice={dice(pred > 0, ref):.3f}")

# the relaxed band near the prior mask can also overshoot when the lesion shrank

# wide tolerance leaks into soft tissue
pair = infer_patch(case, case.lesions[0], spec)
for tau in (30, 40, 80, 150):
    print(f"tau={tau:4d} grown voxels={int(region_grow(pair, RegionGrowConfig(tau_hu=tau)).sum())}")

# five "folds" that differ in tolerance, averaged then thresholded
members = [region_grow(pair, RegionGrowConfig(tau_hu=t)) for t in (30, 35, 40, 45, 50)]
mean = ensemble_mean(members)
print("distinct ensemble values:", np.unique(mean))
print("foreground at 0.5:", int(binarize(mean, 0.5).sum()))
print("order independent:", ensemble_mean(members[::-1]).tobytes() == mean.tobytes())
