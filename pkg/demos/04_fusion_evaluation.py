# Merge per-lesion predictions into one label map and score it
import numpy as np

from longitrack.evalx import dice, evaluate_dataset, evaluate_labelmaps, group_gt_lesions, metrics_csv
from longitrack.fuse import export_separate, merge_multilabel
from longitrack.patcher import PatchSpec, infer_patch, paste_patch
from longitrack.segmenter import RegionGrowConfig, region_grow
from longitrack.synthgen import PhantomConfig, gen_case

rows = []
for seed in (3, 4, 5):
    case = gen_case(seed, PhantomConfig())
    preds = []
    for les in case.lesions:
        pair = infer_patch(case, les, PatchSpec())
        prob = region_grow(pair, RegionGrowConfig())
        preds.append((les.id, paste_patch(case.followup.shape, pair.origin_curr, prob)))

    merged = merge_multilabel(preds, case.followup.shape, 0.5, case.followup.spacing)
    print(case.patient_id, "labels:", np.unique(merged.data).tolist(), merged.dtype)
    for lid, vol in export_separate(preds, case.followup.shape, 0.5, case.followup.spacing):
        print(f"  lesion {lid}: {int(vol.data.sum())} voxels")

    row = evaluate_labelmaps(case.gt_followup, merged, case.lesion_ids, case.patient_id)
    rows.append(row)

mean = evaluate_dataset(rows)
print(metrics_csv(rows, mean))

# touching ground-truth lesions are scored as one group
a = np.zeros((8, 8, 8), bool)
b = np.zeros_like(a)
a[2:4, 2:4, 2:4] = True
b[4:6, 4:6, 4:6] = True  # diagonal contact
groups = group_gt_lesions({1: a, 2: b})
print("groups:", [g.members for g in groups])
print("dice of empty vs empty:", dice(np.zeros(3, bool), np.zeros(3, bool)))
