# Paired patch extraction around a tracked lesion
import numpy as np

from longitrack.patcher import PatchSpec, RngStream, infer_patch, train_sample
from longitrack.synthgen import PhantomConfig, gen_case

case = gen_case(7, PhantomConfig())
print(case.patient_id, case.followup.shape, [l.id for l in case.lesions])
les = case.lesions[0]
print("baseline center", les.center_baseline, "follow-up center", les.center_followup)

spec = PatchSpec(patch_size=(48, 48, 48), train_shift_max=4)

# inference: lesion sits at the exact patch center, no jitter
pair = infer_patch(case, les, spec)
print("inference prompt in patch:", pair.center_in_patch)
print("valid fraction:", pair.valid_curr.mean())

# training: random offset in the inner half, independent jitter per scan
offsets, shifts = [], []
for i in range(500):
    p = train_sample(case, les, spec, RngStream(1, f"demo/{i}"))
    offsets.append(p.center_in_patch)
    shifts.append(np.subtract(p.origin_prior, p.origin_curr))
offsets = np.array(offsets)
print("offset range per axis:", offsets.min(0), offsets.max(0))
print("baseline-vs-follow-up origin shift spread:", np.ptp(np.array(shifts), axis=0))

# same label, same draw
a = train_sample(case, les, spec, RngStream(1, "demo/0"))
print("reproducible:", a == train_sample(case, les, spec, RngStream(1, "demo/0")))

# the channels a network would see
x = pair.curr_patch, pair.prior_patch, pair.prior_mask_patch, pair.point_channel
print([c.dtype.name for c in x], [float(c.max()) for c in x])
