"""
longitrack
==========

Tools for promptable lesion tracking between a baseline and a follow-up CT.

Modules
-------

    volgrid     Volume3 container, SVOL1 file IO, physical volumes
    records     lesion prompts, per-patient case records, dataset layout
    promptenc   CT normalization, Gaussian point channels, channel stacking
    patcher     center-aligned patch extraction (training and inference)
    segmenter   region-grow and oracle backends, fold ensembling
    fuse        multilabel merging and per-lesion export
    evalx       lesion grouping, Dice / FN volume / FP volume, fold split
    synthgen    synthetic longitudinal phantoms
    cli         the ``longitrack`` command
"""

from .volgrid import Volume3, read_svol, volume_mm3, write_svol
from .records import CaseRecord, LesionPrompt, load_case, save_case
from .promptenc import (
    InputMode,
    NormalizationConfig,
    PointBlobConfig,
    normalize_ct,
    rasterize_point,
    stack_inputs,
)
from .patcher import PatchPair, PatchSpec, RngStream, infer_patch, paste_patch, train_sample, validate_case
from .segmenter import RegionGrowConfig, binarize, ensemble_mean, oracle_segment, region_grow
from .fuse import export_separate, merge_multilabel
from .evalx import (
    MetricsRow,
    dice,
    evaluate_dataset,
    evaluate_patient,
    fnvol,
    fold_split,
    fpvol,
    group_gt_lesions,
)
from .synthgen import PhantomConfig, gen_case, gen_dataset

__version__ = "0.1.0"
