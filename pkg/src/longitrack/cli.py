"""
Command-line entry point.

    longitrack gen      --seed 42 --cases 20 --dataset data/
    longitrack split    --dataset data/ --output runs/a
    longitrack infer    --dataset data/ --output runs/a --backend oracle --fold all
    longitrack eval     --dataset data/ --output runs/a
    longitrack validate --dataset data/

Settings come from an optional JSON file (``--config``) overridden by flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

from . import evalx, fuse
from .errors import ConfigError, LongitrackError, NoLesions
from .patcher import PatchSpec, edge_lesion_ids, infer_patch, paste_patch, validate_case
from .promptenc import INPUT_MODES, InputMode, NormalizationConfig, PointBlobConfig
from .records import list_cases, load_case
from .segmenter import BACKEND_NAMES, build_backend, ensemble_mean
from .synthgen import PhantomConfig, gen_dataset
from .volgrid import read_svol, write_svol

log = logging.getLogger("longitrack")

PRED_DIR = "predictions"
MANIFEST = "manifest.json"
METRICS = "metrics.csv"
FOLDS = "folds.json"


@dataclasses.dataclass
class RunConfig:
    dataset_root: str = "data"
    output_root: str = "runs/default"
    seed: int = 42
    cases: int = 20
    patch: PatchSpec = dataclasses.field(default_factory=PatchSpec)
    normalization: NormalizationConfig = dataclasses.field(default_factory=NormalizationConfig)
    blob: PointBlobConfig = dataclasses.field(default_factory=PointBlobConfig)
    input_mode: str = "longitudinal_mask_point"
    backend: str = "region_grow"
    backend_config: Dict = dataclasses.field(default_factory=dict)
    # fold ids of ensemble members; empty means a single model
    ensemble: List[int] = dataclasses.field(default_factory=list)
    member_overrides: Dict[str, Dict] = dataclasses.field(default_factory=dict)
    threshold: float = 0.5
    k: int = 5
    margin: int = 0
    exclude_patient_on_edge: bool = False
    phantom: PhantomConfig = dataclasses.field(default_factory=PhantomConfig)

    _NESTED = {
        "patch": PatchSpec,
        "normalization": NormalizationConfig,
        "blob": PointBlobConfig,
        "phantom": PhantomConfig,
    }

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"unknown input_mode {self.input_mode!r}; choose from {', '.join(INPUT_MODES)}")
        if self.backend not in BACKEND_NAMES:
            raise ConfigError(f"unknown backend {self.backend!r}; choose from {', '.join(BACKEND_NAMES)}")

    @property
    def mode(self) -> InputMode:
        return INPUT_MODES[self.input_mode]

    @classmethod
    def from_dict(cls, d: Dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = dict(d)
        try:
            for key, typ in cls._NESTED.items():
                if isinstance(kw.get(key), dict):
                    kw[key] = typ(**{k: tuple(v) if isinstance(v, list) else v for k, v in kw[key].items()})
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def to_dict(self) -> Dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_gen(cfg: RunConfig) -> int:
    root = Path(cfg.dataset_root)
    gen_dataset(cfg.seed, cfg.cases, cfg.phantom, root)
    _write_json(root / "gen_config.json",
                {"seed": cfg.seed, "cases": cfg.cases, "phantom": dataclasses.asdict(cfg.phantom)})
    print(f"wrote {cfg.cases} cases to {root}")
    return 0


def cmd_split(cfg: RunConfig) -> int:
    ids = list_cases(cfg.dataset_root)
    assignment = evalx.fold_split(ids, cfg.k)
    out = Path(cfg.output_root) / FOLDS
    _write_json(out, {"k": cfg.k, "assignment": assignment})
    sizes = [sum(1 for f in assignment.values() if f == i) for i in range(cfg.k)]
    print(f"wrote {out}; fold sizes {sizes}")
    return 0


def select_patients(cfg: RunConfig, fold: str) -> List[str]:
    ids = list_cases(cfg.dataset_root)
    if fold == "all":
        return ids
    try:
        i = int(fold)
    except ValueError:
        raise ConfigError(f"--fold must be an integer or 'all', got {fold!r}") from None
    if not 0 <= i < cfg.k:
        raise ConfigError(f"fold {i} outside [0, {cfg.k})")
    assignment = evalx.fold_split(ids, cfg.k)
    return [pid for pid in ids if assignment[pid] == i]


def _predict_lesion(cfg: RunConfig, case, lesion):
    pair = infer_patch(case, lesion, cfg.patch, cfg.normalization, cfg.blob)
    mode = cfg.mode
    if not cfg.ensemble:
        prob = build_backend(cfg.backend, cfg.backend_config, case)(pair, mode)
    else:
        maps = []
        for member in cfg.ensemble:
            opts = {**cfg.backend_config, **cfg.member_overrides.get(str(member), {})}
            maps.append(build_backend(cfg.backend, opts, case)(pair, mode))
        prob = ensemble_mean(maps)
    return paste_patch(case.followup.shape, pair.origin_curr, prob)


def infer_one(cfg: RunConfig, patient_id: str) -> Dict:
    """Run all lesions of one patient; returns a manifest fragment."""
    case = load_case(Path(cfg.dataset_root) / patient_id)
    for w in validate_case(case, cfg.margin):
        log.warning("%s", w)
    edge_ids = edge_lesion_ids(case, cfg.margin)
    if edge_ids and cfg.exclude_patient_on_edge:
        log.warning("%s: excluded, prompt on scan edge", patient_id)
        return {"patient": patient_id, "excluded": True, "skipped_lesions": edge_ids, "files": []}

    preds = [(les.id, _predict_lesion(cfg, case, les))
             for les in case.lesions if les.id not in edge_ids]
    shape, spacing = case.followup.shape, case.followup.spacing
    pred_dir = Path(cfg.output_root) / PRED_DIR
    files = []
    merged = fuse.merge_multilabel(preds, shape, cfg.threshold, spacing)
    write_svol(merged, pred_dir / fuse.merged_name(patient_id))
    files.append(fuse.merged_name(patient_id))
    for lesion_id, vol in fuse.export_separate(preds, shape, cfg.threshold, spacing):
        write_svol(vol, pred_dir / fuse.lesion_name(patient_id, lesion_id))
        files.append(fuse.lesion_name(patient_id, lesion_id))
    log.info("%s: %d lesions predicted, %d skipped", patient_id, len(preds), len(edge_ids))
    return {"patient": patient_id, "excluded": False, "skipped_lesions": edge_ids,
            "files": [f"{PRED_DIR}/{f}" for f in files]}


def cmd_infer(cfg: RunConfig, fold: str = "all", jobs: int = 1) -> int:
    patients = select_patients(cfg, fold)
    out = Path(cfg.output_root)
    (out / PRED_DIR).mkdir(parents=True, exist_ok=True)
    _write_json(out / "run_config.json", cfg.to_dict())
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda pid: infer_one(cfg, pid), patients))

    manifest = {
        "fold": fold,
        "patients": [r["patient"] for r in results if not r["excluded"]],
        "excluded_patients": [r["patient"] for r in results if r["excluded"]],
        "skipped_lesions": {r["patient"]: r["skipped_lesions"] for r in results if r["skipped_lesions"]},
        "files": [{"path": f, "sha256": _sha256(out / f)}
                  for r in results for f in sorted(r["files"])],
    }
    _write_json(out / MANIFEST, manifest)
    print(f"predicted {len(manifest['patients'])} patients "
          f"({len(manifest['excluded_patients'])} excluded); manifest at {out / MANIFEST}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    out = Path(cfg.output_root)
    manifest_path = out / MANIFEST
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        patients = manifest["patients"]
        skipped = {k: set(v) for k, v in manifest.get("skipped_lesions", {}).items()}
    else:
        patients, skipped = list_cases(cfg.dataset_root), {}

    rows, missing = [], []
    for pid in patients:
        pred_path = out / PRED_DIR / fuse.merged_name(pid)
        if not pred_path.is_file():
            missing.append(pid)
            print(f"missing prediction for {pid}: {pred_path}", file=sys.stderr)
            continue
        case = load_case(Path(cfg.dataset_root) / pid)
        ids = [i for i in case.lesion_ids if i not in skipped.get(pid, set())]
        try:
            rows.append(evalx.evaluate_labelmaps(case.gt_followup, read_svol(pred_path), ids, pid))
        except NoLesions:
            log.warning("%s: no evaluable lesions, excluded from the mean", pid)

    mean = evalx.evaluate_dataset(rows) if rows else None
    text = evalx.metrics_csv(rows, mean)
    (out / METRICS).write_text(text, encoding="utf-8")
    print(text, end="")
    if missing:
        print(f"{len(missing)} patient(s) failed: {', '.join(missing)}", file=sys.stderr)
        return 1
    return 0


def cmd_validate(cfg: RunConfig) -> int:
    n_warn = 0
    for pid in list_cases(cfg.dataset_root):
        for w in validate_case(load_case(Path(cfg.dataset_root) / pid), cfg.margin):
            print(w)
            n_warn += 1
    print(f"{n_warn} warning(s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longitrack", description=__doc__.strip().splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--dataset", help="dataset root directory")
    common.add_argument("--output", help="output root directory")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--backend", help=f"one of {', '.join(BACKEND_NAMES)}")
    common.add_argument("--jobs", type=int, default=1, help="patients processed concurrently")
    common.add_argument("--margin", type=int, help="edge margin in voxels for prompt validation")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--cases", type=int, help="number of cases")
    sub.add_parser("split", parents=[common], help="write k-fold assignment")
    i = sub.add_parser("infer", parents=[common], help="predict every lesion")
    i.add_argument("--fold", default="all", help="fold index or 'all'")
    i.add_argument("--exclude-patient-on-edge", action="store_true",
                   help="drop the whole patient when any prompt sits on the scan edge")
    sub.add_parser("eval", parents=[common], help="compute metrics CSV")
    sub.add_parser("validate", parents=[common], help="report prompts on scan edges")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    d: Dict = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load config {args.config}: {exc}") from exc
    overrides = {
        "dataset_root": args.dataset,
        "output_root": args.output,
        "seed": args.seed,
        "backend": args.backend,
        "margin": args.margin,
        "cases": getattr(args, "cases", None),
    }
    d.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "exclude_patient_on_edge", False):
        d["exclude_patient_on_edge"] = True
    return RunConfig.from_dict(d)


def _setup_logging():
    level = os.environ.get("LONGITRACK_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen" and args.cases is not None and args.cases < 1:
        parser.error("--cases must be >= 1")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        cfg = resolve_config(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "split":
            return cmd_split(cfg)
        if args.command == "infer":
            return cmd_infer(cfg, args.fold, args.jobs)
        if args.command == "eval":
            return cmd_eval(cfg)
        return cmd_validate(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except LongitrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
