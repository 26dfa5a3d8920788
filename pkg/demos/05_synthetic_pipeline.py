# End to end through the command line entry point, in a scratch directory
import csv
import json
import tempfile
from pathlib import Path

from longitrack.cli import main

root = Path(tempfile.mkdtemp())
data, run = root / "data", root / "run"

main(["gen", "--seed", "42", "--cases", "6", "--dataset", str(data)])
print(sorted(p.name for p in data.iterdir()))

main(["split", "--dataset", str(data), "--output", str(run)])
print(json.loads((run / "folds.json").read_text()))

main(["validate", "--dataset", str(data)])

# oracle backend copies the ground truth: a sanity ceiling for the plumbing
main(["infer", "--dataset", str(data), "--output", str(run / "oracle"), "--backend", "oracle"])
main(["eval", "--dataset", str(data), "--output", str(run / "oracle")])
print((run / "oracle" / "metrics.csv").read_text())

cfg = root / "rg.json"
cfg.write_text(json.dumps({"backend": "region_grow", "input_mode": "longitudinal_mask_point",
                           "ensemble": [0, 1, 2], "member_overrides": {"1": {"tau_hu": 30.0}}}))
main(["infer", "--config", str(cfg), "--dataset", str(data), "--output", str(run / "rg")])
main(["eval", "--dataset", str(data), "--output", str(run / "rg")])
for row in csv.DictReader((run / "rg" / "metrics.csv").open()):
    print(row)

manifest = json.loads((run / "rg" / "manifest.json").read_text())
print(len(manifest["files"]), "files hashed;", manifest["files"][0])
