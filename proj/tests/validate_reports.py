#!/usr/bin/env python3
"""Run eval, ablate and bench through the CLI and validate each report."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def run(cli, *args):
    proc = subprocess.run([cli, *args], capture_output=True, text=True, check=False)
    if proc.returncode != 0:
        sys.exit(f"{' '.join(args[:1])} failed: {proc.stderr}")
    return json.loads(proc.stdout)


def main():
    cli, schema_path = sys.argv[1], sys.argv[2]
    schema = json.loads(Path(schema_path).read_text())
    validator = jsonschema.Draft202012Validator(schema)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "id.csv").write_text("score\n3\n4\n5\n1\n")
        (tmp / "ood.csv").write_text("score\n0\n2\n4\n")
        data = tmp / "data"
        subprocess.run([cli, "gen-data", "--samples", "300", "--ood-samples", "60", "--input-dim", "8",
                        "--labels", "4", "--out-dir", str(data)], capture_output=True, check=True)
        reports = {
            "eval": run(cli, "eval", "--id-scores", str(tmp / "id.csv"), "--ood-scores", str(tmp / "ood.csv"),
                        "--aupr-out"),
            "ablate": run(cli, "ablate", "--data-dir", str(data), "--hidden-dim", "8", "--blocks", "2",
                          "--epochs", "2", "--layers", "0,1"),
            "bench": run(cli, "bench", "--epochs", "2"),
        }

    failed = False
    for name, report in reports.items():
        errors = sorted(validator.iter_errors(report), key=lambda e: list(e.path))
        for e in errors:
            print(f"{name}: {'/'.join(map(str, e.path))}: {e.message}")
        failed |= bool(errors)
        print(f"{name}: {'invalid' if errors else 'valid'}")

    broken = dict(reports["eval"], schema_version=2)
    if validator.is_valid(broken):
        print("schema accepted a report with the wrong version")
        failed = True
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
