#!/usr/bin/env python3
"""Regenerate the pinned CLI fixtures from the shipped configs.

Each command runs with its shipped config and seed into
tests/fixtures/<name>/; the acceptance suite compares later runs byte for
byte.  Regenerate only when an intentional change invalidates the pinned
outputs, and commit the result.
"""

import shutil
import subprocess
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent

RUNS = [
    ("check-weights", "check_weights_internal.ini", "check_weights_internal"),
    ("check-weights", "check_weights_boundary.ini", "check_weights_boundary"),
    ("forward", "forward.ini", "forward"),
    ("carleman", "carleman_internal.ini", "carleman_internal"),
    ("carleman", "carleman_boundary.ini", "carleman_boundary"),
    ("ip1", "ip1.ini", "ip1"),
    ("ip2", "ip2.ini", "ip2"),
    ("reconstruct", "reconstruct.ini", "reconstruct"),
]


def main() -> int:
    fixtures = REPO / "tests" / "fixtures"
    for command, config, name in RUNS:
        out = fixtures / name
        if out.exists():
            shutil.rmtree(out)
        result = subprocess.run(
            [sys.executable, "-m", "carleman_lab.cli", command,
             "--config", str(REPO / "configs" / config), "--out", str(out)],
            capture_output=True, text=True)
        if result.returncode != 0:
            print(f"{command} ({config}) failed:\n{result.stderr}", file=sys.stderr)
            return 1
        files = sorted(p.name for p in out.iterdir())
        print(f"{name}: {', '.join(files)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
