"""PV penetration sweep on the bundled feeder.

Re-solves the stochastic pre-event program for each penetration level and
reports how the objective, served energy, and outage duration move as the
PV fleet grows.

Usage: python scripts/pv_penetration_experiment.py [OUT_DIR]
"""

import sys
from pathlib import Path

from gridprep.cli import main as cli
from gridprep.data import config13_path, feeder13_path, fragility13_path, wind13_path


def main(out_root: Path):
    out_root.mkdir(parents=True, exist_ok=True)
    net, wind = str(feeder13_path()), str(wind13_path())
    frag, cfg = str(fragility13_path()), str(config13_path())
    code = cli(["generate-scenarios", "--network", net, "--wind", wind,
                "--fragility", frag, "--count", "4", "--seed", "11",
                "--out", str(out_root / "train")])
    if code != 0:
        raise SystemExit(code)
    code = cli(["sweep-pv", "--network", net, "--config", cfg,
                "--scenarios", str(out_root / "train" / "scenarios.json"),
                "--levels", "0,9,27,45,63,81,99", "--out", str(out_root)])
    if code != 0:
        raise SystemExit(code)
    print((out_root / "pv_sweep.csv").read_text())


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/pv_sweep"))
