"""The command-line pipeline end to end.

Drives the installed subcommands programmatically: synthesize a small
dataset, generate ground-truth matches, register poses from the stored
descriptor fields, evaluate them, and score the training losses. Every
stage is seeded, so rerunning this script reproduces every file.
"""

import json
import tempfile
from pathlib import Path

from crosspose.cli import main


def run(argv):
    print(f"$ crosspose {' '.join(argv)}")
    rc = main(argv)
    assert rc == 0, f"exit code {rc}"


def main_demo():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        data = root / "data"

        run(["synth", "--out", str(data), "--pairs", "2", "--seed", "11",
             "--image-size", "64", "--model-points", "2500"])
        made = sorted(p.name for p in (data / "pairs" / "pair_0000").iterdir())
        print(f"  pair_0000 holds: {', '.join(made)}\n")

        run(["gen-matches", "--pairs", str(data / "pairs.json"),
             "--out-dir", str(root / "matches")])
        summary = json.loads((root / "matches" / "summary.json").read_text())
        print(f"  accepted {len(summary['accepted'])} pairs at "
              f"minimum {summary['min_matches']} matches\n")

        run(["register", "--pairs", str(data / "pairs.json"),
             "--out-dir", str(root / "poses")])
        first = json.loads((root / "poses" / "pair_0000.json").read_text())
        print(f"  pair_0000: {first['num_inliers']} inliers, "
              f"mean residual {first['mean_residual'] * 1000:.2f} mm\n")

        run(["eval", "--pairs", str(data / "pairs.json"),
             "--predictions", str(root / "poses"),
             "--out", str(root / "report.json")])
        agg = json.loads((root / "report.json").read_text())["aggregate"]
        print(f"  aggregate ar {agg['ar']:.4f} over {agg['count']} pairs\n")

        run(["losses", "--pairs", str(data / "pairs.json"),
             "--matches", str(root / "matches"),
             "--out", str(root / "losses.json")])
        lagg = json.loads((root / "losses.json").read_text())["aggregate"]
        print(f"  aggregate loss total {lagg['total']:.4f} "
              f"(positive {lagg['positive']:.4f}, "
              f"hardest-negative {lagg['hardest_negative']:.4f})")


if __name__ == "__main__":
    main_demo()
