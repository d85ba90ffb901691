"""The on-disk workflow: synth -> run -> eval, all through the CLI.

Drives the command-line interface the way a user would on a real captured
sequence: generate (or capture) a sequence directory, run the online pipeline
over it, then evaluate the emitted boxes against ground truth.

Run:  python3 demos/05_cli_workflow.py [work_dir]
"""

import os
import subprocess
import sys

work = sys.argv[1] if len(sys.argv) > 1 else "demo_out/cli"
os.makedirs(work, exist_ok=True)
cli = [sys.executable, "-m", "rgbdprop.cli"]


def run(*args):
    print("$ rgbdprop " + " ".join(args))
    subprocess.run(cli + list(args), check=True)


seq = os.path.join(work, "seq")
out = os.path.join(work, "run")

run(
    "synth", "--out", seq, "--objects", "4", "--frames", "30", "--seed", "1",
    "--depth-sigma", "0.002", "--missing-prob", "0.02",
)
run("run", "--manifest", os.path.join(seq, "manifest.json"), "--out", out, "--threads", "1")
run(
    "eval", "--mode", "3d",
    "--pred", os.path.join(out, "boxes.json"),
    "--gt", os.path.join(seq, "gt_boxes.json"),
    "--out", os.path.join(work, "eval3d"),
)
run(
    "eval", "--mode", "points",
    "--pred", os.path.join(out, "boxes.json"),
    "--gt-points", os.path.join(seq, "gt_points.csv"),
    "--out", os.path.join(work, "evalpts"),
)
run(
    "debug-heatmap", "--manifest", os.path.join(seq, "manifest.json"),
    "--frame", "5", "--out", os.path.join(work, "debug"),
)
print(f"\nartifacts under {work}/: boxes, clouds, timing log, reports, heatmap dumps")
