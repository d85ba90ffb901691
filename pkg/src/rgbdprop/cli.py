"""Command-line entry point.

Subcommands: ``run`` (full online pipeline over a sequence), ``eval``
(compare boxes against ground truth), ``synth`` (generate a synthetic
sequence), ``debug-heatmap`` (per-frame heatmap dumps).

Exit codes: 0 success, 1 fatal error, 2 invalid configuration.

Heavy imports happen after argument parsing so that ``--threads`` can pin the
BLAS thread pools before numpy initializes them.
"""

from __future__ import annotations

import argparse
import os
import sys

_CONFIG_FIELD_TYPES = {
    "eps_delta": float, "eps_min": float, "eps_max": float,
    "depth_percentile_clamp": None, "depth_percentile_low": float,
    "depth_percentile_high": float, "eps_p": float,
    "ransac_iterations": int, "top_k_planes": int, "keyframe_interval": int,
    "ransac_window": int, "ransac_score_stride": int,
    "plane_distinct_angle_deg": float, "plane_distinct_offset": float,
    "plane_group_angle_deg": float, "plane_group_offset": float,
    "eps_i": float, "eps_z": float, "tau": float, "eps_rank": float,
    "dbscan_eps": float, "dbscan_min_pts": int, "min_box_volume": float,
    "downsample": int, "seed": int, "nms_overlap": float,
}


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {raw!r}")


def _add_config_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("pipeline configuration overrides")
    for name, typ in _CONFIG_FIELD_TYPES.items():
        flag = "--" + name.replace("_", "-")
        if typ is None:
            group.add_argument(flag, type=_parse_bool, default=None, metavar="BOOL")
        else:
            group.add_argument(flag, type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgbdprop",
        description="Online 3D object proposals from RGB-D sequences.",
    )
    threads = argparse.ArgumentParser(add_help=False)
    threads.add_argument(
        "--threads",
        type=int,
        default=0,
        help="pin BLAS/OpenMP thread pools (0 = library default)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser(
        "run", help="run the online pipeline over a sequence", parents=[threads]
    )
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--config", help="key = value config file")
    p_run.add_argument("--save-state", help="checkpoint file updated after the run")
    p_run.add_argument("--resume", help="resume from a checkpoint file")
    p_run.add_argument("--max-frames", type=int, default=0)
    _add_config_flags(p_run)

    p_eval = sub.add_parser(
        "eval", help="evaluate boxes against ground truth", parents=[threads]
    )
    p_eval.add_argument("--mode", choices=("2d", "3d", "points"), required=True)
    p_eval.add_argument("--pred", required=True, help="predicted boxes JSON")
    p_eval.add_argument("--gt", help="ground-truth boxes JSON (3d mode)")
    p_eval.add_argument("--gt-points", help="labeled cloud CSV (points mode)")
    p_eval.add_argument("--gt-boxes2d-dir", help="per-frame GT 2D box dir (2d mode)")
    p_eval.add_argument("--manifest", help="sequence manifest (2d mode)")
    p_eval.add_argument("--state", help="pipeline state npz (2d mode)")
    p_eval.add_argument("--out", required=True, help="report output directory")

    p_synth = sub.add_parser(
        "synth", help="generate a synthetic RGB-D sequence", parents=[threads]
    )
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--preset", choices=("tabletop", "pan"), default="tabletop")
    p_synth.add_argument("--objects", type=int, default=4)
    p_synth.add_argument("--frames", type=int, default=60)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--width", type=int, default=320)
    p_synth.add_argument("--height", type=int, default=240)
    p_synth.add_argument("--depth-sigma", type=float, default=0.0)
    p_synth.add_argument("--missing-prob", type=float, default=0.0)
    p_synth.add_argument("--proposals", type=int, default=200)

    p_dbg = sub.add_parser(
        "debug-heatmap", help="dump per-frame heatmap images", parents=[threads]
    )
    p_dbg.add_argument("--manifest", required=True)
    p_dbg.add_argument("--frame", type=int, required=True)
    p_dbg.add_argument("--out", required=True)
    p_dbg.add_argument("--config")
    _add_config_flags(p_dbg)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads and args.threads > 0:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ[var] = str(args.threads)
    from . import _commands
    from .config import ConfigError
    from .dataio import FormatError, SequenceError

    try:
        return _commands.dispatch(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (SequenceError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
