"""Shared helpers for the experiment scripts."""
import argparse
from pathlib import Path

from cca.harness import parse_config, report, run

ROOT = Path(__file__).resolve().parents[1]


def run_configs(names, description, out_root=None, seeds=None):
    """Parse, run and report a list of config files from ``configs/``."""
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--out", type=Path, default=out_root or ROOT / "runs",
                        help="root directory for run outputs")
    parser.add_argument("--seeds", type=str, default=seeds,
                        help="comma-separated seeds overriding the config")
    args = parser.parse_args()
    dirs = []
    for name in names:
        cfg = parse_config(ROOT / "configs" / name)
        cfg.output_dir = args.out / Path(cfg.output_dir).name
        if args.seeds:
            cfg.seeds = [int(s) for s in args.seeds.split(",")]
        print(f"running {name} -> {cfg.output_dir}")
        run(cfg)
        dirs.append(cfg.output_dir)
    report(dirs, svg=True)
    return dirs
