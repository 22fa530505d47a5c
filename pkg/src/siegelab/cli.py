"""Command line entry point: ``siegelab <subcommand> [--config PATH] [--rho ...] [--depth N] [--out DIR]``.

Every subcommand except ``render`` runs a fixed set of pipelines and writes
``<out>/manifest.json``; the exit status is 0 exactly when every assertion of
every pipeline passed. Set SIEGELAB_THREADS to cap worker and BLAS threads.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import experiments as ex

SUBCOMMANDS = {
    "cf": ["cf_lemmas"],
    "circle": ["verify_circle"],
    "blaschke": ["blaschke"],
    "rays": ["rays"],
    "puzzle": ["puzzle_nesting", "puzzle_moduli", "fiber_shrinkage", "trapping"],
    "modulus": ["modulus_calibration"],
    "verify": None,  # whatever the config lists
}

DEPTH_HELP = {
    "cf": "prefix length of the random continued fractions",
    "circle": "deepest renormalization level n for K_n",
    "blaschke": "unused",
    "rays": "potential halvings per ray",
    "puzzle": "number of puzzle scales above n0",
    "modulus": "log2 of the finest grid resolution",
    "verify": "puzzle scales (as for 'puzzle')",
}


def apply_depth(config: ex.ExperimentConfig, command: str, depth: int) -> None:
    sec = config.sections
    if command == "cf":
        sec["cf"]["length"] = depth
    elif command == "circle":
        sec["circle"]["n_max"] = depth
    elif command == "rays":
        sec["rays"]["depth"] = depth
    elif command == "modulus":
        sec["modulus"]["resolutions"] = [2 ** (depth - 2), 2 ** (depth - 1), 2**depth]
    elif command in ("puzzle", "verify"):
        sec["puzzle"]["scales"] = depth


def load_config(args) -> ex.ExperimentConfig:
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    else:
        data = {"rho": ex.parse_rho("golden:30")}
    if args.rho:
        data["rho"] = ex.parse_rho(args.rho)
    if args.out:
        data["out"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    config = ex.ExperimentConfig.from_json(data)
    if args.depth is not None:
        if args.depth < 0:
            raise ex.ConfigError("--depth must be nonnegative")
        apply_depth(config, args.command, args.depth)
        config.validate()
    return config


def list_experiments() -> str:
    width = max(map(len, ex.PIPELINES))
    return "\n".join(f"{name:<{width}}  {ex.DESCRIPTIONS[name]}" for name in ex.PIPELINES)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siegelab", description=__doc__.splitlines()[0])
    parser.add_argument("--list-experiments", action="store_true", help="list pipeline names and exit")
    sub = parser.add_subparsers(dest="command")
    for name in list(SUBCOMMANDS) + ["render"]:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="experiment config JSON")
        p.add_argument("--rho", help="'golden:30', 'silver:20' or comma-separated partial quotients")
        p.add_argument("--depth", type=int, help=DEPTH_HELP.get(name, "basin iterations"))
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--list-experiments", action="store_true")
        if name == "verify":
            p.add_argument("--only", nargs="+", metavar="NAME", help="run only these pipelines")
        if name == "render":
            p.add_argument("--scene", metavar="PATH", help="scene JSON with rays, equipotentials, regions")
            p.add_argument("--center", type=complex, default=0j)
            p.add_argument("--width", type=float, default=3.0, help="half width of the view")
            p.add_argument("--size", type=int, default=512)
    return parser


def _summary(manifest: dict) -> str:
    lines = []
    for name, exp in manifest["experiments"].items():
        status = "PASS" if exp["passed"] else "FAIL"
        failed = [k for k, v in exp["assertions"].items() if not v]
        extra = f" failed: {', '.join(failed)}" if failed else ""
        if exp["error"]:
            extra = " error: " + exp["error"].splitlines()[0]
        lines.append(f"{status} {name} ({exp['seconds']:.1f}s){extra}")
    return "\n".join(lines)


def run_render(args, config: ex.ExperimentConfig) -> int:
    from .render import load_scene, render, save_png

    t = time.perf_counter()
    ctx = ex.RunContext(config)
    F = ctx.member()
    scene = load_scene(args.scene) if args.scene else None
    img = render(F, args.center, args.width, args.size, scene, iterations=args.depth or 200)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_png(img, out / "render.png")
    manifest = {"config_hash": config.digest(), "seed": config.seed, "versions": ex.versions(),
                "experiments": {"render": {"passed": True, "assertions": {}, "error": None,
                                           "metrics": {"size": args.size, "center": args.center,
                                                       "half_width": args.width, "scene": args.scene},
                                           "seconds": time.perf_counter() - t}},
                "passed": True, "wall_seconds": time.perf_counter() - t}
    ex.write_json(out / "manifest.json", manifest)
    print(f"wrote {out / 'render.png'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_experiments:
        print(list_experiments())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        config = load_config(args)
    except (ex.ConfigError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "render":
        return run_render(args, config)
    names = SUBCOMMANDS[args.command]
    if args.command == "verify" and args.only:
        unknown = set(args.only) - set(ex.PIPELINES)
        if unknown:
            print(f"unknown experiments: {sorted(unknown)}", file=sys.stderr)
            return 2
        names = args.only
    manifest = ex.run(config, names)
    print(_summary(manifest))
    print(f"manifest: {Path(config.out) / 'manifest.json'}")
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
