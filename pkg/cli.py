#!/usr/bin/env python3
"""Command-line entry point for the polycube and hex meshing pipeline.

Usage:
    # Synthesize training pairs and train the denoiser
    python cli.py gen-data --config run.json --out ./runs/desk
    python cli.py train --config run.json --out ./runs/desk

    # Regularize a mesh with trained weights (context: type id or 29-bit mask)
    python cli.py sample --input part.obj --weights ./runs/desk/weights.dpcw --context 0

    # Polycube, hex mesh at octree depth 3, quality report
    python cli.py polycube --input part.obj --out ./runs/part
    python cli.py hexmesh --input part.obj --depth 3 --out ./runs/part
    python cli.py quality --out ./runs/part

    # Every stage listed in the config document
    python cli.py pipeline --config run.json --deterministic

Exit codes: 0 success, 2 configuration error or missing input, 3 stage failure.
"""

import argparse
import sys

from dotenv import load_dotenv

from observability import get_logger, pin_thread_pools, sanitize_log_value

# Load environment variables
load_dotenv()

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for sampling and training")
    common.add_argument("--out", help="output directory")
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded numerics for bit-identical artifacts")
    common.add_argument("--input", help="input triangle surface (OBJ or STL)")

    parser = argparse.ArgumentParser(prog="polycube-hexgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="synthesize training pairs")
    sub.add_parser("train", parents=[common], help="train the denoiser")
    sample = sub.add_parser("sample", parents=[common], help="regularize a mesh with the reverse chain")
    sample.add_argument("--weights", help="denoiser weights file")
    sample.add_argument("--context", help="configuration type id (0-8) or a 29-character 0/1 mask")
    sub.add_parser("polycube", parents=[common], help="smooth, snap and validate a polycube")
    hexmesh = sub.add_parser("hexmesh", parents=[common], help="build the all-hex mesh")
    hexmesh.add_argument("--depth", type=int, help="octree subdivision depth")
    hexmesh.add_argument("--polycube", help="polycube JSON to use instead of this run's")
    sub.add_parser("quality", parents=[common], help="scaled Jacobian report")
    sub.add_parser("pipeline", parents=[common], help="run the stages listed in the config")
    return parser


def apply_overrides(data: dict, args: argparse.Namespace) -> dict:
    """Merge command-line flags over the config document."""
    data = dict(data)
    if args.command != "pipeline":
        data["stages"] = [args.command]
    flags = {
        "seed": "seed",
        "out": "output_dir",
        "input": "input_mesh",
        "weights": "weights",
        "context": "context",
        "depth": "octree_depth",
        "polycube": "polycube",
    }
    for flag, key in flags.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    if args.deterministic:
        data["deterministic"] = True
    return data


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    # Thread pools read these when numpy loads, so set them before importing it.
    if args.deterministic:
        pin_thread_pools()

    from config import ConfigError, PipelineConfig
    from pipeline import RunPaths, StageError, run_pipeline

    logger = get_logger()
    try:
        document = PipelineConfig.from_json(args.config).model_dump(mode="json") if args.config else {}
        config = PipelineConfig.from_dict(apply_overrides(document, args))
        manifest = run_pipeline(config)
    except ConfigError as e:
        print(f"Configuration error: {e}")
        logger.error(f"Configuration error: {sanitize_log_value(e)}")
        return EXIT_CONFIG
    except StageError as e:
        print(f"Error: {e}")
        for path in e.artifacts:
            print(f"  artifacts: {path}")
        return EXIT_STAGE

    print("=" * 50)
    print("SUMMARY")
    print("=" * 50)
    for record in manifest.stages:
        print(f"{record.name:<10} {record.status:<6} {record.seconds:8.2f}s  outputs: {len(record.outputs)}")
    print(f"Output directory: {config.output_dir}")

    if args.command == "quality":
        with open(RunPaths(config.output_dir).histogram, "r", encoding="utf-8") as f:
            print(f.read().rstrip())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
