"""Command-line entry points for the identification pipeline.

Subcommands mirror the pipeline stages so each intermediate product
can be produced or refreshed in isolation; ``run`` chains the full
protocol.  Exit codes: 0 success, 2 validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bench3dof import BenchConfig, write_records
from .pipeline import ConfigError, PipelineConfig, PipelineRun, run_pipeline

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _add_config_arg(p):
    p.add_argument("--config", required=True, help="pipeline config JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavemodal",
        description="wavelet-based modal identification pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-bench", help="generate benchmark records")
    p.add_argument("--drive", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--fs", type=float, default=50.0)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--out", required=True, help="output CSV path")

    for name, help_text in [
        ("cwt", "transform ingested records"),
        ("suggest-regions", "propose harmonic regions"),
        ("decompose", "reconstruct per-region components"),
        ("identify", "estimate modal parameters per drive"),
        ("fuse", "fuse drive-point estimates"),
        ("frf", "measured and reconstructed FRFs"),
        ("rom", "build the reduced-order model"),
        ("validate", "reconstruction and ROM checks"),
        ("run", "full pipeline"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_config_arg(p)

    p = sub.add_parser("serve", help="HTTP JSON API over a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--port", type=int, default=8709)
    p.add_argument("--host", default="127.0.0.1")
    return parser


_STAGE_CHAINS = {
    "cwt": ["ingest", "cwt"],
    "suggest-regions": ["ingest", "cwt", "regions"],
    "decompose": ["ingest", "cwt", "regions", "decompose"],
    "identify": ["ingest", "cwt", "regions", "decompose", "identify"],
    "fuse": ["ingest", "cwt", "regions", "decompose", "identify",
             "measured_frf", "fuse"],
    "frf": ["ingest", "cwt", "regions", "decompose", "identify",
            "measured_frf", "fuse", "reconstruct"],
    "rom": ["ingest", "cwt", "regions", "decompose", "identify",
            "measured_frf", "fuse", "reconstruct", "rom"],
    "validate": ["ingest", "cwt", "regions", "decompose", "identify",
                 "measured_frf", "fuse", "reconstruct", "rom", "validate"],
}

_STAGE_METHODS = {
    "ingest": "stage_ingest",
    "cwt": "stage_cwt",
    "regions": "stage_regions",
    "decompose": "stage_decompose",
    "identify": "stage_identify",
    "measured_frf": "stage_measured_frf",
    "fuse": "stage_fuse",
    "reconstruct": "stage_reconstruct",
    "rom": "stage_rom",
    "validate": "stage_validate",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _dispatch(args) -> int:
    if args.command == "simulate-bench":
        cfg = BenchConfig(drive_dof=args.drive, fs=args.fs,
                          duration=args.duration)
        path = write_records(cfg, args.out)
        print(path)
        return 0

    if args.command == "serve":
        from .service import serve_api
        serve_api(args.run_dir, port=args.port, host=args.host)
        return 0

    config = PipelineConfig.load(args.config)
    if args.command == "run":
        manifest = run_pipeline(config)
        print(json.dumps({"run_dir": config.output_dir,
                          "config_hash": manifest.config_hash}))
        return 0

    run = PipelineRun(config)
    for stage in _STAGE_CHAINS[args.command]:
        getattr(run, _STAGE_METHODS[stage])()
    run.manifest.save(run.path("manifest.json"))
    print(json.dumps({"run_dir": config.output_dir,
                      "stages": list(run.manifest.stages)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
