"""Command-line entry point.

    cpathtest run --project path/to/project [--config cfg.json] [--mock-script script.json]
    cpathtest paths|opmap|synth|validate|merge ...   (stop after that stage)
    cpathtest report [--format text|json]

Exit status: 0 on success, 1 on a fatal stage error, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import STAGES, PipelineConfig, load_config
from .errors import ConfigError, PipelineError
from .pipeline import RunReport, report_summary, run_pipeline

COMMANDS = {"run": None, "paths": "paths", "opmap": "opmap", "synth": "synth", "validate": "validate",
            "merge": "coverage"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpathtest", description="Path-driven unit test generation for C projects.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (supports ${ENV} interpolation)")
    common.add_argument("--project", help="project root directory")
    common.add_argument("--artifacts", help="artifacts directory (default: ./artifacts)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=f"{'full pipeline' if name == 'run' else f'stages up to {name}'}")
        p.add_argument("--from", dest="from_stage", choices=STAGES, help="resume from this stage using cached artifacts")
        p.add_argument("--mock-script", help="answer LLM requests from a JSON script instead of the network")
        p.add_argument("--max-paths", type=int)
        p.add_argument("--loop-bound", type=int)
        p.add_argument("--theta", type=float)
        p.add_argument("--no-cache", action="store_true", help="ignore cached LLM and validation artifacts")
        p.add_argument("--format", choices=("text", "json"), default="text")
    p = sub.add_parser("report", parents=[common], help="render the last run report")
    p.add_argument("--format", choices=("text", "json"), default="text")
    return parser


def _config(args) -> PipelineConfig:
    overrides = {
        "project_root": args.project,
        "artifacts_dir": args.artifacts,
    }
    if args.command != "report":
        overrides.update({
            "from_stage": args.from_stage,
            "to_stage": COMMANDS[args.command],
            "max_paths": args.max_paths,
            "loop_bound": args.loop_bound,
            "theta": args.theta,
            "use_cache": False if args.no_cache else None,
        })
    return load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _config(args)
        if not Path(config.project_root).is_dir():
            raise ConfigError(f"project root {config.project_root} is not a directory")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "report":
        path = config.out_dir / "run_report.json"
        if not path.exists():
            print(f"no report at {path}", file=sys.stderr)
            return 1
        report = RunReport.from_json(json.loads(path.read_text()))
        print(report_summary(report, args.format), end="")
        return 0

    try:
        report = run_pipeline(config, mock_script=args.mock_script)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(report_summary(report, args.format), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
