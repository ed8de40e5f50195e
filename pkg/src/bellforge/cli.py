"""Command-line entry point: ``bellforge <subcommand> --config file``.

Exit codes: 0 ok, 2 invalid config, 3 size cap exceeded, 4 bound or
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import runner
from .errors import BoundViolationError, CapExceededError, ConfigError, NotEnumerableError

EXIT_OK, EXIT_SCHEMA, EXIT_CAP, EXIT_VIOLATION = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellforge", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=runner.SUBCOMMANDS + ("validate",))
    parser.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", type=Path, help="write the report here instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), help="report format (default json, csv for sweep)")
    return parser


def dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return dump_json(report)
    rows = report.get("rows") or report.get("results")
    if rows is None:
        raise ConfigError(f"{report['subcommand']} has no tabular output; use --format json")
    return runner.rows_to_csv([{k: v for k, v in r.items() if not isinstance(v, (dict, list))} for r in rows])


def load_config(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config)
        if args.seed is not None and isinstance(doc, dict):
            doc["seed"] = args.seed
        errors = runner.validate(doc, None if args.subcommand == "validate" else args.subcommand)
        if args.subcommand == "validate":
            emit(dump_json({"ok": not errors, "errors": errors}), args.out)
            return EXIT_SCHEMA if errors else EXIT_OK
        if errors:
            raise ConfigError(errors)
        cfg = runner.ExperimentConfig.from_dict(doc)
        report = runner.run(cfg, args.subcommand)
        default_fmt = "csv" if args.subcommand == "sweep" else "json"
        fmt = args.format or cfg.output.get("format", default_fmt)
        out = args.out or (Path(cfg.output["path"]) if cfg.output.get("path") else None)
        emit(render(report, fmt), out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (CapExceededError, NotEnumerableError) as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except BoundViolationError as exc:
        print(f"bound violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
