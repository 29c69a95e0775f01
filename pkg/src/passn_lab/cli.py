"""Command-line interface: run recipes, list them, sweep bounds.

Exit codes: 0 on success, 2 for configuration problems (bad JSON, unknown
recipe, bad parameters), 3 for runtime failures (divergence, infinite
loss).
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bounds import bounds_sweep_rows
from .errors import DomainError, InfiniteLossError, TrainingDiverged
from .recipes import list_recipes, run_recipe
from .reporting import write_report, write_summary, write_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passn-lab",
        description="Desk-scale pass@N coverage experiments.",
    )
    parser.add_argument("--version", action="version", version=f"passn-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a recipe described by a JSON config")
    run.add_argument("config", help="path to the JSON config")
    run.add_argument("--out", default=None, help="output directory (default: config's dir)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")

    sub.add_parser("list-recipes", help="print the recipe registry")

    bounds_cmd = sub.add_parser("bounds", help="emit a bound sweep as CSV")
    bounds_cmd.add_argument("--p1", type=float, required=True)
    bounds_cmd.add_argument("--p2", type=float, required=True)
    bounds_cmd.add_argument("--eps", type=float, required=True)
    bounds_cmd.add_argument("--k", type=int, required=True)
    bounds_cmd.add_argument("--n-max", type=int, required=True)
    bounds_cmd.add_argument("--out", default=None, help="CSV file (default: stdout)")
    return parser


def _cmd_run(args) -> int:
    config_path = Path(args.config)
    try:
        config = json.loads(config_path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    name = config.get("recipe")
    seed = args.seed if args.seed is not None else config.get("seed")
    if not isinstance(name, str) or seed is None:
        print("config error: config needs a 'recipe' name and a 'seed'", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else config_path.parent
    try:
        result, merged = run_recipe(name, config.get("params", {}), int(seed))
    except DomainError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, InfiniteLossError) as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"{name}.csv"
    summary_path = out_dir / f"{name}_summary.json"
    files = [report_path.name, summary_path.name]
    write_report(report_path, result.rows)
    for filename, (header, rows) in sorted(result.tables.items()):
        write_table(out_dir / filename, header, rows)
        files.append(filename)
    summary = {
        "recipe": name,
        "seed": int(seed),
        "params": {k: _jsonable(v) for k, v in merged.items()},
        "metrics": {k: _jsonable(v) for k, v in result.metrics.items()},
        "files": sorted(files),
    }
    write_summary(summary_path, summary)
    print(f"wrote {report_path} and {summary_path}")
    return EXIT_OK


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (bool, int, float, str)) or value is None:
        return value
    if hasattr(value, "item"):
        return value.item()
    return str(value)


def _cmd_list(_args) -> int:
    for name, description in list_recipes():
        print(f"{name}: {description}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    try:
        rows = bounds_sweep_rows(
            args.p1, args.p2, args.eps, args.k, range(2, args.n_max + 1)
        )
    except DomainError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    lines = ["n,upper,lower_closed,lower_integer_s"]
    lines += [f"{n},{u!r},{lc!r},{ls!r}" for n, u, lc, ls in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "list-recipes":
        return _cmd_list(args)
    return _cmd_bounds(args)


if __name__ == "__main__":
    sys.exit(main())
