"""Command line entry point.

Usage::

    palmshift run <config-path> [--format json|csv] [--out PATH]
                                [--threads N] [--seed S]

The config is a flat key-value document, one ``key = value`` per line,
``#`` starting a comment line; ``<config-path>`` may be a directory, in
which case every regular file inside it (sorted by name) is run as one
experiment.  Exit code 0 means every verdict was consistent or passing,
1 means at least one inconsistency or failure, 2 a usage error.
``PALMSHIFT_THREADS`` supplies the parallelism degree when ``--threads``
is absent; results are independent of it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import ConfigError, ExperimentSpec, emit, run


def parse_config_text(text: str) -> ExperimentSpec:
    params: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in params:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        params[key] = value
    kind = params.pop("experiment", None)
    if kind is None:
        raise ConfigError("config must set 'experiment = <kind>'")
    return ExperimentSpec.from_dict(kind, params)


def _collect_specs(path: Path) -> list[ExperimentSpec]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file())
        if not files:
            raise ConfigError(f"directory {path} contains no config files")
        return [parse_config_text(p.read_text()) for p in files]
    if not path.is_file():
        raise ConfigError(f"config path {path} does not exist")
    return [parse_config_text(path.read_text())]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="palmshift", description="point-shift experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one experiment config or a directory of them")
    runp.add_argument("config_path", type=Path)
    runp.add_argument("--format", choices=("json", "csv"), default="json")
    runp.add_argument("--out", type=Path, default=None)
    runp.add_argument("--threads", type=int, default=None)
    runp.add_argument("--seed", type=int, default=None)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        specs = _collect_specs(args.config_path)
        reports = [run(spec, seed=args.seed, threads=args.threads) for spec in specs]
    except ConfigError as exc:
        print(f"palmshift: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"palmshift: {exc}", file=sys.stderr)
        return 2

    payload = emit(reports, args.format)
    if args.out is not None:
        args.out.write_bytes(payload)
    else:
        sys.stdout.buffer.write(payload)
    for report in reports:
        print(
            f"palmshift: {report.kind} seed={report.seed} took {report.duration_s:.2f}s",
            file=sys.stderr,
        )
    return 0 if all(r.all_ok for r in reports) else 1


if __name__ == "__main__":
    raise SystemExit(main())
