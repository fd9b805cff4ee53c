"""Batch experiment runner.

    thermalqm run --config exp.toml [--seed N] [--out PREFIX] [--threads N]
    thermalqm validate --config exp.toml
    thermalqm list-kinds

A config is a TOML file with top-level ``kind``, ``seed``, ``output`` and a
``[parameters]`` table.  Exit status: 0 success, 2 invalid config,
3 failure while running.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .experiments import KINDS
from .io import Table, sha256, write_json

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
TOP_LEVEL = ("kind", "seed", "output", "parameters")

log = logging.getLogger("thermalqm")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    parameters: dict
    seed: int
    output: str


def parse_config(path) -> tuple[dict | None, list[str]]:
    """Read a TOML file; parse errors carry line and column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return None, [f"{path}: cannot read config: {exc.strerror or exc}"]
    try:
        return tomllib.loads(text), []
    except tomllib.TOMLDecodeError as exc:
        return None, [f"{path}: parse error: {exc}"]


def validate_config(raw: dict, seed_override: int | None = None,
                    out_override: str | None = None) -> tuple[ExperimentConfig | None, list[str]]:
    """Field-level validation; returns the resolved config (defaults filled in) or diagnostics."""
    errors = [f"{key}: unknown key" for key in raw if key not in TOP_LEVEL]
    kind = raw.get("kind")
    if kind is None:
        errors.append("kind: missing; expected one of " + ", ".join(KINDS))
        return None, errors
    if kind not in KINDS:
        errors.append(f"kind: unknown experiment kind {kind!r}; expected one of " + ", ".join(KINDS))
        return None, errors
    seed = raw.get("seed", 0) if seed_override is None else seed_override
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        errors.append(f"seed: expected an integer in [0, 2^64); got {seed!r}")
    output = raw.get("output", kind) if out_override is None else out_override
    if not isinstance(output, str) or not output:
        errors.append("output: expected a non-empty path prefix")
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        errors.append("parameters: expected a table")
        params = {}
    kind_def = KINDS[kind]
    resolved = {}
    for key, value in params.items():
        if key not in kind_def.params:
            errors.append(f"parameters.{key}: unknown parameter for kind {kind!r}")
            continue
        resolved[key], errs = kind_def.params[key].check(key, value)
        errors += errs
    for key, p in kind_def.params.items():
        resolved.setdefault(key, p.default)
    if not errors and kind_def.extra_checks is not None:
        errors += kind_def.extra_checks(resolved)
    if errors:
        return None, errors
    return ExperimentConfig(kind, resolved, seed, output), []


def run(config: ExperimentConfig, workers: int = 1) -> dict:
    """Execute ``config``, write its outputs and manifest, and return the manifest."""
    start = time.perf_counter()
    outputs = KINDS[config.kind].run(dict(config.parameters), config.seed, workers)
    prefix = Path(config.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for name, doc in outputs.items():
        if isinstance(doc, Table):
            written += doc.write(prefix.with_name(f"{prefix.name}.{name}.csv"))
        else:
            written.append(write_json(prefix.with_name(f"{prefix.name}.{name}.json"), doc))
    manifest = {
        "config": {"kind": config.kind, "seed": config.seed, "output": config.output,
                   "parameters": config.parameters},
        "version": __version__,
        "duration_s": time.perf_counter() - start,
        "seeds": {"base": config.seed, "stochastic": KINDS[config.kind].stochastic,
                  "streams": "item i (test, trajectory, run or pair) uses stream i of the base seed"},
        "threads": workers,
        "outputs": [{"file": p.name, "sha256": sha256(p)} for p in written],
    }
    write_json(prefix.with_name(prefix.name + ".manifest.json"), manifest)
    return manifest


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermalqm", description="Run declarative quantum-mechanics experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="validate and execute an experiment config")
    r.add_argument("--config", required=True, metavar="PATH")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--out", metavar="PREFIX", help="override the output path prefix")
    r.add_argument("--threads", type=int, default=1, help="worker processes for trajectory ensembles")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True, metavar="PATH")
    v.add_argument("--seed", type=int)
    v.add_argument("--out", metavar="PREFIX")
    k = sub.add_parser("list-kinds", help="list experiment kinds and their parameters")
    k.add_argument("--verbose", "-v", action="store_true", help="show parameters and defaults")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-kinds":
        for name, kind in KINDS.items():
            print(f"{name:16s} {kind.description}")
            if args.verbose:
                for pname, p in kind.params.items():
                    print(f"    {pname:20s} {p.type:11s} default={p.default!r}")
        return EXIT_OK
    raw, errors = parse_config(args.config)
    config = None
    if raw is not None:
        config, errors = validate_config(raw, args.seed, args.out)
    if args.command == "run" and args.threads < 1:
        errors.append("--threads: must be >= 1")
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        return EXIT_OK
    try:
        manifest = run(config, args.threads)
    except Exception as exc:  # runtime failures get experiment context and a distinct exit code
        print(f"error: {config.kind} experiment failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for entry in manifest["outputs"]:
        print(entry["file"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
