"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 numerical non-convergence,
4 instability where a stable point was required, 5 dimension cap.
"""
from __future__ import annotations

import argparse
import os
import sys

from ..errors import ConfigError, USCError
from . import config as cfg
from .jobs import RUNNERS
from .output import write_artifacts

EXIT_OK = 0
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="job config (TOML or JSON); '-' reads stdin")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    common.add_argument("--format", choices=("csv", "json", "both"), help="artifact format")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads for independent grid points")
    common.add_argument("--precision", type=int, metavar="D", help="decimal digits in CSV output (6..17)")
    common.add_argument("--tol-degeneracy", type=float, metavar="X", help="absolute degeneracy tolerance")
    common.add_argument("--cutoff", type=int, metavar="C", help="per-mode Fock cutoff (ladder start)")
    parser = argparse.ArgumentParser(prog="uscspectra", description="Spectra of ultrastrongly coupled boson models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in cfg.COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run a {name} job")
    return parser


def _apply_overrides(doc: dict, args) -> dict:
    if args.out is not None:
        doc.setdefault("output", {})["directory"] = args.out
    if args.format is not None:
        doc.setdefault("output", {})["formats"] = ["csv", "json"] if args.format == "both" else [args.format]
    if args.precision is not None:
        doc.setdefault("output", {})["precision"] = args.precision
    if args.tol_degeneracy is not None:
        doc.setdefault("numerics", {})["tol_degeneracy_abs"] = args.tol_degeneracy
    if args.cutoff is not None:
        doc.setdefault("numerics", {})["cutoff"] = args.cutoff
    return doc


def _read(path: str) -> tuple[str, str]:
    if path == "-":
        return sys.stdin.read(), "<stdin>"
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read(), path
    except OSError as exc:
        raise cfg.ConfigSyntaxError(f"cannot read config {path}: {exc}") from exc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text, source = _read(args.config)
        doc = cfg.parse_text(text, source)
        if isinstance(doc, dict) and isinstance(doc.get("config"), dict) and "command" not in doc:
            # a JSON artifact: re-run from the config embedded in it
            doc = doc["config"]
        if isinstance(doc, dict) and "command" in doc and isinstance(doc.get("files"), list):
            doc = doc["config"]
        if isinstance(doc, dict):
            doc = _apply_overrides(doc, args)
        job = cfg.resolve(doc, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    try:
        table, lines = RUNNERS[job.command](job, workers=max(1, args.threads))
    except USCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    directory = job.output["directory"]
    manifest = write_artifacts(directory, job.command.replace("-", "_"), table, job.config)
    for line in lines:
        print(line)
    for f in manifest["files"]:
        print(f"wrote {os.path.join(directory, f['name'])}")
    print(f"wrote {os.path.join(directory, 'manifest.json')}")
    return EXIT_OK
