"""Job configuration: TOML (or JSON) documents checked against a strict schema.

Every default is written back into the resolved document, so a resolved
config fully describes the job that produced an artifact.
"""
from __future__ import annotations

import copy
import difflib
import json
import math
from dataclasses import dataclass

import numpy as np
import tomli

from ..errors import ConfigSchemaError, ConfigSyntaxError, PhysicalParameterError
from ..models import Mode, ModelSpec, ScaledFamily, Spin

COMMANDS = ("spectrum", "displace", "bogoliubov", "sweep", "lambda-scan", "crossing", "splitting")
FAMILY_COMMANDS = ("lambda-scan", "crossing")

_NUM = (int, float)

SCHEMA = {
    "command": str,
    "model": {
        "modes": list,
        "spins": list,
        "coupling": _NUM,
        "mode_couplings": list,
        "mode_spin_couplings": list,
        "spin_couplings": list,
    },
    "family": {
        "name": str,
        "control": _NUM,
        "N": _NUM,
        "omega1": _NUM,
        "omega2": _NUM,
        "epsilon1": _NUM,
        "epsilon2": _NUM,
        "omega": _NUM,
        "g": _NUM,
        "omega_q": _NUM,
    },
    "numerics": {
        "cutoff": int,
        "ladder_levels": int,
        "k_lowest": int,
        "frame": str,
        "tol_degeneracy_abs": (str, int, float),
        "tol_degeneracy_rel": _NUM,
        "truncation_tol": _NUM,
        "newton_tol": _NUM,
        "seed_policy": str,
        "ed_max_N": _NUM,
        "ed_cutoff": int,
        "bisect_tol": _NUM,
    },
    "sweep": {
        "g_grid": (list, dict),
        "N_list": list,
        "lambda_grid": (list, dict),
        "chi_grid": (list, dict),
    },
    "output": {
        "directory": str,
        "formats": list,
        "precision": int,
    },
}
MODE_KEYS = ("omega", "epsilon")
SPIN_KEYS = ("omega_q",)
GRID_KEYS = ("start", "stop", "num")
SEED_POLICIES = ("asymptotic+halton", "asymptotic", "origin")
FRAMES = ("lab", "displaced", "mirror", "auto_displaced")


@dataclass(frozen=True)
class JobSpec:
    command: str
    config: dict  # fully defaulted document

    @property
    def numerics(self) -> dict:
        return self.config["numerics"]

    @property
    def output(self) -> dict:
        return self.config["output"]

    def model(self) -> ModelSpec:
        return model_from_config(self.config["model"], "model")

    def family(self) -> ScaledFamily:
        return family_from_config(self.config["family"])


def _hint(key: str, allowed) -> str:
    close = difflib.get_close_matches(key, list(allowed), n=1, cutoff=0.6)
    return f'; did you mean "{close[0]}"?' if close else f"; allowed keys: {', '.join(allowed)}"


def _check_keys(doc: dict, allowed, path: str):
    for key in doc:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigSchemaError(f'unknown key "{where}"{_hint(key, allowed)}')


def _check_type(value, expected, path: str):
    if isinstance(value, bool) and expected is not bool:
        raise ConfigSchemaError(f"{path}: expected {_type_name(expected)}, got a boolean")
    if not isinstance(value, expected):
        raise ConfigSchemaError(f"{path}: expected {_type_name(expected)}, got {type(value).__name__}")


def _type_name(expected) -> str:
    if isinstance(expected, tuple):
        return " or ".join(t.__name__ for t in expected)
    return expected.__name__


def _validate(doc: dict):
    _check_keys(doc, SCHEMA, "")
    for section, spec in SCHEMA.items():
        if section not in doc:
            continue
        value = doc[section]
        if isinstance(spec, dict):
            if not isinstance(value, dict):
                raise ConfigSchemaError(f"{section}: expected a table")
            _check_keys(value, spec, section)
            for key, typ in spec.items():
                if key in value:
                    _check_type(value[key], typ, f"{section}.{key}")
        else:
            _check_type(value, spec, section)


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse TOML, or JSON when the document starts with '{'."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigSyntaxError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigSyntaxError(f"{source}: {exc}") from exc


def _pairs(entries, path: str, width: int = 3) -> dict:
    out = {}
    for n, entry in enumerate(entries):
        if not (isinstance(entry, list) and len(entry) == width):
            raise ConfigSchemaError(f"{path}[{n}]: expected [i, j, value]")
        i, j, value = entry
        if not (isinstance(i, int) and isinstance(j, int)) or isinstance(i, bool) or isinstance(j, bool):
            raise ConfigSchemaError(f"{path}[{n}]: site indices must be integers")
        if isinstance(value, bool) or not isinstance(value, _NUM):
            raise ConfigSchemaError(f"{path}[{n}]: coupling must be a number")
        out[(i, j)] = float(value)
    return out


def model_from_config(model: dict, path: str = "model") -> ModelSpec:
    modes, spins = [], []
    for n, m in enumerate(model.get("modes", [])):
        if not isinstance(m, dict):
            raise ConfigSchemaError(f"{path}.modes[{n}]: expected a table with omega and epsilon")
        _check_keys(m, MODE_KEYS, f"{path}.modes[{n}]")
        if "omega" not in m:
            raise ConfigSchemaError(f"{path}.modes[{n}].omega is required")
        for key in m:
            _check_type(m[key], _NUM, f"{path}.modes[{n}].{key}")
        omega, eps = float(m["omega"]), float(m.get("epsilon", 0.0))
        if not (math.isfinite(omega) and omega > 0):
            raise PhysicalParameterError(f"{path}.modes[{n}].omega must be > 0, got {omega}")
        if not (math.isfinite(eps) and eps >= 0):
            raise PhysicalParameterError(f"{path}.modes[{n}].epsilon must be >= 0, got {eps}")
        modes.append(Mode(omega, eps))
    for n, s in enumerate(model.get("spins", [])):
        if not isinstance(s, dict):
            raise ConfigSchemaError(f"{path}.spins[{n}]: expected a table with omega_q")
        _check_keys(s, SPIN_KEYS, f"{path}.spins[{n}]")
        if "omega_q" not in s:
            raise ConfigSchemaError(f"{path}.spins[{n}].omega_q is required")
        _check_type(s["omega_q"], _NUM, f"{path}.spins[{n}].omega_q")
        spins.append(Spin(float(s["omega_q"])))
    mm = _pairs(model.get("mode_couplings", []), f"{path}.mode_couplings")
    ms = _pairs(model.get("mode_spin_couplings", []), f"{path}.mode_spin_couplings")
    ss = _pairs(model.get("spin_couplings", []), f"{path}.spin_couplings")
    if "coupling" in model:
        g = float(model["coupling"])
        if modes:
            for i in range(len(modes)):
                for j in range(i + 1, len(modes)):
                    mm.setdefault((i, j), g)
        else:
            for k in range(len(spins)):
                for l in range(k + 1, len(spins)):
                    ss.setdefault((k, l), g)
    if not modes and not spins:
        raise ConfigSchemaError(f"{path}: at least one mode or spin is required")
    try:
        return ModelSpec(tuple(modes), tuple(spins), mm, ms, ss)
    except PhysicalParameterError:
        raise
    except ValueError as exc:
        raise ConfigSchemaError(f"{path}: {exc}") from exc


def family_from_config(fam: dict) -> ScaledFamily:
    if "name" not in fam:
        raise ConfigSchemaError("family.name is required")
    if "control" not in fam:
        raise ConfigSchemaError("family.control is required")
    kwargs = {k: v for k, v in fam.items() if k != "name"}
    for key in ("omega1", "omega2", "omega"):
        if key in kwargs and not kwargs[key] > 0:
            raise PhysicalParameterError(f"family.{key} must be > 0, got {kwargs[key]}")
    for key in ("epsilon1", "epsilon2"):
        if key in kwargs and kwargs[key] < 0:
            raise PhysicalParameterError(f"family.{key} must be >= 0, got {kwargs[key]}")
    try:
        return ScaledFamily(fam["name"], **{k: float(v) for k, v in kwargs.items()})
    except PhysicalParameterError as exc:
        raise PhysicalParameterError(f"family: {exc}") from exc
    except ValueError as exc:
        raise ConfigSchemaError(f"family: {exc}") from exc


def _grid(value, path: str) -> list[float]:
    if isinstance(value, dict):
        _check_keys(value, GRID_KEYS, path)
        missing = [k for k in GRID_KEYS if k not in value]
        if missing:
            raise ConfigSchemaError(f"{path}: missing {', '.join(missing)}")
        num = value["num"]
        if not isinstance(num, int) or isinstance(num, bool) or num < 1:
            raise ConfigSchemaError(f"{path}.num must be a positive integer")
        return [float(x) for x in np.linspace(float(value["start"]), float(value["stop"]), num)]
    out = []
    for n, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, _NUM):
            raise ConfigSchemaError(f"{path}[{n}]: expected a number")
        out.append(float(x))
    if not out:
        raise ConfigSchemaError(f"{path}: grid is empty")
    return out


def _numerics_defaults(command: str) -> dict:
    return {
        "cutoff": 16,
        "ladder_levels": 2 if command == "spectrum" else 3,
        "k_lowest": 4,
        "frame": "auto_displaced" if command == "splitting" else "lab",
        "tol_degeneracy_abs": "auto",
        "tol_degeneracy_rel": 1e-10,
        "truncation_tol": 1e-6,
        "newton_tol": 1e-10,
        "seed_policy": "asymptotic+halton",
        "ed_max_N": 0.0,
        "ed_cutoff": 30,
        "bisect_tol": 1e-6,
    }


def resolve(doc: dict, command: str | None = None) -> JobSpec:
    """Validate a parsed document and fill in every default."""
    if not isinstance(doc, dict):
        raise ConfigSchemaError("config must be a table at the top level")
    _validate(doc)
    doc = copy.deepcopy(doc)
    cmd = command or doc.get("command")
    if cmd is None:
        raise ConfigSchemaError("no command given (subcommand or top-level 'command')")
    if cmd not in COMMANDS:
        raise ConfigSchemaError(f'unknown command "{cmd}"{_hint(cmd, COMMANDS)}')
    if command and doc.get("command", command) != command:
        raise ConfigSchemaError(f"config command {doc['command']!r} conflicts with subcommand {command!r}")

    out = {"command": cmd}
    if cmd in FAMILY_COMMANDS:
        if "family" not in doc:
            raise ConfigSchemaError(f"command {cmd} needs a [family] table")
        fam = family_from_config(doc["family"])
        if cmd == "crossing" and fam.family != "two_atom_dicke":
            raise ConfigSchemaError("crossing needs family.name = \"two_atom_dicke\"")
        if cmd == "lambda-scan" and fam.family == "two_atom_dicke":
            raise ConfigSchemaError("lambda-scan needs a dicke_type or rabi_type family")
        d = fam.to_dict()
        d["name"] = d.pop("family")
        if d["omega_q"] is None:
            d["omega_q"] = fam.spin_splitting
        out["family"] = {"name": d.pop("name"), **d}
    else:
        if "model" not in doc:
            raise ConfigSchemaError(f"command {cmd} needs a [model] table")
        spec = model_from_config(doc["model"])
        out["model"] = _model_doc(spec)

    numerics = _numerics_defaults(cmd)
    numerics.update(doc.get("numerics", {}))
    _check_numerics(numerics)
    out["numerics"] = numerics

    sweep = {}
    given = doc.get("sweep", {})
    needs = {
        "sweep": ("g_grid",),
        "splitting": ("g_grid",),
        "lambda-scan": ("N_list", "lambda_grid"),
        "crossing": ("chi_grid",),
    }.get(cmd, ())
    for key in needs:
        if key not in given:
            raise ConfigSchemaError(f"command {cmd} needs sweep.{key}")
        sweep[key] = _grid(given[key], f"sweep.{key}")
    extra = [k for k in given if k not in needs]
    if extra:
        raise ConfigSchemaError(f"sweep.{extra[0]} is not used by command {cmd}")
    if sweep:
        out["sweep"] = sweep

    output = {"directory": "out", "formats": ["csv"], "precision": 12}
    output.update(doc.get("output", {}))
    fmts = output["formats"]
    if not fmts or any(f not in ("csv", "json") for f in fmts):
        raise ConfigSchemaError("output.formats must be a non-empty subset of [\"csv\", \"json\"]")
    output["formats"] = sorted(set(fmts))
    if not 6 <= output["precision"] <= 17:
        raise ConfigSchemaError(f"output.precision must lie in [6, 17], got {output['precision']}")
    out["output"] = output
    return JobSpec(cmd, out)


def _model_doc(spec: ModelSpec) -> dict:
    d = spec.to_dict()
    return {
        "modes": d["modes"],
        "spins": d["spins"],
        "mode_couplings": d["mode_mode"],
        "mode_spin_couplings": d["mode_spin"],
        "spin_couplings": d["spin_spin"],
    }


def _check_numerics(n: dict):
    for key in ("cutoff", "ladder_levels", "k_lowest", "ed_cutoff"):
        if n[key] < 1:
            raise ConfigSchemaError(f"numerics.{key} must be >= 1")
    if n["cutoff"] < 2:
        raise ConfigSchemaError("numerics.cutoff must be >= 2")
    if n["frame"] not in FRAMES:
        raise ConfigSchemaError(f'numerics.frame "{n["frame"]}"{_hint(n["frame"], FRAMES)}')
    if n["seed_policy"] not in SEED_POLICIES:
        raise ConfigSchemaError(f'numerics.seed_policy "{n["seed_policy"]}"{_hint(n["seed_policy"], SEED_POLICIES)}')
    tol = n["tol_degeneracy_abs"]
    if isinstance(tol, str):
        if tol != "auto":
            raise ConfigSchemaError('numerics.tol_degeneracy_abs must be a positive number or "auto"')
    elif not tol > 0:
        raise ConfigSchemaError("numerics.tol_degeneracy_abs must be positive")
    for key in ("tol_degeneracy_rel", "truncation_tol", "newton_tol", "bisect_tol"):
        if not n[key] > 0:
            raise ConfigSchemaError(f"numerics.{key} must be positive")


def load(path: str, command: str | None = None, stdin=None) -> JobSpec:
    if path == "-":
        import sys

        text = (stdin or sys.stdin).read()
        source = "<stdin>"
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigSyntaxError(f"cannot read config {path}: {exc}") from exc
        source = path
    return resolve(parse_text(text, source), command)
