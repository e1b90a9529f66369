"""Experiment configuration: an INI file validated against a fixed schema.

Every key has a type, a default and a check; unknown sections or keys are
rejected.  The resolved configuration is a plain nested dict (section ->
key -> typed value) so it can be stored in a manifest and loaded back.

Lists are comma separated (``branches = left, right``).  A ``multi`` mask
lists its parts in ``[mask] parts`` separated by ``|``, each part a kind
followed by ``key=value`` pairs, e.g.
``parts = pi_glyph fraction=0.005 center=0.3,0.5 | rectangle x0=0.7 y0=0.7 x1=0.8 y1=0.8``.
"""
from __future__ import annotations

import configparser
import json
import math
from pathlib import Path

from .domain import Grid, pi_glyph_spec
from .errors import SchemaError
from .kinetics import CANONICAL_BETA, CANONICAL_DELTA, CANONICAL_RHO, CANONICAL_SIGMA


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 <= x <= 1


class Key:
    def __init__(self, kind, default, check=None, doc="", choices=None, length=None, optional=False):
        self.kind = kind
        self.default = default
        self.check = check
        self.doc = doc
        self.choices = choices
        self.length = length
        self.optional = optional


SCHEMA = {
    "run": {
        "seed": Key("int", 0, _nonneg, "global seed (random masks, noise perturbations)"),
        "threads": Key("int", 0, _nonneg, "BLAS/FFT thread count, 0 = library default"),
    },
    "model": {
        "name": Key("str", "fitzhugh", choices=("fitzhugh",), doc="kinetics model"),
        "beta": Key("float", CANONICAL_BETA, lambda x: 0 < x < 1, "cubic root location, 0 < beta < 1"),
        "sigma": Key("float", CANONICAL_SIGMA, _positive, "g = sigma u - delta v - rho"),
        "delta": Key("float", CANONICAL_DELTA, _positive),
        "rho": Key("float", CANONICAL_RHO, _nonneg),
    },
    "grid": {
        "nx": Key("int", 64, lambda x: x >= 2),
        "ny": Key("int", 64, lambda x: x >= 1, "1 selects the 1-D stencil"),
        "lx": Key("float", 1.0, _positive),
        "ly": Key("float", 1.0, _positive),
    },
    "mask": {
        "kind": Key("str", "pi_glyph", choices=("full", "rectangle", "pi_glyph", "random", "multi")),
        "fraction": Key("float", 0.01, _unit, "pi_glyph: nominal area fraction; random: cell fraction"),
        "center": Key("floatlist", [0.5, 0.5], length=2, doc="pi_glyph centre in units of (lx, ly)"),
        "x0": Key("float", None, optional=True),
        "y0": Key("float", None, optional=True),
        "x1": Key("float", None, optional=True),
        "y1": Key("float", None, optional=True),
        "seed": Key("int", None, _nonneg, optional=True, doc="random mask seed (default: run.seed)"),
        "parts": Key("str", "", doc="multi: '|' separated part specs"),
    },
    "construct": {
        "base_state": Key("int", 1, lambda x: x >= 1, "constant state index, ascending in u"),
        "branches": Key("strlist", ["left", "right"], doc="branch name per mask label"),
        "gamma": Key("float", 50.0, _positive),
        "tol": Key("float", 1e-10, _positive),
        "max_iter": Key("int", 200, lambda x: x >= 1),
        "residual_tol": Key("float", None, _positive, optional=True),
    },
    "stability": {
        "kappa": Key("float", 0.01, _nonneg),
        "n_exponent": Key("float", None, lambda x: x >= 1, optional=True, doc="default: spatial dimension"),
        "deviation_threshold": Key("float", None, _nonneg, optional=True),
        "assume_large_gamma": Key("bool", False),
        "spectrum": Key("bool", True, doc="also compute the discrete linearised spectrum"),
        "n_report": Key("int", 10, lambda x: x >= 1),
        "dense_limit": Key("int", 5000, lambda x: x >= 1),
    },
    "simulate": {
        "initial": Key("str", "perturbed", choices=("perturbed", "recipe")),
        "amplitude": Key("float", 0.01, _nonneg),
        "mode": Key("str", "uniform", choices=("uniform", "noise", "eigenmode")),
        "eigenmode": Key("intlist", [1, 0], length=2),
        "recipe_state": Key("int", 2, lambda x: x >= 1, "constant state the recipe perturbs around"),
        "dt": Key("float", None, _positive, optional=True, doc="default: CFL limit"),
        "t_end": Key("float", 12.0, _positive),
        "snapshot_stride": Key("int", 20000, _nonneg),
        "norms_stride": Key("int", 1, lambda x: x >= 1),
        "window_start": Key("float", None, optional=True),
        "window_stop": Key("float", None, optional=True),
    },
    "nullclines": {
        "u_min": Key("float", -0.5),
        "u_max": Key("float", 1.5),
        "samples": Key("int", 801, lambda x: x >= 16),
    },
    "output": {
        "dir": Key("str", "out"),
    },
}


def _convert(path, key: Key, raw):
    if raw is None or (isinstance(raw, str) and raw.strip() == "" and key.kind != "str"):
        if key.optional:
            return None
        raise SchemaError(f"{path}: value required", path=path)
    try:
        if key.kind == "int":
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(raw)
            val = int(raw) if not isinstance(raw, str) else int(raw.strip())
        elif key.kind == "float":
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError(raw)
        elif key.kind == "bool":
            if isinstance(raw, bool):
                val = raw
            else:
                s = str(raw).strip().lower()
                if s not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                    raise ValueError(raw)
                val = s in ("true", "yes", "1", "on")
        elif key.kind == "str":
            val = str(raw).strip()
        elif key.kind in ("floatlist", "intlist", "strlist"):
            items = [s.strip() for s in raw.split(",")] if isinstance(raw, str) else list(raw)
            items = [s for s in items if s != ""]
            cast = {"floatlist": float, "intlist": int, "strlist": lambda s: str(s).strip()}[key.kind]
            val = [cast(s) for s in items]
            if key.length is not None and len(val) != key.length:
                raise ValueError(f"expected {key.length} items")
            if not val:
                raise ValueError("empty list")
        else:  # pragma: no cover
            raise AssertionError(key.kind)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: cannot read {raw!r} as {key.kind} ({exc})", path=path) from None
    if key.choices is not None and val not in key.choices:
        raise SchemaError(f"{path}: {val!r} not one of {', '.join(key.choices)}", path=path)
    if key.check is not None and val is not None and not key.check(val):
        raise SchemaError(f"{path}: value {val!r} out of range{' (' + key.doc + ')' if key.doc else ''}", path=path)
    return val


def resolve(raw: dict) -> dict:
    """Validate a ``{section: {key: value}}`` mapping and fill in defaults."""
    out = {}
    for sec in raw:
        if sec not in SCHEMA:
            raise SchemaError(f"unknown section [{sec}]", path=sec)
        for k in raw[sec]:
            if k not in SCHEMA[sec]:
                raise SchemaError(f"unknown key {sec}.{k}", path=f"{sec}.{k}")
    for sec, keys in SCHEMA.items():
        given = raw.get(sec, {})
        out[sec] = {}
        for k, key in keys.items():
            val = given[k] if k in given else key.default
            out[sec][k] = _convert(f"{sec}.{k}", key, val) if val is not None else None
            if val is None and not key.optional:
                raise SchemaError(f"{sec}.{k}: value required", path=f"{sec}.{k}")
    _cross_checks(out)
    return out


def _cross_checks(cfg):
    m = cfg["mask"]
    if m["kind"] == "rectangle" and any(m[k] is None for k in ("x0", "y0", "x1", "y1")):
        raise SchemaError("mask: rectangle needs x0, y0, x1, y1", path="mask")
    if m["kind"] == "multi":
        if not m["parts"]:
            raise SchemaError("mask.parts: multi mask needs at least one part", path="mask.parts")
        parse_parts(m["parts"])
    s = cfg["simulate"]
    if (s["window_start"] is None) != (s["window_stop"] is None):
        raise SchemaError("simulate: give both window_start and window_stop or neither", path="simulate.window_start")
    if s["window_start"] is not None and not s["window_start"] < s["window_stop"]:
        raise SchemaError("simulate: window_start must be below window_stop", path="simulate.window_start")
    if cfg["nullclines"]["u_min"] >= cfg["nullclines"]["u_max"]:
        raise SchemaError("nullclines: u_min must be below u_max", path="nullclines.u_min")


_PART_KEYS = {"fraction": "float", "center": "floatlist", "x0": "float", "y0": "float", "x1": "float",
              "y1": "float", "seed": "int"}


def parse_parts(text: str) -> list:
    parts = []
    for n, chunk in enumerate(p.strip() for p in text.split("|")):
        path = f"mask.parts[{n}]"
        tokens = chunk.split()
        if not tokens:
            raise SchemaError(f"{path}: empty part", path=path)
        kind = tokens[0]
        if kind not in ("rectangle", "pi_glyph", "random"):
            raise SchemaError(f"{path}: unsupported part kind {kind!r}", path=path)
        spec = {"kind": kind}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise SchemaError(f"{path}: expected key=value, got {tok!r}", path=path)
            k, v = tok.split("=", 1)
            if k not in _PART_KEYS:
                raise SchemaError(f"{path}: unknown key {k!r}", path=f"{path}.{k}")
            spec[k] = _convert(f"{path}.{k}", Key(_PART_KEYS[k], None, length=2 if k == "center" else None), v)
        parts.append(spec)
    return parts


def load_config(path) -> dict:
    """Read an INI file, or a manifest JSON written by a previous run."""
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"config file {p} not found", path=str(p))
    text = p.read_text()
    if p.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{p}: invalid JSON ({exc})", path=str(p)) from None
        if "config" not in data or not isinstance(data["config"], dict):
            raise SchemaError(f"{p}: manifest has no 'config' object", path="config")
        return resolve(data["config"])
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(p))
    except configparser.Error as exc:
        raise SchemaError(f"{p}: {exc}", path=str(p)) from None
    return resolve({s: dict(parser.items(s)) for s in parser.sections()})


def default_config() -> dict:
    return resolve({})


def mask_spec(cfg: dict, grid: Grid) -> dict:
    """Translate the ``[mask]`` section into a ``make_mask`` spec."""
    m = cfg["mask"]
    seed = m["seed"] if m["seed"] is not None else cfg["run"]["seed"]
    return _part_spec(dict(m, seed=seed), grid, seed)


def _part_spec(m, grid, seed):
    kind = m["kind"]
    if kind == "full":
        return {"kind": "full"}
    if kind == "rectangle":
        return {"kind": "rectangle", **{k: m[k] for k in ("x0", "y0", "x1", "y1")}}
    if kind == "pi_glyph":
        if all(m.get(k) is not None for k in ("x0", "y0", "x1", "y1")):
            return {"kind": "pi_glyph", **{k: m[k] for k in ("x0", "y0", "x1", "y1")}}
        return pi_glyph_spec(grid, m.get("fraction", 0.01), tuple(m.get("center", (0.5, 0.5))))
    if kind == "random":
        return {"kind": "random", "fraction": m.get("fraction", 0.0),
                "seed": m.get("seed") if m.get("seed") is not None else seed}
    if kind == "multi":
        return {"kind": "multi", "parts": [_part_spec(p, grid, seed) for p in parse_parts(m["parts"])]}
    raise SchemaError(f"mask.kind: unknown kind {kind!r}", path="mask.kind")


def schema_doc() -> str:
    """Human-readable schema listing (used by the README and ``--help``)."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, key in keys.items():
            extra = f" one of {', '.join(key.choices)}" if key.choices else ""
            lines.append(f"  {k} ({key.kind}, default {key.default!r}){extra}{': ' + key.doc if key.doc else ''}")
    return "\n".join(lines)
