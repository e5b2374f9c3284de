"""Scenario files: strict INI sections with typed keys, defaults, and a lossless renderer.

Lists separate items with ';' and the components of one item with ','::

    [model]
    kind = coherent
    a = 1.0

    [run]
    mode = trajectory
    initial = 0.0, 0.0; 0.0, 0.25; 0.0, -0.25
    t_end = 25.132741228718345
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

MODEL_KINDS = ("free", "coherent", "harmonic", "step", "central")
RUN_MODES = ("trajectory", "dbb", "ensemble", "classify", "sweep", "check", "radial")
MODELLESS_MODES = ("classify", "sweep", "radial")


class _Key:
    def __init__(self, default=None):
        self.default = default

    def parse(self, text):
        raise NotImplementedError

    def render(self, value):
        return str(value)


class Real(_Key):
    def __init__(self, default=None, allow_inf=False):
        super().__init__(default)
        self.allow_inf = allow_inf

    def parse(self, text):
        value = float(text)
        if math.isnan(value) or (math.isinf(value) and not self.allow_inf):
            raise ValueError(f"{text!r} is not a finite number")
        return value

    def render(self, value):
        return repr(float(value))


class Integer(_Key):
    def parse(self, text):
        return int(text)


class Flag(_Key):
    _TRUE = {"true", "yes", "on", "1"}
    _FALSE = {"false", "no", "off", "0"}

    def parse(self, text):
        low = text.strip().lower()
        if low in self._TRUE:
            return True
        if low in self._FALSE:
            return False
        raise ValueError(f"{text!r} is not a boolean")

    def render(self, value):
        return "true" if value else "false"


class Choice(_Key):
    def __init__(self, options, default=None):
        super().__init__(default)
        self.options = options

    def parse(self, text):
        text = text.strip()
        if text not in self.options:
            raise ValueError(f"{text!r} not one of {', '.join(self.options)}")
        return text


class Text(_Key):
    def parse(self, text):
        return text.strip()


class Reals(_Key):
    def parse(self, text):
        return tuple(Real().parse(item) for item in _items(text))

    def render(self, value):
        return "; ".join(repr(float(v)) for v in value)


class Complexes(_Key):
    def parse(self, text):
        out = []
        for item in _items(text):
            z = complex(item.replace(" ", ""))
            if not (math.isfinite(z.real) and math.isfinite(z.imag)):
                raise ValueError(f"{item!r} is not finite")
            out.append(z)
        return tuple(out)

    def render(self, value):
        return "; ".join(repr(complex(v)) for v in value)


class Rows(_Key):
    """';'-separated rows of ','-separated reals."""

    def parse(self, text):
        return tuple(tuple(Real().parse(c) for c in item.split(",")) for item in _items(text))

    def render(self, value):
        return "; ".join(", ".join(repr(float(c)) for c in row) for row in value)


def _items(text):
    items = [item.strip() for item in text.split(";")]
    if any(not item for item in items):
        raise ValueError("empty list item")
    return items


SCHEMA = {
    "model": {
        "kind": Choice(MODEL_KINDS),
        "a": Real(1.0),
        "n": Integer(0),
        "E": Real(0.25),
        "V": Real(1.0),
        "l": Integer(1),
        "coefficients": Complexes(None),
        "radial_n": Integer(None),
        "a0": Real(1.0),
        "hbar": Real(1.0),
        "m0": Real(1.0),
    },
    "potential": {
        "kind": Choice(("auto", "free", "step", "harmonic", "coulomb"), "auto"),
        "height": Real(None),
        "strength": Real(None),
    },
    "run": {
        "mode": Choice(RUN_MODES),
        "t0": Real(0.0),
        "t_end": Real(10.0),
        "rtol": Real(1e-9),
        "atol": Real(1e-9),
        "max_step": Real(math.inf, allow_inf=True),
        "n_samples": Integer(201),
        "sample_times": Reals(None),
        "escape_radius": Real(None, allow_inf=True),
        "scaled_escape": Flag(None),
        "stop_on_escape": Flag(True),
        "node_tol": Real(1e-12),
        "center_radius": Real(1e-3),
        "max_steps": Integer(2_000_000),
        "backend": Choice(("auto", "numba", "numpy"), "auto"),
        "initial": Rows(None),
        "dbb_velocity": Flag(False),
        "n": Integer(1000),
        "velocity_law": Choice(("dbb", "gaussian"), "dbb"),
        "v0": Reals((0.0,)),
        "sigma_tilde": Real(0.0),
        "seed": Integer(0),
        "points": Rows(None),
        "etilde_range": Reals((-1.0, 1.0)),
        "c_range": Reals((-1.0, 1.0)),
        "grid": Integer(21),
        "r0": Real(1.0),
        "m0": Real(1.0),
        "cases": Rows(None),
    },
    "output": {
        "directory": Text("."),
        "stem": Text("run"),
    },
}

MODEL_KEYS = {
    "free": (),
    "coherent": ("a",),
    "harmonic": ("n",),
    "step": ("E", "V"),
    "central": ("l", "coefficients", "radial_n", "a0", "hbar", "m0"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    model: dict = field(default_factory=dict)
    potential: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def section(self, name):
        return getattr(self, name)


def _line_index(text):
    """(section, key) -> 1-based line number, for error messages."""
    index = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = lineno
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip()), lineno)
    return index


def parse_config(text):
    """Parse and validate scenario text; raises ParseError or ValidationError."""
    cp = configparser.ConfigParser(strict=True, interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#",), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.section}.{exc.option}", line=exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any section", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line=lineno) from None
    lines = _line_index(text)

    values = {}
    for name in cp.sections():
        if name not in SCHEMA:
            raise ParseError(f"unknown section [{name}]", line=lines.get((name, None)))
        schema = SCHEMA[name]
        sec = {}
        for key, raw in cp.items(name):
            line = lines.get((name, key))
            if key not in schema:
                raise ParseError(f"unknown key {name}.{key}", line=line)
            try:
                sec[key] = schema[key].parse(raw)
            except ValueError as exc:
                raise ParseError(f"bad value for {name}.{key}: {exc}", line=line) from None
        values[name] = sec

    if "run" not in values or "mode" not in values["run"]:
        raise ValidationError("run.mode is required")
    mode = values["run"]["mode"]
    model = values.get("model", {})
    if mode not in MODELLESS_MODES:
        if "kind" not in model:
            raise ValidationError("model.kind is required for mode " + mode)
    if model:
        kind = model.get("kind")
        if kind is None:
            raise ValidationError("model.kind is required")
        for key in model:
            if key != "kind" and key not in MODEL_KEYS[kind]:
                raise ParseError(f"unknown key model.{key} for kind {kind}", line=lines.get(("model", key)))
        model = _fill(model, {k: SCHEMA["model"][k] for k in ("kind", *MODEL_KEYS[kind])})
    cfg = ScenarioConfig(
        model=model,
        potential=_fill(values.get("potential", {}), SCHEMA["potential"]),
        run=_fill(values["run"], SCHEMA["run"]),
        output=_fill(values.get("output", {}), SCHEMA["output"]),
    )
    validate(cfg)
    return cfg


def _fill(given, schema):
    return {key: given.get(key, spec.default) for key, spec in schema.items()}


def validate(cfg):
    """Semantic checks shared by parsing and programmatic construction."""
    m, r = cfg.model, cfg.run
    if m:
        kind = m["kind"]
        if kind == "step" and not (0 < m["E"] < m["V"]):
            raise ValidationError(f"step eigenstate needs 0 < E < V (E < V required); got E={m['E']}, V={m['V']}")
        if kind == "harmonic" and m["n"] < 0:
            raise ValidationError("model.n must be non-negative")
        if kind == "central":
            if m["l"] < 0:
                raise ValidationError("model.l must be non-negative")
            if m["coefficients"] is not None and len(m["coefficients"]) != 2 * m["l"] + 1:
                raise ValidationError(f"model.coefficients needs {2 * m['l'] + 1} entries for l={m['l']}")
            if m["hbar"] <= 0 or m["m0"] <= 0 or m["a0"] <= 0:
                raise ValidationError("model.hbar, model.m0 and model.a0 must be positive")
    if r["t_end"] < r["t0"]:
        raise ValidationError("run.t_end must not precede run.t0")
    if r["rtol"] <= 0 or r["atol"] <= 0:
        raise ValidationError("run.rtol and run.atol must be positive")
    if r["n_samples"] < 1 or r["n"] < 1 or r["grid"] < 1:
        raise ValidationError("run.n_samples, run.n and run.grid must be positive")
    if r["sigma_tilde"] < 0:
        raise ValidationError("run.sigma_tilde must be non-negative")
    if not 0 <= r["seed"] < 2 ** 64:
        raise ValidationError("run.seed must fit in 64 unsigned bits")
    if r["sample_times"] is not None and any(b <= a for a, b in zip(r["sample_times"], r["sample_times"][1:])):
        raise ValidationError("run.sample_times must be strictly increasing")
    mode = r["mode"]
    if mode in ("trajectory", "dbb") and not r["initial"]:
        raise ValidationError(f"mode {mode} needs run.initial")
    if mode == "classify" and not r["points"]:
        raise ValidationError("mode classify needs run.points")
    if mode == "radial" and not r["cases"]:
        raise ValidationError("mode radial needs run.cases")
    for name in ("etilde_range", "c_range"):
        if len(r[name]) != 2 or r[name][0] > r[name][1]:
            raise ValidationError(f"run.{name} needs two ascending values")
    for row in r["points"] or ():
        if len(row) != 2:
            raise ValidationError("run.points rows are 'Etilde, C'")
    for row in r["cases"] or ():
        if len(row) != 2:
            raise ValidationError("run.cases rows are 'rdot0, C'")


def render(cfg):
    """Text that parses back to an equal config; keys at their default are still written."""
    out = []
    for name in ("model", "potential", "run", "output"):
        sec = cfg.section(name)
        if not sec:
            continue
        out.append(f"[{name}]")
        for key, value in sec.items():
            if value is None:
                continue
            out.append(f"{key} = {SCHEMA[name][key].render(value)}")
        out.append("")
    return "\n".join(out)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
