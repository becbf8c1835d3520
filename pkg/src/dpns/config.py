"""Run configuration: an INI file read with :mod:`configparser`.

Every section and key is optional; omitted entries take the defaults in
:data:`DEFAULTS`. Unknown sections or keys, malformed numbers and invalid
expressions are rejected with a ``file:line [section] key`` location.

Example::

    [mesh]
    level = 3
    levels = 4

    [params]
    nu = 0.1

    [source]
    case = expr
    f_s = sin(pi*x), 0
    f_d = 1
"""

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .assembly import PhysicalParams, SourceSpec
from .auxiliary import AuxiliaryConfig
from .exprs import ExpressionError, parse

SOURCE_CASES = ("zero", "trig", "poly", "expr")
METHODS = ("picard", "newton")
PATTERNS = ("right", "crossed")
VARIANTS = ("kappa", "xi")

# (type, default) per key; type is a converter name understood by _convert
DEFAULTS = {
    "mesh": {"level": ("int", 2), "levels": ("int", 4), "pattern": ("choice:pattern", "right")},
    "params": {k: ("float", getattr(PhysicalParams(), k))
               for k in ("rho", "nu", "mu", "k_m", "k_f", "sigma", "alpha")},
    "auxiliary": {"c_kappa": ("float", 1.0), "c_xi": ("float", 1.0),
                  "variant": ("choice:variant", "kappa"), "samples": ("int", 10)},
    "source": {"case": ("choice:case", "zero"), "homogeneous": ("bool", False),
               "scale_s": ("float", 1.0), "scale_d": ("float", 1.0),
               "f_s": ("expr2", None), "f_d": ("expr1", None), "f_m": ("expr1", None),
               "u_dir": ("expr2", None), "phi_m_dir": ("expr1", None),
               "phi_f_dir": ("expr1", None),
               "exact_u": ("expr2", None), "exact_p": ("expr1", None),
               "exact_phi_m": ("expr1", None), "exact_phi_f": ("expr1", None)},
    "solver": {"method": ("choice:method", "picard"), "tol": ("float", 1e-10),
               "max_iter": ("int", 50)},
    "output": {"dir": ("str", "out")},
    "run": {"seed": ("int", 0), "serial": ("bool", False), "n_starts": ("int", 5),
            "samples": ("int", 100), "forcings": ("int", 20), "workers": ("int", 0)},
}

_CHOICES = {"pattern": PATTERNS, "variant": VARIANTS, "case": SOURCE_CASES, "method": METHODS}
_EXACT_KEYS = ("exact_u", "exact_p", "exact_phi_m", "exact_phi_f")


class ConfigError(ValueError):
    """Configuration problem tagged with its location."""

    def __init__(self, message, path=None, line=None, section=None, key=None):
        self.path, self.line, self.section, self.key = path, line, section, key
        loc = str(path) if path else "<config>"
        if line:
            loc += f":{line}"
        if section:
            loc += f" [{section}]"
        if key:
            loc += f" {key}"
        super().__init__(f"{loc}: {message}")


@dataclass
class RunConfig:
    level: int = 2
    levels: int = 4
    pattern: str = "right"
    params: PhysicalParams = field(default_factory=PhysicalParams)
    auxiliary: AuxiliaryConfig = field(default_factory=AuxiliaryConfig)
    aux_variant: str = "kappa"
    aux_samples: int = 10
    case: str = "zero"
    homogeneous: bool = False
    scale_s: float = 1.0
    scale_d: float = 1.0
    expressions: dict = field(default_factory=dict)
    method: str = "picard"
    tol: float = 1e-10
    max_iter: int = 50
    out: Path = Path("out")
    seed: int = 0
    serial: bool = False
    n_starts: int = 5
    samples: int = 100
    forcings: int = 20
    workers: int = 0

    def exact(self):
        """Manufactured solution for ``case`` (None for zero data or plain expressions)."""
        from .verify.manufactured import X, Y, ExactSolution, case

        if self.case in ("trig", "poly"):
            return case(self.case, self.params)
        if self.case == "expr" and "exact_u" in self.expressions:
            e = self.expressions
            return ExactSolution("expr", e["exact_u"].symbolic(X, Y),
                                 e["exact_p"].symbolic(X, Y), e["exact_phi_m"].symbolic(X, Y),
                                 e["exact_phi_f"].symbolic(X, Y), self.params)
        return None

    def sources(self):
        """Source and boundary data, scaled and optionally made homogeneous."""
        ex = self.exact()
        if ex is not None:
            src = ex.sources()
        elif self.case == "expr":
            e = self.expressions
            src = SourceSpec(**{k: e.get(k) for k in ("f_s", "f_d", "f_m", "u_dir",
                                                       "phi_m_dir", "phi_f_dir")})
        else:
            src = SourceSpec()
        if self.homogeneous:
            src = SourceSpec(src.f_s, src.f_d, src.f_m)
        if self.scale_s != 1.0 or self.scale_d != 1.0:
            src = src.scaled(self.scale_s, self.scale_d)
        return src


def _locate(text):
    """Map (section, key) to 1-based line numbers, and sections to header lines."""
    where, sec = {}, None
    header = re.compile(r"^\s*\[([^\]]+)\]")
    entry = re.compile(r"^([^\s=:#;][^=:]*?)\s*[=:]")
    for no, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            sec = m.group(1).strip()
            where.setdefault((sec, None), no)
            continue
        m = entry.match(line)
        if m and sec is not None:
            where.setdefault((sec, m.group(1).strip().lower()), no)
    return where


def _convert(kind, raw, err):
    raw = raw.strip()
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise err(f"expected an integer, got {raw!r}") from None
    if kind == "float":
        try:
            v = float(raw)
        except ValueError:
            raise err(f"expected a number, got {raw!r}") from None
        if not math.isfinite(v):
            raise err(f"expected a finite number, got {raw!r}")
        return v
    if kind == "bool":
        low = raw.lower()
        if low in configparser.ConfigParser.BOOLEAN_STATES:
            return configparser.ConfigParser.BOOLEAN_STATES[low]
        raise err(f"expected a boolean, got {raw!r}")
    if kind.startswith("choice:"):
        options = _CHOICES[kind.split(":", 1)[1]]
        if raw not in options:
            raise err(f"expected one of {', '.join(options)}, got {raw!r}")
        return raw
    if kind.startswith("expr"):
        try:
            return parse(raw, int(kind[-1]))
        except ExpressionError as exc:
            raise err(str(exc)) from None
    return raw


def parse_config(text, path=None):
    """Build a :class:`RunConfig` from INI ``text``; raise :class:`ConfigError` on any problem."""
    where = _locate(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        msg = str(exc).splitlines()[0]
        msg = re.sub(r"^While reading from .*?\[line\s*\d+\]: ", "", msg)
        raise ConfigError(msg, path, getattr(exc, "lineno", None)) from None

    values = {}
    for sec in cp.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section (expected one of {', '.join(DEFAULTS)})", path,
                              where.get((sec, None)), sec)
        for key, raw in cp.items(sec):
            def err(msg, sec=sec, key=key):
                return ConfigError(msg, path, where.get((sec, key)), sec, key)
            if key not in DEFAULTS[sec]:
                raise err("unknown key")
            values[(sec, key)] = _convert(DEFAULTS[sec][key][0], raw, err)

    def get(sec, key):
        return values.get((sec, key), DEFAULTS[sec][key][1])

    def fail(msg, sec, key=None):
        return ConfigError(msg, path, where.get((sec, key)) or where.get((sec, None)), sec, key)

    try:
        params = PhysicalParams(**{k: get("params", k) for k in DEFAULTS["params"]})
    except ValueError as exc:
        name = str(exc).split()[0]
        raise fail(str(exc), "params", name) from None
    try:
        aux = AuxiliaryConfig(get("auxiliary", "c_kappa"), get("auxiliary", "c_xi"))
    except ValueError as exc:
        raise fail(str(exc), "auxiliary") from None

    for sec, key, lo in (("mesh", "level", 1), ("mesh", "levels", 2), ("solver", "max_iter", 0),
                         ("run", "n_starts", 2), ("run", "samples", 100),
                         ("run", "forcings", 1), ("run", "workers", 0),
                         ("auxiliary", "samples", 1)):
        if get(sec, key) < lo:
            raise fail(f"must be at least {lo}, got {get(sec, key)}", sec, key)
    if not get("solver", "tol") > 0:
        raise fail("must be positive", "solver", "tol")

    exprs = {k: values[("source", k)] for (s, k) in values
             if s == "source" and DEFAULTS["source"][k][0].startswith("expr")}
    case = get("source", "case")
    if exprs and case != "expr":
        raise fail(f"expression keys require case = expr (case is {case!r})", "source",
                   sorted(exprs)[0])
    given = [k for k in _EXACT_KEYS if k in exprs]
    if given and len(given) != len(_EXACT_KEYS):
        missing = sorted(set(_EXACT_KEYS) - set(given))
        raise fail(f"exact fields must be given together; missing {', '.join(missing)}",
                   "source", given[0])
    if given and any(k in exprs for k in ("f_s", "f_d", "f_m", "u_dir", "phi_m_dir",
                                          "phi_f_dir")):
        raise fail("give either exact fields or explicit sources, not both", "source")

    return RunConfig(
        level=get("mesh", "level"), levels=get("mesh", "levels"),
        pattern=get("mesh", "pattern"), params=params, auxiliary=aux,
        aux_variant=get("auxiliary", "variant"), aux_samples=get("auxiliary", "samples"),
        case=case, homogeneous=get("source", "homogeneous"),
        scale_s=get("source", "scale_s"), scale_d=get("source", "scale_d"), expressions=exprs,
        method=get("solver", "method"), tol=get("solver", "tol"),
        max_iter=get("solver", "max_iter"), out=Path(get("output", "dir")),
        seed=get("run", "seed"), serial=get("run", "serial"), n_starts=get("run", "n_starts"),
        samples=get("run", "samples"), forcings=get("run", "forcings"),
        workers=get("run", "workers"))


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file ({exc.strerror})", path) from None
    return parse_config(text, path)
