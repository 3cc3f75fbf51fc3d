"""Run configuration: strict ``[section] key = value`` parsing and serialization.

Every key is declared in :data:`SCHEMA`; unknown sections or keys, type
mismatches and missing required keys are reported together, each with the
line it came from.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass

from .coefficients import CoefficientPreset, PRESETS, get_preset

COMMANDS = ("simulate", "cell", "homogenize", "verify", "corrector", "hypotheses")
OPERATORS = ("spectral", "fd")
INITIALS = ("default", "constant")
LAW_KEYS = ("g0", "g1", "g2", "U_thr")
_NON_NUMERIC = {"name", "regime", "transport", "carrier"}
OVERRIDE_KEYS = tuple(sorted(LAW_KEYS + tuple(
    f.name for f in dataclasses.fields(CoefficientPreset) if f.name not in _NON_NUMERIC)))
U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class RunConfig:
    command: str
    preset: str
    overrides: tuple[tuple[str, float], ...] = ()
    n: int = 32
    eps: float | None = None
    eps_ladder: tuple[float, ...] | None = None
    T_final: float = 0.5
    safety: float = 0.5
    operator: str = "spectral"
    initial: str = "default"
    prepared: bool = True
    m_theta: int = 128
    m_tau: int = 16
    n_t: int = 1
    per_period: int = 64
    t_cell: float = 0.3
    nu_schedule: tuple[float, ...] = (0.1, 0.03, 0.01)
    substeps: int = 0
    tol_elliptic: float = 1e-10
    tol_cell: float = 1e-10
    out: str = "out"
    seed: int = 0

    def build_preset(self) -> CoefficientPreset:
        return get_preset(self.preset, **dict(self.overrides))

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["overrides"] = dict(self.overrides)
        return d


@dataclass(frozen=True)
class ConfigIssue:
    line: int | None
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}" if self.line else self.message


class ConfigError(ValueError):
    def __init__(self, issues: list[ConfigIssue]):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


# -- value parsers ------------------------------------------------------------------

def _positive_float(name):
    def conv(text):
        v = float(text)
        if not v > 0:
            raise ValueError(f"{name} must be positive")
        return v
    return conv


def _positive_int(name, allow_zero=False):
    def conv(text):
        v = int(text)
        if v < 0 or (v == 0 and not allow_zero):
            raise ValueError(f"{name} must be {'nonnegative' if allow_zero else 'positive'}")
        return v
    return conv


def _choice(name, options):
    def conv(text):
        if text not in options:
            raise ValueError(f"{name} must be one of {', '.join(options)}")
        return text
    return conv


def _float_list(name, decreasing=False, min_len=1):
    def conv(text):
        vals = tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)
        if len(vals) < min_len:
            raise ValueError(f"{name} needs >= {min_len} entries")
        if any(not v > 0 for v in vals):
            raise ValueError(f"{name} entries must be positive")
        if decreasing and any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"{name} must be strictly decreasing")
        return vals
    return conv


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected a boolean (true/false)")


def _seed(text):
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _nonempty(text):
    if not text:
        raise ValueError("out must be a nonempty path")
    return text


# (section, key) -> (RunConfig field, converter, serializer)
SCHEMA = {
    ("run", "command"): ("command", _choice("command", COMMANDS), str),
    ("run", "seed"): ("seed", _seed, str),
    ("run", "out"): ("out", _nonempty, str),
    ("preset", "name"): ("preset", _choice("preset name", tuple(sorted(PRESETS))), str),
    ("grid", "n"): ("n", _positive_int("n"), str),
    ("model", "eps"): ("eps", _positive_float("eps"), repr),
    ("model", "eps_ladder"): ("eps_ladder", _float_list("eps_ladder", decreasing=True, min_len=3),
                              lambda v: ", ".join(repr(x) for x in v)),
    ("model", "T_final"): ("T_final", _positive_float("T_final"), repr),
    ("model", "safety"): ("safety", _positive_float("safety"), repr),
    ("model", "operator"): ("operator", _choice("operator", OPERATORS), str),
    ("model", "initial"): ("initial", _choice("initial", INITIALS), str),
    ("model", "prepared"): ("prepared", _bool, lambda v: "true" if v else "false"),
    ("nodes", "m_theta"): ("m_theta", _positive_int("m_theta"), str),
    ("nodes", "m_tau"): ("m_tau", _positive_int("m_tau"), str),
    ("nodes", "n_t"): ("n_t", _positive_int("n_t"), str),
    ("nodes", "per_period"): ("per_period", _positive_int("per_period"), str),
    ("cell", "t"): ("t_cell", float, repr),
    ("cell", "nu_schedule"): ("nu_schedule", _float_list("nu_schedule", decreasing=True),
                              lambda v: ", ".join(repr(x) for x in v)),
    ("cell", "substeps"): ("substeps", _positive_int("substeps", allow_zero=True), str),
    ("tolerances", "elliptic"): ("tol_elliptic", _positive_float("elliptic tolerance"), repr),
    ("tolerances", "cell"): ("tol_cell", _positive_float("cell tolerance"), repr),
}
SECTIONS = ("run", "preset", "grid", "model", "nodes", "cell", "tolerances")

# keys each command cannot run without, besides run.command and preset.name
REQUIRED = {
    "simulate": [("grid", "n"), ("model", "eps"), ("model", "T_final")],
    "cell": [("grid", "n"), ("model", "eps")],
    "homogenize": [("grid", "n"), ("model", "T_final")],
    "verify": [("grid", "n"), ("model", "eps_ladder"), ("model", "T_final")],
    "corrector": [("grid", "n"), ("model", "eps_ladder"), ("model", "T_final")],
    "hypotheses": [("model", "eps")],
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


def _line_index(text: str) -> tuple[dict, dict]:
    sections, keys = {}, {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, lineno)
            continue
        m = _KEY_RE.match(line)
        if m and current is not None and not line[:1].isspace():
            keys.setdefault((current, m.group(1).strip()), lineno)
    return sections, keys


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    cp.optionxform = str  # keys are case-sensitive (U_thr)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        msg = re.sub(r"^While reading from .*?\[line\s*\d+\]:\s*", "", str(exc).splitlines()[0])
        raise ConfigError([ConfigIssue(getattr(exc, "lineno", None), msg)]) from None
    sec_lines, key_lines = _line_index(text)
    issues: list[ConfigIssue] = []
    values: dict[str, object] = {}
    overrides: dict[str, float] = {}
    present = set()
    for section in cp.sections():
        if section not in SECTIONS:
            issues.append(ConfigIssue(sec_lines.get(section), f"unknown section [{section}]"))
            continue
        for key, raw in cp.items(section):
            present.add((section, key))
            where = key_lines.get((section, key))
            if section == "preset" and key != "name":
                if key not in OVERRIDE_KEYS:
                    issues.append(ConfigIssue(where, f"unknown preset override '{key}'"))
                    continue
                try:
                    overrides[key] = float(raw)
                except ValueError:
                    issues.append(ConfigIssue(where, f"preset override '{key}' expects a number, got {raw!r}"))
                continue
            entry = SCHEMA.get((section, key))
            if entry is None:
                issues.append(ConfigIssue(where, f"unknown key '{key}' in [{section}]"))
                continue
            name, conv, _ = entry
            try:
                values[name] = conv(raw.strip())
            except ValueError as exc:
                msg = str(exc)
                if "invalid literal" in msg or "could not convert" in msg:
                    msg = f"{key} expects a number, got {raw!r}"
                issues.append(ConfigIssue(where, msg))
    for req in [("run", "command"), ("preset", "name")]:
        if req not in present:
            issues.append(ConfigIssue(sec_lines.get(req[0]), f"missing required key '{req[1]}' in [{req[0]}]"))
    command = values.get("command")
    if command in REQUIRED:
        for req in REQUIRED[command]:
            if req not in present:
                issues.append(ConfigIssue(sec_lines.get(req[0]),
                                          f"missing required key '{req[1]}' in [{req[0]}] for {command}"))
    if issues:
        raise ConfigError(issues)
    cfg = RunConfig(overrides=tuple(sorted(overrides.items())), **values)
    _check_preset(cfg, key_lines)
    return cfg


def _check_preset(cfg: RunConfig, key_lines: dict) -> None:
    where = key_lines.get(("preset", "name"))
    try:
        preset = cfg.build_preset()
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError([ConfigIssue(where, f"invalid preset: {exc}")]) from None
    if cfg.command == "corrector" and (preset.regime != "mean" or preset.transport.U_thr != 0):
        raise ConfigError([ConfigIssue(where, "corrector needs a mean-regime preset with U_thr = 0")])
    if cfg.command in ("homogenize", "verify") and preset.regime == "short":
        raise ConfigError([ConfigIssue(where, f"{cfg.command} needs a mean- or long-regime preset")])


def serialize_config(cfg: RunConfig) -> str:
    """Text form that :func:`parse_config` reads back to an equal config."""
    by_section: dict[str, list[str]] = {s: [] for s in SECTIONS}
    for (section, key), (name, _, fmt) in SCHEMA.items():
        val = getattr(cfg, name)
        if val is None:
            continue
        by_section[section].append(f"{key} = {fmt(val)}")
        if (section, key) == ("preset", "name"):
            by_section[section].extend(f"{k} = {v!r}" for k, v in cfg.overrides)
    parts = []
    for section in SECTIONS:
        if by_section[section]:
            parts.append(f"[{section}]\n" + "\n".join(by_section[section]) + "\n")
    return "\n".join(parts)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


__all__ = ["RunConfig", "ConfigIssue", "ConfigError", "parse_config", "serialize_config", "load_config",
           "COMMANDS", "OVERRIDE_KEYS", "SCHEMA"]
