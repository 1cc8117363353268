"""Experiment configuration files.

Sectioned ``key = value`` text read with :mod:`configparser`; values are
typed by ``parse_value``.  The grammar is documented in
docs/config_grammar.md.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .errors import ContractError

EXPERIMENT_KINDS = (
    "cantor-measure",
    "hoelder",
    "lorenz1d-invariant",
    "distortion",
    "return-map-cover",
    "flow-box",
    "splitting",
    "cones",
    "solenoid-slice",
    "trapped-volume",
)

# kinds that draw random numbers and therefore need a seed
SAMPLED_KINDS = frozenset(
    {"distortion", "return-map-cover", "flow-box", "splitting", "cones", "solenoid-slice", "trapped-volume"}
)

_INT = re.compile(r"[+-]?\d+")
_FRACTION = re.compile(r"[+-]?\d+/\d+")
_FLOAT = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?|[+-]?(inf|nan)")


def parse_value(text: str) -> Any:
    """Typed scalar or (nested) list.

    int, p/q (Fraction), float, true/false, [a, b, ...] lists; anything else
    stays a string.
    """
    s = text.strip()
    if s.startswith("["):
        value, rest = _parse_list(s, 0)
        if s[rest:].strip():
            raise ContractError(f"trailing text after list: {s!r}")
        return value
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if _INT.fullmatch(s):
        return int(s)
    if _FRACTION.fullmatch(s):
        num, den = s.split("/")
        if int(den) == 0:
            raise ContractError(f"zero denominator in {s!r}")
        return Fraction(int(num), int(den))
    if _FLOAT.fullmatch(s):
        return float(s)
    return s


def _parse_list(s: str, i: int):
    assert s[i] == "["
    i += 1
    items = []
    token = ""
    while i < len(s):
        ch = s[i]
        if ch == "[":
            sub, i = _parse_list(s, i)
            items.append(sub)
            token = ""
            continue
        if ch in ",]":
            if token.strip():
                items.append(parse_value(token))
            token = ""
            i += 1
            if ch == "]":
                return items, i
            continue
        token += ch
        i += 1
    raise ContractError(f"unterminated list in {s!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int | None
    sections: dict = field(default_factory=dict)
    out: str | None = None
    digest: str = ""
    source: str = ""

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section: str, key: str):
        try:
            return self.sections[section][key]
        except KeyError:
            raise ContractError(f"missing [{section}] {key}") from None


def loads(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",)
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ContractError(f"config syntax: {exc}") from None
    sections = {}
    for name in parser.sections():
        sections[name] = {k: parse_value(v) for k, v in parser.items(name)}
    exp = sections.get("experiment")
    if exp is None:
        raise ContractError("missing [experiment] section")
    kind = exp.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ContractError(f"unknown experiment kind {kind!r}")
    seed = exp.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0 or seed >= 2**64):
        raise ContractError("seed must be an unsigned 64-bit integer")
    out = sections.get("output", {}).get("dir")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(kind, seed, sections, None if out is None else str(out), digest, source)


def load(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ContractError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, str(p))
