from fractions import Fraction
from pathlib import Path

import pytest

from lorenzvol.config import EXPERIMENT_KINDS, load, loads, parse_value
from lorenzvol.errors import ContractError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize(
    "text, expected",
    [
        ("3", 3),
        ("-7", -7),
        ("1/3", Fraction(1, 3)),
        ("0.75", 0.75),
        ("1e-9", 1e-9),
        ("true", True),
        ("off", False),
        ("inverse-square", "inverse-square"),
        ("[5, 10, 15]", [5, 10, 15]),
        ("[[0.0, 0.0], [0.3, 0.7]]", [[0.0, 0.0], [0.3, 0.7]]),
        ("[1/4, 1/16]", [Fraction(1, 4), Fraction(1, 16)]),
        ("[]", []),
    ],
)
def test_parse_value(text, expected):
    value = parse_value(text)
    assert value == expected and type(value) is type(expected)


@pytest.mark.parametrize("text", ["1/0", "[1, 2", "[1, 2] x"])
def test_parse_value_rejects(text):
    with pytest.raises(ContractError):
        parse_value(text)


def test_loads_minimal():
    cfg = loads("[experiment]\nkind = hoelder\n[params]\nalpha = 1/2 # exponent\n")
    assert cfg.kind == "hoelder" and cfg.seed is None
    assert cfg.require("params", "alpha") == Fraction(1, 2)
    assert cfg.get("params", "missing", 4) == 4
    with pytest.raises(ContractError):
        cfg.require("params", "missing")


def test_digest_tracks_text():
    a = loads("[experiment]\nkind = hoelder\n")
    b = loads("[experiment]\nkind = hoelder\n\n")
    assert len(a.digest) == 64 and a.digest != b.digest


@pytest.mark.parametrize(
    "text",
    [
        "kind = hoelder",
        "[params]\nx = 1\n",
        "[experiment]\nkind = nonsense\n",
        "[experiment]\nkind = splitting\nseed = -1\n",
        f"[experiment]\nkind = splitting\nseed = {2**64}\n",
        "[experiment]\nkind = splitting\nseed = 1.5\n",
        "[experiment]\nkind = splitting\nseed = true\n",
    ],
)
def test_loads_rejects(text):
    with pytest.raises(ContractError):
        loads(text)


def test_seed_upper_bound_is_inclusive_of_max_u64():
    assert loads(f"[experiment]\nkind = splitting\nseed = {2**64 - 1}\n").seed == 2**64 - 1


def test_missing_file():
    with pytest.raises(ContractError):
        load("/nonexistent/config.ini")


def test_shipped_configs_cover_every_kind():
    kinds = {load(p).kind for p in CONFIGS.glob("*.ini")}
    assert kinds == set(EXPERIMENT_KINDS)
