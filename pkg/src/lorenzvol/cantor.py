"""Dynamically defined Cantor sets built from middle-gap schedules.

A schedule ``c_0, c_1, ...`` removes the middle fraction ``c_n`` of every
depth-n interval of ``[-1/2, 1/2]``.  All depth-n intervals have the same
length ``L_n = prod_{k<n} (1 - c_k) / 2**n``, so the covers are stored as
integer numerators over one common denominator and their measures are exact.

The expanding map ``phi`` sends every depth-(n+1) interval affinely onto the
depth-n interval obtained by dropping the first itinerary symbol, and every
level-m gap onto the corresponding level-(m-1) gap through a cubic Hermite
piece.  Evaluation is resolved down to ``max_depth`` levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .errors import ContractError, DomainError, ResourceError
from .model_core import Check, ModelHandle, ValidationReport, report

DEFAULT_CAP = 2**26
TAIL_RULES = ("repeat", "inverse-square")


def _inverse_square(n: int) -> Fraction:
    return Fraction(1, 2 * (n + 1) ** 2)


@dataclass(frozen=True)
class GapSchedule:
    kind: str
    value: Optional[Fraction] = None
    entries: tuple = ()
    tail: Optional[str] = None

    @classmethod
    def constant(cls, c) -> "GapSchedule":
        return cls("constant", value=Fraction(c))

    @classmethod
    def inverse_square(cls) -> "GapSchedule":
        return cls("inverse-square")

    @classmethod
    def explicit(cls, entries, tail=None) -> "GapSchedule":
        return cls("explicit", entries=tuple(Fraction(e) for e in entries), tail=tail)

    def c(self, n: int) -> Fraction:
        if self.kind == "constant":
            return self.value
        if self.kind == "inverse-square":
            return _inverse_square(n)
        if n < len(self.entries):
            return self.entries[n]
        if self.tail == "repeat":
            return self.entries[-1]
        if self.tail == "inverse-square":
            return _inverse_square(n)
        raise ContractError(f"schedule has no entry {n} and tail rule {self.tail!r}")

    def validate(self) -> ValidationReport:
        checks = []
        if self.kind == "constant":
            ok = self.value is not None and 0 < self.value < 1
            checks.append(Check("gap fraction in (0,1)", ok, f"c = {self.value}"))
        elif self.kind == "inverse-square":
            checks.append(Check("gap fraction in (0,1)", True, "c_n = 1/(2(n+1)^2)"))
        elif self.kind == "explicit":
            bad = [e for e in self.entries if not 0 < e < 1]
            checks.append(
                Check("entries present", len(self.entries) > 0, f"{len(self.entries)} entries")
            )
            checks.append(
                Check("gap fraction in (0,1)", not bad, f"violating entries {bad}" if bad else "")
            )
            checks.append(
                Check(
                    "tail rule declared",
                    self.tail in TAIL_RULES,
                    f"tail = {self.tail!r}; expected one of {TAIL_RULES}",
                )
            )
        else:
            checks.append(Check("schedule kind", False, f"unknown kind {self.kind!r}"))
        return report(*checks)

    def require_valid(self):
        rep = self.validate()
        if not rep.ok:
            bad = rep.failures()[0]
            raise ContractError(f"invalid gap schedule: {bad.name} ({bad.detail})")

    def lengths(self, depth: int) -> list:
        """Exact interval lengths L_0..L_depth."""
        out = [Fraction(1)]
        for k in range(depth):
            out.append(out[-1] * (1 - self.c(k)) / 2)
        return out

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["c"] = str(self.value)
        if self.kind == "explicit":
            d["entries"] = [str(e) for e in self.entries]
            d["tail"] = self.tail
        return d


@dataclass(frozen=True)
class IntervalCover:
    """Sorted disjoint closed intervals.

    Exact covers keep integer numerators over ``denominator``; floating covers
    (denominator None) keep plain floats.  ``itineraries`` defaults to the
    binary expansion of the interval index, most significant symbol first.
    """

    depth: int
    lefts: np.ndarray
    rights: np.ndarray
    denominator: Optional[int]
    measure: object
    itineraries: Optional[tuple] = None

    def __len__(self):
        return len(self.lefts)

    @property
    def exact(self) -> bool:
        return self.denominator is not None

    def interval(self, i: int) -> tuple:
        if self.exact:
            d = self.denominator
            return Fraction(int(self.lefts[i]), d), Fraction(int(self.rights[i]), d)
        return float(self.lefts[i]), float(self.rights[i])

    def intervals(self) -> list:
        return [self.interval(i) for i in range(len(self))]

    def float_bounds(self) -> tuple:
        if self.exact:
            d = self.denominator
            lo = np.array([int(v) / d for v in self.lefts]) if self.lefts.dtype == object else self.lefts / d
            hi = np.array([int(v) / d for v in self.rights]) if self.rights.dtype == object else self.rights / d
            return lo, hi
        return np.asarray(self.lefts, float), np.asarray(self.rights, float)

    def itinerary(self, i: int) -> tuple:
        if self.itineraries is not None:
            return self.itineraries[i]
        return tuple((i >> (self.depth - 1 - k)) & 1 for k in range(self.depth))


def _int_array(values, den):
    """Numerators as int64 when they fit, Python ints otherwise."""
    if den < 2**61:
        return np.array(values, dtype=np.int64)
    return np.array(values, dtype=object)


def build_cover(schedule: GapSchedule, depth: int, cap: int = DEFAULT_CAP) -> IntervalCover:
    """Depth-n cover of the Cantor set, exact."""
    schedule.require_valid()
    if depth < 0:
        raise ContractError("depth must be non-negative")
    if 2**depth > cap:
        raise ResourceError(f"depth {depth} needs {2**depth} intervals, cap is {cap}")
    L = schedule.lengths(depth)
    offsets = [L[k] - L[k + 1] for k in range(depth)]
    den = 2
    for q in [L[depth], *offsets]:
        den = math.lcm(den, q.denominator)
    lefts = _int_array([-den // 2], den)
    for k in range(depth):
        step = offsets[k] * den
        nxt = np.empty(2 * len(lefts), dtype=lefts.dtype)
        nxt[0::2] = lefts
        nxt[1::2] = lefts + int(step)
        lefts = nxt
    width = int(L[depth] * den)
    rights = lefts + width
    total = int(np.sum(rights - lefts)) if lefts.dtype != object else sum(rights - lefts)
    return IntervalCover(depth, lefts, rights, den, Fraction(int(total), den))


def tail_bracket(schedule: GapSchedule, start: int) -> tuple:
    """Certified bounds (lo, hi) on prod_{n>=start} (1 - c_n)."""
    if schedule.kind == "constant" or (schedule.kind == "explicit" and schedule.tail == "repeat"):
        return 0.0, 0.0
    if schedule.kind == "explicit" and start < len(schedule.entries):
        raise ContractError("tail bracket must start past the explicit entries")
    # sum_{n>=N} 1/(2(n+1)^2) = 1/2 sum_{m>=N+1} 1/m^2, squeezed by integrals
    m = start + 1
    s_lo = 0.5 / m
    s_hi = 0.5 / (m - 1) if m > 1 else 0.5 * math.pi**2 / 6
    c_max = float(schedule.c(start))
    lo = math.exp(-s_hi / (1 - c_max))
    hi = math.exp(-s_lo)
    return lo, hi


def limit_measure_bracket(schedule: GapSchedule, tol: float) -> tuple:
    """(estimate, lower, upper, terms) for prod_n (1 - c_n)."""
    schedule.require_valid()
    if tol <= 0:
        raise ContractError("tolerance must be positive")
    if schedule.kind == "constant" or schedule.tail == "repeat":
        return 0.0, 0.0, 0.0, 0
    n = max(64, len(schedule.entries))
    while True:
        logp = math.fsum(math.log1p(-float(schedule.c(k))) for k in range(n))
        t_lo, t_hi = tail_bracket(schedule, n)
        lo, hi = math.exp(logp) * t_lo, math.exp(logp) * t_hi
        mid = math.sqrt(lo * hi)
        if (hi - lo) / mid <= tol:
            return mid, lo, hi, n
        n *= 2


def limit_measure(schedule: GapSchedule, tol: float = 1e-9) -> float:
    """Lebesgue measure of the limit Cantor set, relative error <= tol."""
    return limit_measure_bracket(schedule, tol)[0]


# ---------------------------------------------------------------------------
# the expanding map
# ---------------------------------------------------------------------------


class MapValue(NamedTuple):
    value: object
    derivative: object
    level: int  # depth of the affine piece, or gap level when in_gap
    in_gap: bool
    resolved: bool  # False when x sits on a depth-max_depth bridge


@dataclass(frozen=True)
class CantorMapSpec:
    schedule: GapSchedule
    max_depth: int = 30

    @cached_property
    def lengths(self) -> list:
        return self.schedule.lengths(self.max_depth)

    @cached_property
    def lengths_f(self) -> np.ndarray:
        return np.array([float(v) for v in self.lengths])

    @cached_property
    def gap_lengths(self) -> list:
        """Exact length of a level-m gap, m = 0..max_depth-1."""
        return [self.schedule.c(m) * self.lengths[m] for m in range(self.max_depth)]

    @cached_property
    def secants_f(self) -> list:
        return [float("nan")] + [float(self.gap_secant(m)) for m in range(1, self.max_depth)]

    @property
    def a(self) -> Fraction:
        return Fraction(-1, 2) + self.lengths[1]

    @property
    def b(self) -> Fraction:
        return Fraction(1, 2) - self.lengths[1]

    @property
    def edge_slope(self) -> Fraction:
        """Slope of the deepest affine pieces, used at every gap endpoint."""
        L = self.lengths
        return L[-2] / L[-1]

    def slope(self, level: int) -> Fraction:
        """Slope of phi on a level-``level`` bridge: 2/(1 - c_{level-1})."""
        return 2 / (1 - self.schedule.c(level - 1))

    def gap_secant(self, m: int) -> Fraction:
        c = self.schedule.c
        return 2 * c(m - 1) / (c(m) * (1 - c(m - 1)))

    def validate(self) -> ValidationReport:
        rep = self.schedule.validate()
        checks = list(rep.checks)
        checks.append(Check("max depth >= 1", self.max_depth >= 1, f"max_depth = {self.max_depth}"))
        if rep.ok and self.max_depth >= 1:
            d = float(self.edge_slope)
            worst = 0.0
            for m in range(1, self.max_depth):
                worst = max(worst, d / float(self.gap_secant(m)))
            checks.append(
                Check(
                    "monotone gap interpolation",
                    0 < worst <= 3 / math.sqrt(2),
                    f"max endpoint-slope/secant ratio {worst:.4f} (limit 2.1213)",
                )
            )
            checks.append(
                Check("expanding branches", float(self.edge_slope) > 1, f"edge slope {float(self.edge_slope):.4f}")
            )
        return report(*checks)

    def require_valid(self):
        rep = self.validate()
        if not rep.ok:
            bad = rep.failures()[0]
            raise ContractError(f"invalid Cantor map: {bad.name} ({bad.detail})")


def _hermite(t, y0, h, secant, m):
    """Cubic with slope m at both ends and mean slope ``secant`` over [0, h]."""
    val = y0 + h * (m * t + (secant - m) * (3 - 2 * t) * t * t)
    der = m + 6 * (secant - m) * t * (1 - t)
    return val, der


def eval_map(spec: CantorMapSpec, x) -> MapValue:
    """Value and derivative of phi at a scalar point (Fraction-exact if x is)."""
    exact = isinstance(x, (Fraction, int))
    if exact:
        x = Fraction(x)
        L = spec.lengths
        half = Fraction(1, 2)
        m = spec.edge_slope
    else:
        x = float(x)
        L = [float(v) for v in spec.lengths]
        half = 0.5
        m = float(spec.edge_slope)
    if not -half <= x <= half:
        raise DomainError(f"x = {x} outside [-1/2, 1/2]")
    D = spec.max_depth
    left = -half  # left end of the current depth-k interval
    img = -half  # left end of its image interval at depth k-1
    for k in range(D):
        if x <= left + L[k + 1]:
            bit = 0
        elif x >= left + L[k] - L[k + 1]:
            bit = 1
        else:
            if k == 0:
                raise DomainError(f"x = {x} lies in the central gap (a, b)")
            x0 = left + L[k + 1]
            h = L[k] - 2 * L[k + 1]
            sec = spec.gap_secant(k) if exact else float(spec.gap_secant(k))
            val, der = _hermite((x - x0) / h, img + L[k], h, sec, m)
            return MapValue(val, der, k, True, True)
        if bit:
            left += L[k] - L[k + 1]
            if k >= 1:
                img += L[k - 1] - L[k]
    slope = L[D - 1] / L[D]
    return MapValue(img + (x - left) * slope, slope, D, False, False)


def eval_map_array(spec: CantorMapSpec, x: np.ndarray) -> tuple:
    """Vectorised float evaluation; returns (values, derivatives)."""
    x = np.asarray(x, dtype=float)
    L = spec.lengths_f
    m = float(spec.edge_slope)
    D = spec.max_depth
    val = np.full(x.shape, np.nan)
    der = np.full(x.shape, np.nan)
    left = np.full(x.shape, -0.5)
    img = np.full(x.shape, -0.5)
    active = (x >= -0.5) & (x <= 0.5)
    for k in range(D):
        go_left = x <= left + L[k + 1]
        go_right = x >= left + L[k] - L[k + 1]
        gap = active & ~go_left & ~go_right
        if k > 0 and gap.any():
            x0 = left[gap] + L[k + 1]
            h = float(spec.gap_lengths[k])
            v, d = _hermite((x[gap] - x0) / h, img[gap] + L[k], h, spec.secants_f[k], m)
            val[gap] = v
            der[gap] = d
        active &= ~gap
        r = active & go_right & ~go_left
        left = np.where(r, left + (L[k] - L[k + 1]), left)
        if k >= 1:
            img = np.where(r, img + (L[k - 1] - L[k]), img)
    slope = L[D - 1] / L[D]
    val[active] = img[active] + (x[active] - left[active]) * slope
    der[active] = slope
    return val, der


def cantor_model(spec: CantorMapSpec, exact: bool = False) -> ModelHandle:
    """phi on its branch domain [-1/2, a] U [b, 1/2]."""

    def step(p):
        return eval_map_array(spec, p[:, 0])[0][:, None]

    def jac(p):
        return eval_map_array(spec, p[:, 0])[1][:, None, None]

    return ModelHandle(
        kind="interval",
        params=spec,
        dim=1,
        chart="interval",
        domain=((-0.5, 0.5),),
        step=step,
        jacobian=jac,
        mode="exact" if exact else "floating",
        step_exact=lambda c: (eval_map(spec, c[0]).value,),
        validator=spec.validate,
    )


# ---------------------------------------------------------------------------
# regularity diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HoelderProfile:
    alpha: float
    per_level: tuple  # level m = 1..depth
    running_max: tuple
    bridge_terms: tuple = field(default=())
    gap_terms: tuple = field(default=())

    @property
    def maximum(self) -> float:
        return self.running_max[-1] if self.running_max else 0.0


def _gap_quotient(secant, edge, alpha, samples=4001):
    """sup_t |p'(t) - p'(0)| / t^alpha for the unit-normalised Hermite gap piece.

    In gap-relative coordinates p' depends only on u = t/h:
    p'(u) = edge + 6 (secant - edge) u (1 - u).  Returned value is for h = 1.
    """
    u = np.linspace(0.0, 1.0, samples)[1:]
    dev = np.abs(6.0 * (secant - edge) * u * (1.0 - u))
    return float(np.max(dev / u**alpha))


def hoelder_modulus(spec: CantorMapSpec, alpha: float, depth: int) -> HoelderProfile:
    """Per-level alpha-Hoelder quotients of phi' across level-m gaps.

    Two contributions per level m: the slope jump between the level-m and
    level-(m+1) bridges divided by gap_m^alpha, and the Hermite interpolation
    quotient inside a level-m gap.  Both vanish for constant schedules.
    """
    if not 0 < alpha <= 1:
        raise ContractError("alpha must lie in (0, 1]")
    if depth > spec.max_depth - 1:
        raise ContractError(f"depth {depth} exceeds resolved depth {spec.max_depth - 1}")
    spec.require_valid()
    c = spec.schedule.c
    L = spec.lengths
    edge = float(spec.edge_slope)
    per, run, br, gp = [], [], [], []
    best = 0.0
    for m in range(1, depth + 1):
        h = float(c(m) * L[m])
        jump = abs(float(spec.slope(m) - spec.slope(m + 1)))
        bridge = jump / h**alpha
        # p' deviation depends on u = t/h only, so the quotient scales as h^-alpha
        gap = _gap_quotient(float(spec.gap_secant(m)), edge, alpha) / h**alpha
        val = max(bridge, gap)
        best = max(best, val)
        per.append(val)
        run.append(best)
        br.append(bridge)
        gp.append(gap)
    return HoelderProfile(alpha, tuple(per), tuple(run), tuple(br), tuple(gp))


def cover_rows(cover: IntervalCover) -> list:
    """(depth, left, right) rows with exact rational strings."""
    return [(cover.depth, str(lo), str(hi)) for lo, hi in cover.intervals()]
