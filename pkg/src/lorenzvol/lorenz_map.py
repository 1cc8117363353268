"""One-dimensional Lorenz-like maps of [-3/4, 3/4] \\ {0}.

Two variants:

* ``power-law``: f(x) = beta |x|^rho - 3/4 for x > 0 and its odd reflection,
  a C^{1+} map with derivative blowing up at 0.
* ``cantor-extension``: the Cantor map phi of :mod:`lorenzvol.cantor` on
  its bridges, a Moebius collar on |x| > 1/2 and root-type pieces on the
  central gap (a, 0) U (0, b) that reach +-3/4 with infinite slope.  The
  pieces match values and one-sided derivatives, so the map is C^1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .cantor import CantorMapSpec, GapSchedule, IntervalCover, build_cover, eval_map, eval_map_array
from .errors import ContractError, NoSuchBranchError, ResourceError
from .model_core import SINGULAR_FLOOR, Check, ModelHandle, ValidationReport, report

EDGE = 0.75
# interior root exponent and blend weight of the central-gap pieces
ROOT_EXPONENT = 0.5
ROOT_WEIGHT = 0.5


@dataclass(frozen=True)
class LorenzMapSpec:
    variant: str
    rho: float = 0.75
    beta: float = 1.8
    cantor: Optional[CantorMapSpec] = None

    @classmethod
    def power_law(cls, rho=0.75, beta=1.8) -> "LorenzMapSpec":
        return cls("power-law", rho=float(rho), beta=float(beta))

    @classmethod
    def cantor_extension(cls, cantor: CantorMapSpec | None = None) -> "LorenzMapSpec":
        if cantor is None:
            cantor = CantorMapSpec(GapSchedule.inverse_square())
        return cls("cantor-extension", cantor=cantor)

    @property
    def window(self) -> tuple:
        """Interval on which the invariant Cantor structure lives."""
        return (-0.5, 0.5) if self.variant == "cantor-extension" else (-EDGE, EDGE)

    def validate(self) -> ValidationReport:
        return validate_properties(self).report

    def header(self) -> dict:
        """Record of the extension formulas, for report headers."""
        if self.variant == "power-law":
            return {"variant": self.variant, "rho": self.rho, "beta": self.beta}
        s, k, a, q = _ext_constants(self)
        return {
            "variant": self.variant,
            "schedule": self.cantor.schedule.to_dict(),
            "max_depth": self.cantor.max_depth,
            "gap_interpolation": "cubic Hermite, endpoint slopes = deepest bridge slope",
            "collar": f"f = -+(1/2 + s u/(1 + k u)), u = |x| - 1/2, s = {s:.6g}, k = {k:.6g}",
            "central_gap": (
                f"f = -+(3/4 - G(|x|/|a|)/4), G(t) = {ROOT_WEIGHT} t^{ROOT_EXPONENT}"
                f" + {1 - ROOT_WEIGHT} t^{q:.6g}, |a| = {a:.6g}"
            ),
        }


def _ext_constants(spec: LorenzMapSpec):
    s = float(spec.cantor.edge_slope)
    a = 0.5 - float(spec.cantor.lengths[1])  # |a| = b = 1/2 - L_1
    sigma = 4.0 * s * a
    q = (sigma - ROOT_WEIGHT * ROOT_EXPONENT) / (1.0 - ROOT_WEIGHT)
    return s, 4.0 * s, a, q


def evaluate(spec: LorenzMapSpec, x) -> tuple:
    """(f(x), f'(x)) for an array of points; nan at x = 0."""
    x = np.asarray(x, dtype=float)
    sgn = np.sign(x)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.variant == "power-law":
            r, b = spec.rho, spec.beta
            val = sgn * (b * ax**r - EDGE)
            der = b * r * ax ** (r - 1)
        else:
            val, der = _eval_extension(spec, x, sgn, ax)
    zero = ax == 0
    if zero.any():
        val = np.where(zero, np.nan, val)
        der = np.where(zero, np.nan, der)
    return val, der


def _eval_extension(spec, x, sgn, ax):
    s, k, a, q = _ext_constants(spec)
    val = np.empty_like(x)
    der = np.empty_like(x)
    bridge = (ax >= a) & (ax <= 0.5)
    if bridge.any():
        v, d = eval_map_array(spec.cantor, x[bridge])
        val[bridge], der[bridge] = v, d
    collar = ax > 0.5
    if collar.any():
        u = ax[collar] - 0.5
        val[collar] = sgn[collar] * (0.5 + s * u / (1 + k * u))
        der[collar] = s / (1 + k * u) ** 2
    inner = ax < a
    if inner.any():
        t = ax[inner] / a
        w, r = ROOT_WEIGHT, ROOT_EXPONENT
        G = w * t**r + (1 - w) * t**q
        dG = w * r * t ** (r - 1) + (1 - w) * q * t ** (q - 1)
        # left piece climbs to +3/4, right piece starts at -3/4
        val[inner] = -sgn[inner] * (EDGE - G / 4)
        der[inner] = dG / (4 * a)
    return val, der


def f_scalar(spec: LorenzMapSpec, x):
    """Scalar evaluation; exact on bridges of the Cantor variant for Fractions."""
    if spec.variant == "cantor-extension" and isinstance(x, (Fraction, int)):
        a = spec.cantor.lengths[1]
        if a <= abs(Fraction(x)) <= Fraction(1, 2):
            return eval_map(spec.cantor, Fraction(x)).value
    return float(evaluate(spec, np.array([float(x)]))[0][0])


def branch_range(spec: LorenzMapSpec, sign: int) -> tuple:
    """Image of the branch on (0, 3/4] (sign +1) or [-3/4, 0) (sign -1)."""
    if sign > 0:
        hi = float(evaluate(spec, np.array([EDGE]))[0][0])
        return -EDGE, hi
    lo = float(evaluate(spec, np.array([-EDGE]))[0][0])
    return lo, EDGE


def branch_inverse(spec: LorenzMapSpec, sign: int, y: np.ndarray) -> np.ndarray:
    """Inverse of one branch, vectorised; y must lie in the branch range."""
    y = np.asarray(y, dtype=float)
    if spec.variant == "power-law":
        r, b = spec.rho, spec.beta
        if sign > 0:
            return ((y + EDGE) / b) ** (1.0 / r)
        return -(((EDGE - y) / b) ** (1.0 / r))
    # monotone branch: bisection to full double precision
    lo = np.full(y.shape, 0.0 if sign > 0 else -EDGE)
    hi = np.full(y.shape, EDGE if sign > 0 else 0.0)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        probe = np.where(mid == 0, sign * 1e-300, mid)
        v = evaluate(spec, probe)[0]
        below = v < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# property validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyReport:
    report: ValidationReport
    witnesses: dict

    @property
    def ok(self) -> bool:
        return self.report.ok

    def to_dict(self):
        d = self.report.to_dict()
        d["witnesses"] = self.witnesses
        return d


def validate_properties(spec: LorenzMapSpec) -> PropertyReport:
    checks = []
    wit = {}
    if spec.variant == "power-law":
        checks.append(Check("exponent in (0,1)", 0 < spec.rho < 1, f"rho = {spec.rho}"))
        checks.append(Check("positive scale", spec.beta > 0, f"beta = {spec.beta}"))
        if not (0 < spec.rho < 1 and spec.beta > 0):
            return PropertyReport(report(*checks), wit)
    elif spec.variant == "cantor-extension":
        if spec.cantor is None:
            return PropertyReport(report(Check("cantor map present", False, "missing")), wit)
        crep = spec.cantor.validate()
        checks.extend(crep.checks)
        if not crep.ok:
            return PropertyReport(report(*checks), wit)
    else:
        return PropertyReport(report(Check("variant", False, f"unknown {spec.variant!r}")), wit)

    # (1) monotone branches, on a dense two-sided sample
    grid = np.concatenate([-np.geomspace(EDGE, 1e-9, 20001), np.geomspace(1e-9, EDGE, 20001)])
    val, der = evaluate(spec, grid)
    neg, pos = grid < 0, grid > 0
    mono = bool(np.all(der > 0) and np.all(np.diff(val[neg]) > 0) and np.all(np.diff(val[pos]) > 0))
    wit["min_derivative_sampled"] = float(der.min())
    checks.append(Check("(1) increasing branches", mono, f"min sampled derivative {der.min():.6g}"))

    # (2) boundary inequalities
    f_lo = float(evaluate(spec, np.array([-EDGE]))[0][0])
    f_hi = float(evaluate(spec, np.array([EDGE]))[0][0])
    wit["f(-3/4)"], wit["f(3/4)"] = f_lo, f_hi
    checks.append(
        Check(
            "(2) -3/4 < f(-3/4) and f(3/4) < 3/4",
            f_lo > -EDGE and f_hi < EDGE,
            f"f(-3/4) = {f_lo:.6g}, f(3/4) = {f_hi:.6g}",
        )
    )

    # (3) one-sided limits at 0
    probes = np.array([1e-6, 1e-9, 1e-12])
    left = evaluate(spec, -probes)[0]
    right = evaluate(spec, probes)[0]
    wit["f(0-)"] = [float(v) for v in left]
    wit["f(0+)"] = [float(v) for v in right]
    lim_ok = abs(left[-1] - EDGE) < 1e-3 and abs(right[-1] + EDGE) < 1e-3
    lim_ok &= bool(np.all(np.diff(np.abs(left - EDGE)) < 0))
    checks.append(Check("(3) f(0-) = 3/4, f(0+) = -3/4", bool(lim_ok), f"at 1e-12: {left[-1]:.9f}, {right[-1]:.9f}"))

    # (4) derivative blow-up
    probes = np.array([1e-3, 1e-6, 1e-9])
    dl = evaluate(spec, -probes)[1]
    dr = evaluate(spec, probes)[1]
    wit["derivative_at_1e-3_1e-6_1e-9"] = [float(v) for v in dr]
    blow = bool(np.all(np.diff(dl) > 0) and np.all(np.diff(dr) > 0) and dl[-1] > 10 and dr[-1] > 10)
    checks.append(Check("(4) f' -> +inf at 0", blow, f"f'(1e-9) = {dr[-1]:.6g}"))

    if spec.variant == "power-law":
        # derivative is decreasing in |x| when rho < 1, so the infimum sits at |x| = 3/4
        inf_d = spec.beta * spec.rho * EDGE ** (spec.rho - 1)
        wit["min_derivative"] = inf_d
        checks.append(
            Check("expansion floor > sqrt(2)", inf_d > math.sqrt(2), f"inf f' = {inf_d:.6g} vs {math.sqrt(2):.6g}")
        )
    return PropertyReport(report(*checks), wit)


def inf_derivative(spec: LorenzMapSpec) -> float:
    if spec.variant == "power-law":
        return spec.beta * spec.rho * EDGE ** (spec.rho - 1)
    grid = np.concatenate([-np.linspace(EDGE, 1e-9, 200001), np.linspace(1e-9, EDGE, 200001)])
    return float(evaluate(spec, grid)[1].min())


# ---------------------------------------------------------------------------
# covers, inverse branches, distortion
# ---------------------------------------------------------------------------


def invariant_cover(spec: LorenzMapSpec, depth: int, cap: int = 2**26) -> IntervalCover:
    """Points of [-3/4, 3/4] whose first ``depth`` images stay in the window.

    For the power-law variant the window is the whole domain and the cover
    is the partition into admissible depth-n cylinders (total length 3/2).
    For the Cantor variant the collar and the central gap are mapped into
    the collar, so for depth >= 1 the cover is exactly the Cantor cover.
    """
    if depth < 0:
        raise ContractError("depth must be non-negative")
    if depth == 0:
        return IntervalCover(0, np.array([-3], dtype=np.int64), np.array([3], dtype=np.int64), 4, Fraction(3, 2), ((),))
    if spec.variant == "cantor-extension":
        return build_cover(spec.cantor.schedule, depth, cap=cap)
    return _cylinder_cover(spec, depth, cap)


def _cylinder_cover(spec, depth, cap):
    lo = np.array([-EDGE])
    hi = np.array([EDGE])
    itins = [()]
    for _ in range(depth):
        new_lo, new_hi, new_it = [], [], []
        for sign in (-1, 1):
            r_lo, r_hi = branch_range(spec, sign)
            a = np.maximum(lo, r_lo)
            b = np.minimum(hi, r_hi)
            ok = b > a
            pa = branch_inverse(spec, sign, a[ok])
            pb = branch_inverse(spec, sign, b[ok])
            new_lo.append(pa)
            new_hi.append(pb)
            new_it.extend((sign,) + itins[i] for i in np.flatnonzero(ok))
        lo = np.concatenate(new_lo)
        hi = np.concatenate(new_hi)
        if len(lo) > cap:
            raise ResourceError(f"cylinder count {len(lo)} exceeds cap {cap}")
        order = np.argsort(lo, kind="stable")
        lo, hi = lo[order], hi[order]
        itins = [new_it[i] for i in order]
    return IntervalCover(depth, lo, hi, None, float(np.sum(hi - lo)), tuple(itins))


def _signs(itinerary) -> list:
    out = []
    for s in itinerary:
        if s in ("+", 1, "1"):
            out.append(1)
        elif s in ("-", -1, 0, "0"):
            out.append(-1)
        else:
            raise ContractError(f"bad itinerary symbol {s!r}")
    return out


def inverse_branch(spec: LorenzMapSpec, itinerary: Sequence, target: tuple) -> tuple:
    """Interval mapped onto ``target`` by f^n following the itinerary.

    Symbol k is the sign of f^k(x).
    """
    lo, hi = float(target[0]), float(target[1])
    if not -EDGE <= lo <= hi <= EDGE:
        raise ContractError(f"target {target} not inside [-3/4, 3/4]")
    signs = _signs(itinerary)
    for k in range(len(signs) - 1, -1, -1):
        r_lo, r_hi = branch_range(spec, signs[k])
        if lo < r_lo or hi > r_hi:
            raise NoSuchBranchError(
                f"step {k}: [{lo:.6g}, {hi:.6g}] not inside branch {signs[k]:+d} range [{r_lo:.6g}, {r_hi:.6g}]",
                step=k,
            )
        lo, hi = (float(v) for v in branch_inverse(spec, signs[k], np.array([lo, hi])))
    return lo, hi


@dataclass(frozen=True)
class DistortionReport:
    n: int
    radius: float
    value: float  # D_n >= 1
    itinerary: tuple
    center: float
    admissible: int
    exhaustive: bool

    def to_dict(self):
        return {
            "n": self.n,
            "radius": self.radius,
            "distortion": self.value,
            "itinerary": "".join("+" if s > 0 else "-" for s in self.itinerary),
            "center": self.center,
            "admissible": self.admissible,
            "exhaustive": self.exhaustive,
        }


# pre-ball centres: uniform grid over the core [-1/2, 1/2]
DEFAULT_CENTERS = tuple(np.linspace(-0.5, 0.5, 21))


def distortion(
    spec: LorenzMapSpec,
    n: int,
    radius: float,
    centers: Sequence[float] = DEFAULT_CENTERS,
    exhaustive_limit: int = 15,
    samples: int = 4096,
    seed: int = 0,
    probes: int = 5,
) -> DistortionReport:
    """Max ratio of |(f^n)'| over pre-balls of radius-``radius`` balls.

    Itineraries of length n are enumerated exhaustively up to
    ``exhaustive_limit`` and sampled (seeded) beyond.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    if not 0 < radius < 0.375:
        raise ContractError("radius must lie in (0, 3/8)")
    if n <= exhaustive_limit:
        itins = np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int8)
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        itins = rng.choice(np.array([-1, 1], dtype=np.int8), size=(samples, n))
        exhaustive = False
    centers = np.asarray(centers, dtype=float)
    m, c = len(itins), len(centers)
    lo = np.repeat((centers - radius)[None, :], m, axis=0).ravel()
    hi = np.repeat((centers + radius)[None, :], m, axis=0).ravel()
    sg = np.repeat(itins, c, axis=0)  # row j -> itinerary j // c
    ok = (lo >= -EDGE) & (hi <= EDGE)
    ranges = {s: branch_range(spec, s) for s in (-1, 1)}
    for k in range(n - 1, -1, -1):
        for s in (-1, 1):
            sel = ok & (sg[:, k] == s)
            r_lo, r_hi = ranges[s]
            bad = sel & ((lo < r_lo) | (hi > r_hi))
            ok &= ~bad
            sel &= ~bad
            if sel.any():
                lo[sel] = branch_inverse(spec, s, lo[sel])
                hi[sel] = branch_inverse(spec, s, hi[sel])
    idx = np.flatnonzero(ok & (lo != 0) & (hi != 0))
    if len(idx) == 0:
        return DistortionReport(n, radius, float("nan"), (), float("nan"), 0, exhaustive)
    t = np.linspace(0.0, 1.0, probes)
    pts = lo[idx, None] + (hi[idx] - lo[idx])[:, None] * t[None, :]
    logd = np.zeros_like(pts)
    x = pts.copy()
    for _ in range(n):
        v, d = evaluate(spec, x)
        logd += np.log(np.abs(d))
        x = v
    spread = logd.max(axis=1) - logd.min(axis=1)
    spread = np.where(np.isfinite(spread), spread, np.inf)
    j = int(np.argmax(spread))
    row = idx[j]
    return DistortionReport(
        n,
        radius,
        float(np.exp(spread[j])),
        tuple(int(v) for v in sg[row]),
        float(centers[row % c]),
        len(idx),
        exhaustive,
    )


def lorenz_model(spec: LorenzMapSpec, exact: bool = False) -> ModelHandle:
    def step(p):
        return evaluate(spec, p[:, 0])[0][:, None]

    def jac(p):
        return evaluate(spec, p[:, 0])[1][:, None, None]

    return ModelHandle(
        kind="interval",
        params=spec,
        dim=1,
        chart="interval",
        domain=((-EDGE, EDGE),),
        step=step,
        jacobian=jac,
        singular=lambda p: np.abs(p[:, 0]) < SINGULAR_FLOOR,
        mode="exact" if exact else "floating",
        step_exact=(lambda c: (f_scalar(spec, c[0]),)) if exact else None,
        validator=spec.validate,
    )
