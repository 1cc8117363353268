"""Geometric Lorenz model: suspension flow, planar return map, section covers.

The flow lives on two charts.  The saddle chart is the cube [-1,1]^2 x (0,1]
with linear vector field (lambda1 x, lambda2 y, lambda3 z); the section
Sigma = [-3/4,3/4]^2 sits at z = 1.  A point leaving the cube through the face
|x| = 1 enters a gluing tube with coordinates (side, y', z', u), travels for
the constant time tau_g and lands back on Sigma.

The return map is P(x, y) = (f(x), g(x, y)) with

    g(x, y) = sign(x) B |x|^s + kappa y |x|^s,

so the vertical lines are its stable leaves.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import ContractError, DomainError
from .lorenz_map import EDGE, LorenzMapSpec, branch_inverse, branch_range, evaluate, inf_derivative
from .model_core import SINGULAR_FLOOR, Check, ModelHandle, ModelPoint, ValidationReport, report

SECTION = ((-EDGE, EDGE), (-EDGE, EDGE))
SECTION_AREA = Fraction(9, 4)
DEFAULT_EPSILON_CAP = 0.05


@dataclass(frozen=True)
class SuspensionSpec:
    lambda1: float = 1.0
    lambda2: float = -1.2
    lambda3: float = -0.75
    beta: float = 1.8
    offset: float = 0.4
    kappa: float = 0.25
    transit: float = 1.0
    base: Optional[LorenzMapSpec] = None

    @property
    def rho(self) -> float:
        return -self.lambda3 / self.lambda1

    @property
    def s(self) -> float:
        return -self.lambda2 / self.lambda1

    def validate(self) -> ValidationReport:
        l1, l2, l3 = self.lambda1, self.lambda2, self.lambda3
        checks = [
            Check("lambda1 > 0", l1 > 0, f"lambda1 = {l1}"),
            Check("lambda3 < 0", l3 < 0, f"lambda3 = {l3}"),
            Check("lambda2 < lambda3", l2 < l3, f"lambda2 = {l2}, lambda3 = {l3}"),
            Check("lambda1 + lambda3 > 0", l1 + l3 > 0, f"sum = {l1 + l3}"),
            Check("transit time > 0", self.transit > 0, f"tau_g = {self.transit}"),
        ]
        if not all(c.passed for c in checks):
            return report(*checks)
        glued = derive_return_map(self, check=False)
        checks.extend(glued.validate().checks)
        return report(*checks)

    def require_valid(self):
        rep = self.validate()
        if not rep.ok:
            bad = rep.failures()[0]
            raise ContractError(f"suspension invalid: {bad.name} ({bad.detail})")


@dataclass(frozen=True)
class ReturnMapSpec:
    base: LorenzMapSpec = field(default_factory=LorenzMapSpec.power_law)
    offset: float = 0.4
    kappa: float = 0.25
    s: float = 1.2

    @property
    def fiber_contraction(self) -> float:
        return self.kappa * EDGE**self.s

    def validate(self) -> ValidationReport:
        checks = list(self.base.validate().checks)
        if not all(c.passed for c in checks):
            return report(*checks)
        sup_g = (self.offset + self.kappa * EDGE) * EDGE**self.s
        checks.append(Check("fiber exponent > 1", self.s > 1, f"s = {self.s}"))
        checks.append(Check("sup|g| < 3/4", sup_g < EDGE, f"sup|g| = {sup_g:.6g}"))
        checks.append(
            Check("fiber contraction < 1", self.fiber_contraction < 1, f"{self.fiber_contraction:.6g}")
        )
        dom = self.fiber_contraction / inf_derivative(self.base)
        checks.append(Check("domination ratio < 1", dom < 1, f"{dom:.6g}"))
        # the two branch images must sit in opposite half planes for P to be injective
        checks.append(
            Check(
                "branch images disjoint",
                self.offset > self.kappa * EDGE,
                f"B = {self.offset}, kappa*3/4 = {self.kappa * EDGE}",
            )
        )
        return report(*checks)

    def require_valid(self):
        rep = self.validate()
        if not rep.ok:
            bad = rep.failures()[0]
            raise ContractError(f"return map invalid: {bad.name} ({bad.detail})")

    @property
    def domination(self) -> float:
        return self.fiber_contraction / inf_derivative(self.base)


def derive_return_map(susp: SuspensionSpec, check: bool = True) -> ReturnMapSpec:
    """Return-map record induced by the saddle exponents and the gluing data."""
    if check:
        susp.require_valid()
    base = susp.base if susp.base is not None else LorenzMapSpec.power_law(susp.rho, susp.beta)
    return ReturnMapSpec(base=base, offset=susp.offset, kappa=susp.kappa, s=susp.s)


@functools.lru_cache(maxsize=64)
def _checked(susp: SuspensionSpec) -> ReturnMapSpec:
    # validation evaluates the base map on dense grids; do it once per record
    return derive_return_map(susp)


def exit_time(susp: SuspensionSpec, x) -> np.ndarray:
    """Time to leave the saddle cube from height 1 at abscissa x."""
    return -np.log(np.abs(np.asarray(x, dtype=float))) / susp.lambda1


def return_time(susp: SuspensionSpec, x) -> np.ndarray:
    return exit_time(susp, x) + susp.transit


# ---------------------------------------------------------------------------
# return map
# ---------------------------------------------------------------------------


def fiber(spec: ReturnMapSpec, x, y) -> tuple:
    """(g, dg/dx, dg/dy) on arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sg = np.sign(x)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        pw = ax**spec.s
        g = sg * spec.offset * pw + spec.kappa * y * pw
        gx = spec.s * ax ** (spec.s - 1) * (spec.offset + sg * spec.kappa * y)
    return g, gx, spec.kappa * pw


def return_map(spec: ReturnMapSpec, pts: np.ndarray) -> tuple:
    """Images and 2x2 tangents for an (N, 2) array."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    fx, dfx = evaluate(spec.base, x)
    g, gx, gy = fiber(spec, x, y)
    img = np.stack([fx, g], axis=1)
    jac = np.zeros((len(pts), 2, 2))
    jac[:, 0, 0] = dfx
    jac[:, 1, 0] = gx
    jac[:, 1, 1] = gy
    return img, jac


def return_step(spec: ReturnMapSpec, p) -> tuple:
    """Image point and lower-triangular tangent of a single section point."""
    c = p.coords if isinstance(p, ModelPoint) else tuple(p)
    x, y = float(c[0]), float(c[1])
    if abs(x) <= SINGULAR_FLOOR:
        raise DomainError(f"x = {x} is on the singular line")
    if abs(x) > EDGE or abs(y) > EDGE:
        raise DomainError(f"({x}, {y}) outside the section")
    img, jac = return_map(spec, np.array([[x, y]]))
    return img[0], jac[0]


def return_inverse(spec: ReturnMapSpec, pts: np.ndarray) -> tuple:
    """Unique preimages in Sigma where they exist: (preimages, ok mask)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    out = np.full(pts.shape, np.nan)
    ok = np.zeros(len(pts), dtype=bool)
    for side in (1, -1):
        lo, hi = branch_range(spec.base, side)
        sel = (np.sign(y) == side) & (x >= lo) & (x <= hi)
        if not sel.any():
            continue
        xp = branch_inverse(spec.base, side, x[sel])
        with np.errstate(divide="ignore", invalid="ignore"):
            yp = (y[sel] / np.abs(xp) ** spec.s - side * spec.offset) / spec.kappa
        good = np.isfinite(yp) & (np.abs(yp) <= EDGE) & (np.abs(xp) > SINGULAR_FLOOR)
        idx = np.flatnonzero(sel)
        out[idx, 0] = xp
        out[idx, 1] = yp
        ok[idx] = good
    return out, ok


def return_map_model(spec: ReturnMapSpec) -> ModelHandle:
    return ModelHandle(
        kind="planar",
        params=spec,
        dim=2,
        chart="section",
        domain=SECTION,
        step=lambda p: return_map(spec, p)[0],
        jacobian=lambda p: return_map(spec, p)[1],
        singular=lambda p: np.abs(p[:, 0]) <= SINGULAR_FLOOR,
        inverse=lambda p: return_inverse(spec, p),
        validator=spec.validate,
    )


# ---------------------------------------------------------------------------
# flow
# ---------------------------------------------------------------------------


def section_point(x: float, y: float) -> ModelPoint:
    return ModelPoint((float(x), float(y), 1.0), "saddle")


def _glue(susp: SuspensionSpec, base: LorenzMapSpec, side: float, yp: float, zp: float) -> ModelPoint:
    # z' = |x|^rho, y' = y |x|^s  ->  (f(x), sign B |x|^s + kappa y |x|^s)
    ax = zp ** (1.0 / susp.rho)
    xn = float(evaluate(base, np.array([side * ax]))[0][0])
    yn = susp.kappa * yp + side * susp.offset * ax**susp.s
    return section_point(xn, yn)


def _chart_error(msg, t):
    err = DomainError(f"{msg} at flow time {t:.6g}")
    err.exit_time = t
    return err


def flow_integrate(susp: SuspensionSpec, p: ModelPoint, t: float) -> ModelPoint:
    """Flow a point of the saddle chart or the gluing tube for time t >= 0."""
    if t < 0:
        raise ContractError("only forward flow is modelled")
    base = _checked(susp).base
    l1, l2, l3 = susp.lambda1, susp.lambda2, susp.lambda3
    remaining = float(t)
    elapsed = 0.0
    while True:
        if p.chart == "saddle":
            x, y, z = p.coords
            if abs(x) > 1 or abs(y) > 1 or not 0 < z <= 1:
                raise _chart_error(f"point {p.coords} outside the saddle chart", elapsed)
            if x == 0:
                # stable manifold of the saddle: never leaves
                return ModelPoint((0.0, y * math.exp(l2 * remaining), z * math.exp(l3 * remaining)), "saddle")
            leave = -math.log(abs(x)) / l1
            if remaining < leave:
                return ModelPoint(
                    (
                        x * math.exp(l1 * remaining),
                        y * math.exp(l2 * remaining),
                        z * math.exp(l3 * remaining),
                    ),
                    "saddle",
                )
            ax = abs(x)
            p = ModelPoint((math.copysign(1.0, x), y * ax**susp.s, z * ax**susp.rho, 0.0), "tube")
            remaining -= leave
            elapsed += leave
        elif p.chart == "tube":
            side, yp, zp, u = p.coords
            if not 0 < zp <= 1 or abs(yp) > 1:
                raise _chart_error(f"tube point {p.coords} outside the gluing region", elapsed)
            if remaining < susp.transit - u:
                return ModelPoint((side, yp, zp, u + remaining), "tube")
            remaining -= susp.transit - u
            elapsed += susp.transit - u
            p = _glue(susp, base, side, yp, zp)
        else:
            raise DomainError(f"unknown chart {p.chart!r}")


def project_to_section(susp: SuspensionSpec, p: ModelPoint, tol: float = 1e-9) -> tuple:
    """Section coordinates of a point on Sigma or at the end of a gluing tube."""
    if p.chart == "saddle" and abs(p.coords[2] - 1.0) <= tol:
        return (p.coords[0], p.coords[1])
    if p.chart == "tube" and abs(p.coords[3] - susp.transit) <= tol:
        side, yp, zp, _ = p.coords
        q = _glue(susp, _checked(susp).base, side, yp, zp)
        return (q.coords[0], q.coords[1])
    raise DomainError(f"point {p.coords} in chart {p.chart} is not on the section")


# ---------------------------------------------------------------------------
# covers and volume
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossSectionStats:
    depths: tuple
    areas: tuple  # Fractions
    projections: tuple  # Fractions
    box_counts: tuple
    cover: object  # final BoxCollection
    label: str = "sampled cover"

    def rows(self):
        for d, a, p, c in zip(self.depths, self.areas, self.projections, self.box_counts):
            yield d, a, p, c


def section_root(spec: ReturnMapSpec):
    lo, hi = spec.base.window
    return ((Fraction(lo), Fraction(hi)), (Fraction(-EDGE), Fraction(EDGE)))


def cross_section_stats(spec: ReturnMapSpec, depth: int, config=None, workers: int = 1) -> CrossSectionStats:
    """Subdivision covers of the relative attractor of P, depths 0..depth.

    For the Cantor-extension base the root is the window [-1/2,1/2] x [-3/4,3/4],
    which contains the attractor's Cantor part; depth 0 reports the whole section.
    """
    from .volume_lab import BoxCollection, SubdivisionConfig, subdivide_select

    spec.require_valid()
    cfg = config or SubdivisionConfig(max_depth=depth)
    if depth > cfg.max_depth:
        raise ContractError(f"depth {depth} above configured maximum {cfg.max_depth}")
    model = return_map_model(spec)
    full = BoxCollection.root_box(SECTION_AREA_ROOT)
    boxes = BoxCollection.root_box(section_root(spec))
    depths, areas, projs, counts = [0], [full.measure], [full.projection(0)], [1]
    for d in range(1, depth + 1):
        boxes = subdivide_select(model, boxes, cfg, workers=workers)
        depths.append(d)
        areas.append(boxes.measure)
        projs.append(boxes.projection(0))
        counts.append(len(boxes))
    return CrossSectionStats(tuple(depths), tuple(areas), tuple(projs), tuple(counts), boxes)


SECTION_AREA_ROOT = ((Fraction(-3, 4), Fraction(3, 4)), (Fraction(-3, 4), Fraction(3, 4)))


@dataclass(frozen=True)
class FlowBoxEstimate:
    epsilon: float
    area: Fraction
    speed: float
    volume: float
    label: str = "certified lower bound"

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "area": str(self.area),
            "area_float": float(self.area),
            "speed": self.speed,
            "volume": self.volume,
            "label": self.label,
        }


def flow_box_volume(susp: SuspensionSpec, cover, epsilon: float, cap: float = DEFAULT_EPSILON_CAP) -> FlowBoxEstimate:
    """Volume of the flow box X_[-eps, eps](cover) from area and transverse speed.

    ``cover`` is a BoxCollection or a plain area.  The product is formed in
    rational arithmetic from the decimal values of epsilon and lambda3, so the
    reported volume is the correctly rounded 2 eps |lambda3| area.
    """
    if epsilon < 0:
        raise ContractError("epsilon must be non-negative")
    if epsilon > cap:
        raise ContractError(f"epsilon {epsilon} above the flow-box cap {cap}")
    # below height 1 the next layer of the box is reached after ln(1/2)/lambda3
    limit = math.log(2.0) / abs(susp.lambda3)
    if epsilon >= limit:
        raise ContractError(f"epsilon {epsilon} would make the flow box self-intersect")
    area = cover.measure if hasattr(cover, "measure") else Fraction(cover)
    area = Fraction(area)
    # on Sigma the transverse component is |lambda3 z| with z = 1 everywhere
    speed = abs(susp.lambda3)
    exact = 2 * Fraction(repr(float(epsilon))) * Fraction(repr(speed)) * area
    return FlowBoxEstimate(float(epsilon), area, speed, float(exact))
