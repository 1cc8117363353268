"""Uniform handle over the discrete models of the package.

Every model exposes a vectorised one-step map on arrays of shape (N, dim),
its Jacobian, a singular-set predicate and (optionally) an inverse.  The
diagnostic modules only ever talk to ``ModelHandle``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DomainError, NumericError

# |x| below this counts as a hit on the singular line x = 0
SINGULAR_FLOOR = 1e-300

KINDS = ("interval", "planar", "suspension", "solenoid", "linear")
MODES = ("floating", "exact")


@dataclass(frozen=True)
class ModelPoint:
    coords: tuple
    chart: str


@dataclass(frozen=True)
class TangentMatrix:
    entries: np.ndarray
    basepoint: ModelPoint


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks
            ],
        }


def report(*checks: Check) -> ValidationReport:
    return ValidationReport(tuple(checks))


def _always_valid():
    return report(Check("record", True))


@dataclass(frozen=True, eq=False)
class ModelHandle:
    """Immutable description of a model.

    ``step`` and ``jacobian`` act on float arrays of shape (N, dim).  In exact
    mode ``step_exact`` maps a tuple of Fractions to a tuple of Fractions.
    """

    kind: str
    params: Any
    dim: int
    chart: str
    domain: tuple
    step: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    singular: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse: Optional[Callable[[np.ndarray], tuple]] = None
    mode: str = "floating"
    step_exact: Optional[Callable[[tuple], tuple]] = None
    periodic: bool = False
    validator: Callable[[], ValidationReport] = field(default=_always_valid)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown model kind {self.kind!r}")
        if self.mode not in MODES:
            raise ContractError(f"unknown evaluation mode {self.mode!r}")
        if self.mode == "exact" and self.step_exact is None:
            raise ContractError("exact mode needs an exact step")
        if len(self.domain) != self.dim:
            raise ContractError("domain must give one (lo, hi) pair per axis")

    @cached_property
    def validation(self) -> ValidationReport:
        return self.validator()

    def require_valid(self):
        rep = self.validation
        if not rep.ok:
            bad = rep.failures()[0]
            raise ContractError(f"model {self.kind} invalid: {bad.name}: {bad.detail}")

    def in_domain(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ok = np.ones(len(pts), dtype=bool)
        if self.periodic:
            return ok & np.all(np.isfinite(pts), axis=1)
        for i, (lo, hi) in enumerate(self.domain):
            ok &= (pts[:, i] >= lo - tol) & (pts[:, i] <= hi + tol)
        return ok

    def with_floating(self) -> "ModelHandle":
        return replace(self, mode="floating")

    def is_singular(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.singular is None:
            return np.zeros(len(pts), dtype=bool)
        return self.singular(pts)


def validate_model(model: ModelHandle) -> ValidationReport:
    """Run the parameter validator of the model's record."""
    return model.validation


@dataclass(frozen=True)
class Orbit:
    points: Any  # (m, dim) float array, or list of Fraction tuples in exact mode
    singular_step: Optional[int]
    chart: str

    @property
    def stopped_early(self) -> bool:
        return self.singular_step is not None

    def __len__(self):
        return len(self.points)

    def as_points(self):
        return [ModelPoint(tuple(p), self.chart) for p in self.points]


def _coords(start) -> tuple:
    if isinstance(start, ModelPoint):
        return tuple(start.coords)
    if np.isscalar(start) or isinstance(start, Fraction):
        return (start,)
    return tuple(start)


def orbit(model: ModelHandle, start, n: int) -> Orbit:
    """Forward orbit of length n+1, stopping early at the singular set."""
    model.require_valid()
    if n < 0:
        raise ContractError("step count must be non-negative")
    c = _coords(start)
    if len(c) != model.dim:
        raise DomainError(f"point has dimension {len(c)}, model has {model.dim}")
    if model.mode == "exact":
        return _orbit_exact(model, c, n)
    p = np.array(c, dtype=float)[None, :]
    if not model.in_domain(p)[0]:
        raise DomainError(f"start {c} outside chart {model.chart}")
    pts = [p[0].copy()]
    for i in range(n):
        if model.is_singular(p)[0]:
            return Orbit(np.array(pts), i, model.chart)
        p = model.step(p)
        if not np.all(np.isfinite(p)):
            raise NumericError(f"non-finite value at step {i + 1}", step=i + 1)
        pts.append(p[0].copy())
    if model.is_singular(p)[0]:
        return Orbit(np.array(pts), n, model.chart)
    return Orbit(np.array(pts), None, model.chart)


def _orbit_exact(model, c, n):
    for i, (lo, hi) in enumerate(model.domain):
        if not lo <= c[i] <= hi:
            raise DomainError(f"start {c} outside chart {model.chart}")
    pts = [c]
    p = c
    for i in range(n + 1):
        if model.is_singular(np.array([[float(v) for v in p]]))[0]:
            return Orbit(pts, i, model.chart)
        if i == n:
            break
        p = model.step_exact(p)
        pts.append(p)
    return Orbit(pts, None, model.chart)


def tangent_along(model: ModelHandle, start, n: int) -> list:
    """Per-step tangent matrices along the orbit of ``start``.

    The i-th matrix is the derivative at the i-th orbit point; the ordered
    product ``T[n-1] @ ... @ T[0]`` is the n-step tangent.
    """
    if model.jacobian is None:
        raise ContractError(f"model {model.kind} has no tangent map")
    orb = orbit(model.with_floating() if model.mode == "exact" else model, start, n)
    if orb.stopped_early and orb.singular_step < n:
        raise NumericError(
            f"orbit reaches the singular set at step {orb.singular_step}",
            step=orb.singular_step,
        )
    pts = np.asarray(orb.points[:n], dtype=float)
    if n == 0:
        return []
    jac = model.jacobian(pts)
    if not np.all(np.isfinite(jac)):
        bad = int(np.argmax(~np.all(np.isfinite(jac.reshape(n, -1)), axis=1)))
        raise NumericError(f"derivative overflow at step {bad}", step=bad)
    return [TangentMatrix(jac[i], ModelPoint(tuple(pts[i]), model.chart)) for i in range(n)]


def product(tangents: Sequence[TangentMatrix]) -> np.ndarray:
    """Ordered product of per-step tangents (latest on the left)."""
    if not tangents:
        raise ContractError("empty tangent sequence")
    m = np.eye(tangents[0].entries.shape[0])
    for t in tangents:
        m = t.entries @ m
    return m


def iterate(model: ModelHandle, pts: np.ndarray, n: int) -> tuple:
    """Vectorised n-step iteration of many points.

    Returns (final points, alive mask); points that hit the singular set or go
    non-finite are frozen and marked dead.
    """
    pts = np.array(pts, dtype=float, copy=True)
    alive = np.ones(len(pts), dtype=bool)
    for _ in range(n):
        alive &= ~model.is_singular(pts)
        if not alive.any():
            break
        nxt = model.step(pts[alive])
        pts[alive] = nxt
        alive &= np.all(np.isfinite(pts), axis=1)
    return pts, alive


# ---------------------------------------------------------------------------
# generic factories used by tests and as negative controls
# ---------------------------------------------------------------------------


def linear_model(matrix, domain=None) -> ModelHandle:
    a = np.array(matrix, dtype=float)
    d = a.shape[0]
    if domain is None:
        domain = tuple((-np.inf, np.inf) for _ in range(d))
    return ModelHandle(
        kind="linear",
        params=a,
        dim=d,
        chart="euclidean",
        domain=tuple(domain),
        step=lambda p: p @ a.T,
        jacobian=lambda p: np.broadcast_to(a, (len(p), d, d)).copy(),
        inverse=lambda p: (p @ np.linalg.inv(a).T, np.ones(len(p), dtype=bool)),
    )


def interval_model(f, df=None, domain=(-1.0, 1.0), finv=None, exact=None, validator=None) -> ModelHandle:
    """Wrap a scalar map of an interval (vectorised over numpy arrays)."""
    lo, hi = domain

    def step(p):
        return f(p[:, 0])[:, None]

    jac = None
    if df is not None:
        jac = lambda p: df(p[:, 0])[:, None, None]
    inv = None
    if finv is not None:

        def inv(p):
            y, ok = finv(p[:, 0])
            return y[:, None], ok

    kw = {}
    if validator is not None:
        kw["validator"] = validator
    return ModelHandle(
        kind="interval",
        params={"domain": domain},
        dim=1,
        chart="interval",
        domain=((lo, hi),),
        step=step,
        jacobian=jac,
        inverse=inv,
        mode="exact" if exact is not None else "floating",
        step_exact=(lambda c: (exact(c[0]),)) if exact is not None else None,
        **kw,
    )


def circle_doubling_model() -> ModelHandle:
    return ModelHandle(
        kind="interval",
        params={"map": "doubling"},
        dim=1,
        chart="circle",
        domain=((0.0, 1.0),),
        step=lambda p: np.mod(2.0 * p, 1.0),
        jacobian=lambda p: np.full((len(p), 1, 1), 2.0),
        periodic=True,
    )
