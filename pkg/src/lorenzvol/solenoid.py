"""Solenoid over an expanding torus endomorphism with contracted disk fibers.

F(z, w) = (A z mod 1, lambda_c w + theta(z)) on T^k x D, where

    theta(z) = sum_i weight_i (cos 2 pi z_i, sin 2 pi z_i).

The attractor meets each fiber {z} x D in a Cantor set; slice_cover
enumerates its level-n disk cover.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractError, ResourceError
from .model_core import Check, ModelHandle, ValidationReport, report

DEFAULT_DISK_CAP = 1 << 22


@dataclass(frozen=True)
class SolenoidSpec:
    matrix: tuple = ((2, 0), (0, 2))
    contraction: Fraction = Fraction(1, 32)
    weights: tuple = (Fraction(1, 4), Fraction(1, 16))

    def __post_init__(self):
        m = tuple(tuple(int(v) for v in row) for row in self.matrix)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "contraction", Fraction(self.contraction))
        object.__setattr__(self, "weights", tuple(Fraction(w) for w in self.weights))

    @property
    def k(self) -> int:
        return len(self.matrix)

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    @property
    def branches(self) -> int:
        return abs(int(round(np.linalg.det(self.A))))

    @cached_property
    def coset_reps(self) -> np.ndarray:
        """Integer vectors m with A^{-1} m in [0,1)^k, one per preimage branch."""
        a = self.A.astype(float)
        corners = np.array(list(itertools.product((0, 1), repeat=self.k)), dtype=float) @ a.T
        lo = np.floor(corners.min(axis=0)).astype(int)
        hi = np.ceil(corners.max(axis=0)).astype(int)
        inv = np.linalg.inv(a)
        reps = []
        for m in itertools.product(*[range(l, h + 1) for l, h in zip(lo, hi)]):
            u = inv @ np.array(m, dtype=float)
            if np.all(u >= -1e-12) and np.all(u < 1 - 1e-12):
                reps.append(m)
        return np.array(reps, dtype=np.int64).reshape(-1, self.k)

    def validate(self) -> ValidationReport:
        a = self.A
        checks = [Check("square matrix", a.ndim == 2 and a.shape[0] == a.shape[1], str(a.shape))]
        if not checks[0].passed:
            return report(*checks)
        checks.append(Check("one weight per torus axis", len(self.weights) == self.k, str(len(self.weights))))
        eig = np.abs(np.linalg.eigvals(a.astype(float)))
        checks.append(Check("expanding", bool(np.all(eig > 1)), f"min |eigenvalue| = {eig.min():.6g}"))
        checks.append(Check("|det A| >= 2", self.branches >= 2, f"|det A| = {self.branches}"))
        lam = self.contraction
        checks.append(Check("contraction in (0,1)", 0 < lam < 1, str(lam)))
        decay = self.branches * lam**2
        checks.append(Check("|det A| lambda_c^2 < 1", decay < 1, str(decay)))
        reach = lam + sum(abs(w) for w in self.weights)
        checks.append(Check("fiber image inside the unit disk", reach <= 1, str(reach)))
        if all(c.passed for c in checks):
            checks.append(
                Check("coset count", len(self.coset_reps) == self.branches, str(len(self.coset_reps)))
            )
            sep = verify_injectivity(self, samples=256, seed=0)
            checks.append(Check("disjoint branch images", sep.passed, f"margin = {sep.margin:.6g}"))
        return report(*checks)

    def require_valid(self):
        rep = self.validate()
        if not rep.ok:
            bad = rep.failures()[0]
            raise ContractError(f"solenoid invalid: {bad.name} ({bad.detail})")

    def to_dict(self) -> dict:
        return {
            "matrix": [list(r) for r in self.matrix],
            "contraction": str(self.contraction),
            "weights": [str(w) for w in self.weights],
        }


def theta(spec: SolenoidSpec, z: np.ndarray) -> np.ndarray:
    """Separation map, (N, k) -> (N, 2)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w = np.array([float(v) for v in spec.weights])
    ang = 2 * np.pi * z
    return np.stack([np.cos(ang) @ w, np.sin(ang) @ w], axis=1)


def solenoid_step(spec: SolenoidSpec, z, w) -> tuple:
    """(A z mod 1, lambda_c w + theta(z)) for arrays of base and fiber points."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if np.any(np.linalg.norm(w, axis=1) > 1 + 1e-12):
        raise ContractError("fiber point outside the unit disk")
    zn = np.mod(z @ spec.A.T.astype(float), 1.0)
    wn = float(spec.contraction) * w + theta(spec, z)
    return zn, wn


def solenoid_model(spec: SolenoidSpec) -> ModelHandle:
    k = spec.k

    def step(p):
        zn, wn = solenoid_step(spec, p[:, :k], p[:, k:])
        return np.concatenate([zn, wn], axis=1)

    return ModelHandle(
        kind="solenoid",
        params=spec,
        dim=k + 2,
        chart="torus x disk",
        domain=tuple([(0.0, 1.0)] * k + [(-1.0, 1.0), (-1.0, 1.0)]),
        step=step,
        periodic=True,
        validator=spec.validate,
    )


def preimages(spec: SolenoidSpec, z: np.ndarray) -> np.ndarray:
    """All preimages under A mod 1, shape (N, branches, k)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    inv = np.linalg.inv(spec.A.astype(float))
    shifted = z[:, None, :] + spec.coset_reps[None, :, :]
    return np.mod(shifted @ inv.T, 1.0)


@dataclass(frozen=True)
class SeparationReport:
    margin: float
    witness: tuple
    pair: tuple
    samples: int

    @property
    def passed(self) -> bool:
        return self.margin > 0

    def to_dict(self) -> dict:
        return {
            "margin": self.margin if math.isfinite(self.margin) else None,
            "witness": list(self.witness),
            "pair": list(self.pair),
            "samples": self.samples,
            "passed": self.passed,
        }


def _pair_gaps(spec: SolenoidSpec, z: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """|theta(z_i) - theta(z_j)| for preimage classes i, j of each sample.

    Written as |sum_l 2 w_l sin(pi d_l) e^{i(s_l - s_ref)}| with d the exact
    rational class offset A^{-1}(m_i - m_j) and s_l = pi (u_i + u_j)_l, so a
    pair differing along one axis evaluates to 2 w |sin(pi d)| exactly.
    """
    inv = _inverse_fraction(spec.A)
    reps = spec.coset_reps
    k = spec.k
    delta = np.array(
        [[float(sum(inv[r][c] * int(reps[a, c] - reps[b, c]) for c in range(k))) for r in range(k)] for a, b in zip(i, j)]
    )
    coef = 2 * np.array([float(w) for w in spec.weights]) * np.sin(np.pi * delta)  # (P, k)
    unreduced = (z[:, None, :] + reps[None, :, :]) @ np.linalg.inv(spec.A.astype(float)).T  # (N, b, k)
    phase = np.pi * (unreduced[:, i, :] + unreduced[:, j, :])  # (N, P, k)
    # reference phase: the first axis with a non-zero coefficient
    ref = np.argmax(coef != 0, axis=1)
    rel = phase - np.take_along_axis(phase, ref[None, :, None], axis=2)
    total = np.sum(coef[None] * np.exp(1j * rel), axis=2)
    return np.abs(total)


def _inverse_fraction(a: np.ndarray) -> list:
    """Exact inverse of a small integer matrix by Gauss-Jordan over Fractions."""
    n = len(a)
    m = [[Fraction(int(a[r][c])) for c in range(n)] + [Fraction(int(r == c)) for c in range(n)] for r in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        lead = m[col][col]
        m[col] = [v / lead for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [v - f * w for v, w in zip(m[r], m[col])]
    return [row[n:] for row in m]


def verify_injectivity(spec: SolenoidSpec, samples: int = 4096, seed: int = 0) -> SeparationReport:
    """Minimum of |theta(z_i) - theta(z_j)| - 2 lambda_c over preimage classes."""
    if samples < 1:
        raise ContractError("need at least one sample")
    rng = np.random.default_rng(seed)
    z = rng.random((samples, spec.k))
    i, j = np.triu_indices(len(spec.coset_reps), 1)
    if not len(i):
        # a single branch has nothing to separate
        return SeparationReport(math.inf, tuple(float(v) for v in z[0]), (), samples)
    gaps = _pair_gaps(spec, z, i, j)
    flat = int(np.argmin(gaps))
    s, p = divmod(flat, len(i))
    margin = float(gaps[s, p]) - 2 * float(spec.contraction)
    return SeparationReport(margin, tuple(float(v) for v in z[s]), (int(i[p]), int(j[p])), samples)


@dataclass(frozen=True)
class SliceCover:
    basepoint: tuple
    level: int
    centers: np.ndarray  # (branches^n, 2)
    radius: Fraction
    area_over_pi: Fraction
    min_gap: float

    @property
    def count(self) -> int:
        return len(self.centers)

    @property
    def area(self) -> float:
        return math.pi * float(self.area_over_pi)

    @property
    def inscribed_radius(self) -> Fraction:
        # components are disjoint disks of the common radius
        return self.radius

    def to_dict(self) -> dict:
        return {
            "basepoint": list(self.basepoint),
            "level": self.level,
            "count": self.count,
            "radius": str(self.radius),
            "area_over_pi": str(self.area_over_pi),
            "area": self.area,
            "inscribed_radius": str(self.inscribed_radius),
            "min_center_gap": self.min_gap,
        }

    def rows(self):
        r = float(self.radius)
        for c in self.centers:
            yield self.level, float(c[0]), float(c[1]), r


def slice_cover(spec: SolenoidSpec, z, n: int, cap: int = DEFAULT_DISK_CAP) -> SliceCover:
    """Level-n disk cover of the attractor's slice over the base point z."""
    if n < 0:
        raise ContractError("level must be non-negative")
    count = spec.branches**n
    if count > cap:
        raise ResourceError(f"{count} disks exceed the cap {cap}")
    z0 = np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, spec.k)
    lam = float(spec.contraction)
    centers = np.zeros((1, 2))
    level = z0
    # backward layer j contributes lambda^(j-1) theta(z_{-j})
    for j in range(1, n + 1):
        pre = preimages(spec, level)  # (M, b, k)
        th = theta(spec, pre.reshape(-1, spec.k)).reshape(pre.shape[0], pre.shape[1], 2)
        centers = (centers[:, None, :] + lam ** (j - 1) * th).reshape(-1, 2)
        level = pre.reshape(-1, spec.k)
    radius = spec.contraction**n
    area = count * radius**2
    if count > 1:
        dist, _ = cKDTree(centers).query(centers, k=2)
        gap = float(dist[:, 1].min())
    else:
        gap = math.inf
    return SliceCover(tuple(float(v) for v in z0[0]), n, centers, radius, area, gap)


@dataclass(frozen=True)
class StarVerdict:
    basepoint: tuple
    level: int
    threshold: float
    no_disk: bool
    totally_disconnected: bool
    radius: float
    min_gap: float

    def to_dict(self) -> dict:
        return {
            "basepoint": list(self.basepoint),
            "level": self.level,
            "threshold": self.threshold,
            "no_disk": self.no_disk,
            "totally_disconnected": self.totally_disconnected,
            "radius": self.radius,
            "min_center_gap": self.min_gap if math.isfinite(self.min_gap) else None,
        }


def star_condition(spec: SolenoidSpec, fibers: Sequence, n: int, threshold: float) -> list:
    """Per fiber: no disk of radius >= threshold in the level-n slice cover."""
    out = []
    for z in fibers:
        cov = slice_cover(spec, z, n)
        r = float(cov.radius)
        # a single disk is connected; otherwise gaps must exceed the diameter
        disconnected = cov.count > 1 and cov.min_gap > 2 * r
        out.append(StarVerdict(cov.basepoint, n, threshold, r < threshold, disconnected, r, cov.min_gap))
    return out
