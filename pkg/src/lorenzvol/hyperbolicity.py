"""Finite-orbit diagnostics: dominated splitting, cone invariance, pre-ball contraction.

All verdicts are statements about the sampled orbits only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, InsufficientDataError, NumericError
from .model_core import ModelHandle

PREBALL_SLACK = 1.1


def _orbits(model: ModelHandle, seeds: np.ndarray, n: int) -> tuple:
    """Orbits (S, n+1, d), per-step tangents (S, n, d, d) and a usable mask."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    s, d = seeds.shape
    if d != model.dim:
        raise ContractError(f"seeds have dimension {d}, model has {model.dim}")
    pts = np.empty((s, n + 1, d))
    jac = np.empty((s, n, d, d))
    ok = model.in_domain(seeds)
    pts[:, 0] = seeds
    cur = seeds.copy()
    for k in range(n):
        ok &= ~model.is_singular(cur)
        safe = np.where(ok[:, None], cur, seeds[:1] if ok.any() else cur)
        with np.errstate(all="ignore"):
            jac[:, k] = model.jacobian(safe)
            cur = model.step(safe)
        ok &= np.all(np.isfinite(cur), axis=1) & np.all(np.isfinite(jac[:, k]), axis=(1, 2))
        pts[:, k + 1] = cur
    return pts, jac, ok


# ---------------------------------------------------------------------------
# dominated splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplittingReport:
    rate: float
    prefactor: float
    d_E: int
    n_max: int
    seeds: int
    skipped: int
    domination: np.ndarray  # (S, n_max) products at n = 1..n_max
    margins: np.ndarray  # domination / rate^n
    contraction_rate: float
    contraction_margins: np.ndarray  # ||Df^n|E|| / contraction_rate^n
    expansion_margins: np.ndarray  # |det Df^n|F| / exp(rate_v n)
    e_hat: np.ndarray  # (S, d, d_E) at the seed
    f_hat: np.ndarray  # (S, d, d_F) at the seed
    f_hat_end: np.ndarray  # (S, d, d_F) at the endpoint
    expansion_rate: float
    max_prefactor: Optional[float] = None

    @property
    def passed(self) -> bool:
        """Domination and E-contraction rates below 1, finite margins, F expanding.

        C is the largest margin, so "every margin <= C" holds by definition;
        a declared ``max_prefactor`` additionally caps C.
        """
        finite = np.all(np.isfinite(self.margins)) and np.all(np.isfinite(self.contraction_margins))
        if not (finite and self.rate < 1 and self.contraction_rate < 1):
            return False
        if float(self.expansion_margins.min()) < 1.0:
            return False
        cap = self.max_prefactor
        return cap is None or max(self.prefactor, float(self.contraction_margins.max())) <= cap

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "prefactor": self.prefactor,
            "d_E": self.d_E,
            "n_max": self.n_max,
            "seeds": self.seeds,
            "skipped": self.skipped,
            "contraction_rate": self.contraction_rate,
            "expansion_rate": self.expansion_rate,
            "max_prefactor": self.max_prefactor,
            "max_contraction_margin": float(self.contraction_margins.max()),
            "min_expansion_margin": float(self.expansion_margins.min()),
            "passed": self.passed,
        }

    def margin_rows(self):
        for i in range(self.margins.shape[0]):
            for n in range(self.margins.shape[1]):
                yield i, n + 1, float(self.margins[i, n])


def splitting_estimate(
    model: ModelHandle,
    seeds,
    n_max: int,
    d_E: int,
    expansion_rate: float = 0.0,
    max_prefactor: Optional[float] = None,
) -> SplittingReport:
    """SVD estimate of a dominated splitting E + F along seeded orbits.

    At each n the n-step tangent M = U diag(sigma) V^T gives E-hat (trailing
    right singular vectors) and F-hat at the endpoint (leading left singular
    vectors); the domination product is sigma_{d_F+1} / sigma_{d_F}.
    """
    model.require_valid()
    d = model.dim
    if not 1 <= d_E < d:
        raise ContractError(f"d_E must lie in [1, {d - 1}]")
    if n_max < 1:
        raise ContractError("n_max must be positive")
    d_F = d - d_E
    _, jac, ok = _orbits(model, seeds, n_max)
    skipped = int((~ok).sum())
    if not ok.any():
        raise InsufficientDataError("every orbit segment reached the singular set")
    jac = jac[ok]
    s = len(jac)
    prod = np.broadcast_to(np.eye(d), (s, d, d)).copy()
    dom = np.empty((s, n_max))
    norm_e = np.empty((s, n_max))
    det_f = np.empty((s, n_max))
    for k in range(n_max):
        with np.errstate(over="ignore", invalid="ignore"):
            prod = jac[:, k] @ prod
        if not np.all(np.isfinite(prod)):
            raise NumericError(f"tangent product overflow at step {k + 1}", step=k + 1)
        sv = np.linalg.svd(prod, compute_uv=False)
        dom[:, k] = sv[:, d_F] / sv[:, d_F - 1]
        norm_e[:, k] = sv[:, d_F]
        det_f[:, k] = np.prod(sv[:, :d_F], axis=1)
    u, sv, vt = np.linalg.svd(prod)
    rate = float(np.max(dom[:, -1] ** (1.0 / n_max)))
    c_rate = float(np.max(norm_e[:, -1] ** (1.0 / n_max)))
    steps = np.arange(1, n_max + 1)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        margins = dom / rate**steps
        contraction = norm_e / c_rate**steps
        expansion = det_f / np.exp(expansion_rate * steps)
    prefactor = float(np.max(margins)) if np.all(np.isfinite(margins)) else math.inf
    v = np.transpose(vt, (0, 2, 1))
    return SplittingReport(
        rate=rate,
        prefactor=prefactor,
        d_E=d_E,
        n_max=n_max,
        seeds=s + skipped,
        skipped=skipped,
        domination=dom,
        margins=margins,
        contraction_rate=c_rate,
        contraction_margins=contraction,
        expansion_margins=expansion,
        e_hat=v[:, :, d_F:],
        f_hat=v[:, :, :d_F],
        f_hat_end=u[:, :, :d_F],
        expansion_rate=expansion_rate,
        max_prefactor=max_prefactor,
    )


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConeSpec:
    """Cone of width a around the F-block of an orthonormal frame.

    ``frame`` is a fixed (d, d) orthonormal matrix whose first d_E columns
    span E; ``frame_field`` (points -> (N, d, d)) overrides it pointwise.
    """

    d_E: int
    width: float
    frame: Optional[np.ndarray] = None
    frame_field: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def validate(self, dim: int):
        if not 1 <= self.d_E < dim:
            raise ContractError(f"d_E must lie in [1, {dim - 1}]")
        if not 0 < self.width <= 1:
            raise ContractError("cone width must lie in (0, 1]")
        if self.frame is not None:
            q = np.asarray(self.frame, dtype=float)
            if q.shape != (dim, dim) or not np.allclose(q.T @ q, np.eye(dim), atol=1e-10):
                raise ContractError("cone frame must be orthonormal")

    def frames(self, pts: np.ndarray) -> np.ndarray:
        if self.frame_field is not None:
            return self.frame_field(pts)
        d = pts.shape[1]
        q = np.eye(d) if self.frame is None else np.asarray(self.frame, dtype=float)
        return np.broadcast_to(q, (len(pts), d, d))


@dataclass(frozen=True)
class ConeReport:
    forward_ratio: float
    backward_ratio: float
    samples: int
    skipped: int
    width: float

    @property
    def passed(self) -> bool:
        return self.forward_ratio < 1 and self.backward_ratio < 1

    def to_dict(self) -> dict:
        return {
            "forward_ratio": self.forward_ratio,
            "backward_ratio": self.backward_ratio,
            "samples": self.samples,
            "skipped": self.skipped,
            "width": self.width,
            "passed": self.passed,
        }


def _unit_directions(k: int, count: int, rng) -> np.ndarray:
    if k == 1:
        return np.array([[1.0], [-1.0]])
    axes = np.concatenate([np.eye(k), -np.eye(k)])
    rnd = rng.normal(size=(count, k))
    rnd /= np.linalg.norm(rnd, axis=1, keepdims=True)
    return np.concatenate([axes, rnd])


def _boundary(d_E, d_F, width, rng, narrow="E", count=16):
    """Cone boundary vectors in frame coordinates (E block first).

    ``narrow="E"`` gives |v_E| = width |v_F| (the F-cone), ``"F"`` gives
    |v_F| = width |v_E| (the E-cone).
    """
    ue = _unit_directions(d_E, count, rng)
    uf = _unit_directions(d_F, count, rng)
    se, sf = (width, 1.0) if narrow == "E" else (1.0, width)
    return np.array([np.concatenate([se * e, sf * f]) for e, f in itertools.product(ue, uf)])


def _width(vecs_frame: np.ndarray, d_E: int) -> np.ndarray:
    e = np.linalg.norm(vecs_frame[..., :d_E], axis=-1)
    f = np.linalg.norm(vecs_frame[..., d_E:], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(f > 0, e / f, np.inf)


def cone_invariance(model: ModelHandle, cone: ConeSpec, seeds, steps: int = 1, seed: int = 0) -> ConeReport:
    """Largest width ratio of the one-step image of the F-cone (and pre-image of the E-cone).

    Samples are every orbit point p_0..p_{steps-1} of every seed; at each,
    boundary vectors of the F-cone are mapped by Df(p) and measured in the
    frame at f(p).  The E-cone at f(p) is pulled back by Df(p)^{-1}.
    """
    model.require_valid()
    cone.validate(model.dim)
    d, d_E = model.dim, cone.d_E
    d_F = d - d_E
    pts, jac, ok = _orbits(model, seeds, steps)
    skipped = int((~ok).sum())
    if not ok.any():
        raise InsufficientDataError("every orbit segment reached the singular set")
    base = pts[ok, :steps].reshape(-1, d)
    img = pts[ok, 1 : steps + 1].reshape(-1, d)
    jac = jac[ok].reshape(-1, d, d)
    q0 = cone.frames(base)
    q1 = cone.frames(img)
    rng = np.random.default_rng(seed)
    bf = _boundary(d_E, d_F, cone.width, rng, narrow="E")
    be = _boundary(d_E, d_F, cone.width, rng, narrow="F")
    # F cone: v = Q0 c, image measured as Q1^T J Q0 c
    fwd = np.einsum("nji,njk,nkl,ml->nmi", q1, jac, q0, bf)
    forward = float(np.max(_width(fwd, d_E))) / cone.width
    # E cone at the image: v = Q1 c, pulled back by J^{-1}, measured in Q0
    with np.errstate(all="ignore"):
        inv = np.linalg.inv(jac)
    bwd = np.einsum("nji,njk,nkl,ml->nmi", q0, inv, q1, be)
    e = np.linalg.norm(bwd[..., :d_E], axis=-1)
    f = np.linalg.norm(bwd[..., d_E:], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        back = np.where(e > 0, f / e, np.inf)
    backward = float(np.max(back)) / cone.width
    return ConeReport(forward, backward, len(base), skipped, cone.width)


def pushed_frame_field(model: ModelHandle, history: int = 30, unstable=None) -> Callable:
    """Frame field whose F-block is the forward push of a fixed direction.

    For a point p the orbit is pulled back up to ``history`` steps with the
    model inverse, the unstable guess is pushed forward to p and normalised;
    E is its orthogonal complement.  Only for two-dimensional models.
    """
    if model.dim != 2 or model.inverse is None:
        raise ContractError("pushed frames need an invertible planar model")
    guess = np.array([1.0, 0.0]) if unstable is None else np.asarray(unstable, dtype=float)

    def field(pts):
        pts = np.atleast_2d(pts)
        chain, alive_at = [pts], []
        alive = np.ones(len(pts), dtype=bool)
        for _ in range(history):
            pre, ok = model.inverse(chain[-1])
            alive = alive & ok
            chain.append(np.where(alive[:, None], pre, chain[-1]))
            alive_at.append(alive)
        vec = np.broadcast_to(guess, pts.shape).copy()
        for j in range(history, 0, -1):
            moved = np.einsum("nij,nj->ni", model.jacobian(chain[j]), vec)
            moved /= np.linalg.norm(moved, axis=1, keepdims=True)
            vec = np.where(alive_at[j - 1][:, None], moved, vec)
        f = vec / np.linalg.norm(vec, axis=1, keepdims=True)
        e = np.stack([-f[:, 1], f[:, 0]], axis=1)
        return np.stack([e, f], axis=2)

    return field


# ---------------------------------------------------------------------------
# pre-balls
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreballTable:
    ratios: tuple  # k = 1..n
    bounds: tuple
    rate: float
    slack: float
    view: str

    @property
    def passed(self) -> bool:
        return all(r <= b for r, b in zip(self.ratios, self.bounds))

    def rows(self):
        return [(k + 1, r, b) for k, (r, b) in enumerate(zip(self.ratios, self.bounds))]


def preball_contraction(
    step: Callable[[np.ndarray], np.ndarray],
    inverse: Callable[[np.ndarray], tuple],
    center,
    direction,
    radius: float,
    n: int,
    rate: float,
    view: str = "backward",
    samples: int = 33,
    slack: float = PREBALL_SLACK,
) -> PreballTable:
    """Contraction table for a disk pulled back n times by ``inverse``.

    Level j holds f^{-j}(disk).  In the ``backward`` view the k-th ratio is
    the largest dist(level n) / dist(level n-k) over sampled pairs, i.e. the
    contraction of k inverse steps; the ``forward`` view inverts the roles,
    for disks along contracted directions.  The bound is slack * rate^{k/2}.
    """
    if view not in ("backward", "forward"):
        raise ContractError(f"unknown view {view!r}")
    if n < 0 or radius <= 0:
        raise ContractError("need n >= 0 and a positive radius")
    if n == 0:
        return PreballTable((), (), rate, slack, view)
    c = np.atleast_1d(np.asarray(center, dtype=float))
    u = np.atleast_1d(np.asarray(direction, dtype=float))
    u = u / np.linalg.norm(u)
    t = np.linspace(-1.0, 1.0, samples)
    pts = c + radius * t[:, None] * u
    levels = [pts]
    for j in range(n):
        pre, ok = inverse(levels[-1])
        if not np.all(ok):
            raise ContractError(f"inverse branch undefined at pull-back step {j + 1}")
        levels.append(np.asarray(pre, dtype=float).reshape(pts.shape))
    i, j = np.triu_indices(samples, 1)

    def dists(p):
        return np.linalg.norm(p[i] - p[j], axis=1)

    deep = dists(levels[n])
    ratios, bounds = [], []
    for k in range(1, n + 1):
        near = dists(levels[n - k])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = deep / near if view == "backward" else near / deep
        ratios.append(float(np.max(r)))
        bounds.append(slack * rate ** (k / 2))
    return PreballTable(tuple(ratios), tuple(bounds), rate, slack, view)
