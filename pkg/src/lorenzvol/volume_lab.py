"""Box-subdivision covers, trapped-set volume series and escape fractions.

Covers are *sampled* outer approximations: each box is represented by a
stencil of test points, and the image of a box is replaced by the padded
bounding box of its test-point images.  Nothing here is a rigorous
enclosure.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, InsufficientDataError, ResourceError, TrappingError
from .model_core import SINGULAR_FLOOR, ModelHandle

DEFAULT_BOX_CAP = 4_000_000
CAP_ENV = "LORENZVOL_MAX_BOXES"
# image hulls grow by this multiple of the lattice midpoint defect
HULL_PAD = 2.0
CHUNK = 1 << 15


def box_cap(default: int = DEFAULT_BOX_CAP) -> int:
    raw = os.environ.get(CAP_ENV)
    return int(raw) if raw else default


@dataclass(frozen=True)
class BoxCollection:
    """Boxes of one dyadic depth inside a root box.

    Depth k splits every axis of the root into 2^k equal parts; ``indices``
    holds the integer multi-index of each kept box, sorted lexicographically.
    """

    root: tuple  # ((lo, hi), ...) as Fractions
    depth: int
    indices: np.ndarray  # (N, dim) int64

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, len(self.root))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "root", tuple((Fraction(a), Fraction(b)) for a, b in self.root))

    @classmethod
    def root_box(cls, root) -> "BoxCollection":
        return cls(root, 0, np.zeros((1, len(root)), dtype=np.int64))


    @property
    def dim(self) -> int:
        return len(self.root)

    def __len__(self):
        return len(self.indices)

    @property
    def root_volume(self) -> Fraction:
        v = Fraction(1)
        for lo, hi in self.root:
            v *= hi - lo
        return v

    @property
    def box_volume(self) -> Fraction:
        return self.root_volume / Fraction(2) ** (self.depth * self.dim)

    @property
    def measure(self) -> Fraction:
        return len(self) * self.box_volume

    def widths(self) -> np.ndarray:
        return np.array([float(hi - lo) for lo, hi in self.root]) / 2.0**self.depth

    def lows(self) -> np.ndarray:
        base = np.array([float(lo) for lo, _ in self.root])
        return base + self.indices * self.widths()

    def bounds(self) -> tuple:
        lo = self.lows()
        return lo, lo + self.widths()

    def projection(self, axis: int) -> Fraction:
        """Length of the union of the boxes' shadows on one axis."""
        lo, hi = self.root[axis]
        n = len(np.unique(self.indices[:, axis])) if len(self) else 0
        return n * (hi - lo) / 2**self.depth

    def validate(self) -> None:
        n = 2**self.depth
        if len(self) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ContractError("box index outside the root box")
        if len(np.unique(self.indices, axis=0)) != len(self):
            raise ContractError("duplicate box indices")

    def keys(self) -> np.ndarray:
        return encode(self.indices, self.depth)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Whether each point lies in a kept box (closed boxes)."""
        pts = np.atleast_2d(pts)
        w = self.widths()
        base = np.array([float(lo) for lo, _ in self.root])
        rel = (pts - base) / w
        n = 2**self.depth
        keys = np.sort(self.keys())

        def lookup(idx):
            inside = np.all((idx >= 0) & (idx < n), axis=1)
            k = encode(np.clip(idx, 0, n - 1), self.depth)
            pos = np.minimum(np.searchsorted(keys, k), len(keys) - 1)
            return inside & (keys[pos] == k) if len(keys) else np.zeros(len(idx), dtype=bool)

        ok = lookup(np.floor(rel).astype(np.int64))
        # a point on a box face may belong to either neighbour
        for offs in _face_offsets(self.dim)[1:]:
            miss = np.flatnonzero(~ok)
            if not len(miss):
                break
            ok[miss] = lookup(np.floor(rel[miss] - offs * 1e-9).astype(np.int64))
        return ok

    def rows(self):
        lo, hi = self.bounds()
        for i in range(len(self)):
            yield tuple(int(v) for v in self.indices[i]), tuple(lo[i]), tuple(hi[i])


def _face_offsets(dim):
    return [np.array(o) for o in np.ndindex(*([2] * dim))] if dim <= 3 else [np.zeros(dim)]


def encode(indices: np.ndarray, depth: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape[1] * depth > 62:
        raise ResourceError("box keys exceed 62 bits")
    key = np.zeros(len(idx), dtype=np.int64)
    for j in range(idx.shape[1]):
        key = (key << depth) | idx[:, j]
    return key


@dataclass(frozen=True)
class SubdivisionConfig:
    random_points: int = 8
    max_depth: int = 16
    cap: int = field(default_factory=box_cap)
    seed: int = 0
    pad: float = HULL_PAD
    backward: bool = True

    def stencil_size(self, dim: int) -> int:
        return 3**dim + self.random_points

    def validate(self):
        if self.random_points < 0:
            raise ContractError("random test-point count must be non-negative")
        if self.max_depth < 0 or self.cap < 1:
            raise ContractError("max depth and cap must be positive")


# ---------------------------------------------------------------------------
# test points
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Counter-based hash; u64 in, u64 out."""
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _unit_randoms(seed: int, depth: int, keys: np.ndarray, count: int, dim: int) -> np.ndarray:
    """Uniform [0,1) numbers indexed by (seed, depth, box, sample, axis)."""
    base = splitmix64(np.array([seed & _MASK], dtype=np.uint64) ^ np.uint64(depth * 0x100000001B3))
    ctr = keys.astype(np.uint64)[:, None, None] * np.uint64(count * dim + 1)
    ctr = ctr + np.arange(count * dim, dtype=np.uint64).reshape(1, count, dim)
    with np.errstate(over="ignore"):
        h = splitmix64(ctr ^ base[0])
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def test_points(boxes: BoxCollection, cfg: SubdivisionConfig) -> np.ndarray:
    """(N, m, dim) stencil: 3^dim lattice plus seeded random interior points."""
    lo, hi = boxes.bounds()
    dim = boxes.dim
    lattice = np.array(list(np.ndindex(*([3] * dim))), dtype=float) / 2.0
    frac = np.broadcast_to(lattice, (len(boxes),) + lattice.shape)
    if cfg.random_points:
        rnd = _unit_randoms(cfg.seed, boxes.depth, boxes.keys(), cfg.random_points, dim)
        frac = np.concatenate([frac, rnd], axis=1)
    w = (hi - lo)[:, None, :]
    pts = lo[:, None, :] + frac * w
    return pts


def _nudge_singular(pts: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # a lattice point on x = 0 is moved into its own box, off the singular line
    x = pts[..., 0]
    on = np.abs(x) <= SINGULAR_FLOOR
    if on.any():
        centre = 0.5 * (lo[:, None, 0] + hi[:, None, 0])
        pts[..., 0] = np.where(on, np.copysign(1e-290, np.broadcast_to(centre, x.shape)), x)
    return pts


# ---------------------------------------------------------------------------
# subdivision
# ---------------------------------------------------------------------------


def _children(boxes: BoxCollection) -> BoxCollection:
    dim = boxes.dim
    offs = np.array(list(np.ndindex(*([2] * dim))), dtype=np.int64)
    idx = (boxes.indices[:, None, :] * 2 + offs[None, :, :]).reshape(-1, dim)
    order = np.lexsort(idx.T[::-1])
    return BoxCollection(boxes.root, boxes.depth + 1, idx[order])


def _image_hulls(model: ModelHandle, boxes: BoxCollection, cfg: SubdivisionConfig, sl: slice):
    sub = BoxCollection(boxes.root, boxes.depth, boxes.indices[sl])
    lo, hi = sub.bounds()
    pts = test_points(sub, cfg)
    if model.singular is not None:
        pts = _nudge_singular(pts, lo, hi)
    n, m, dim = pts.shape
    flat = pts.reshape(-1, dim)
    usable = ~model.is_singular(flat)
    img = np.full_like(flat, np.nan)
    if usable.any():
        with np.errstate(all="ignore"):
            img[usable] = model.step(flat[usable])
    img = img.reshape(n, m, dim)
    good = np.all(np.isfinite(img), axis=2)
    bad_frac = 1.0 - good.mean() if good.size else 0.0
    if model.periodic:
        img = _unwrap(img, model)
    with np.errstate(invalid="ignore"):
        hlo = np.where(good[..., None], img, np.inf).min(axis=1)
        hhi = np.where(good[..., None], img, -np.inf).max(axis=1)
        pad = cfg.pad * _midpoint_defect(img[:, : 3**dim], dim)
    # a box whose curvature cannot be measured gets its whole hull extent as pad
    pad = np.where(np.isfinite(pad), pad, hhi - hlo)
    return hlo - pad, hhi + pad, good.any(axis=1), bad_frac


def _midpoint_defect(lattice_img: np.ndarray, dim: int) -> np.ndarray:
    """Per box and image axis, max |f(mid) - (f(a) + f(b))/2| over lattice lines.

    Zero for affine maps; for C^2 maps it bounds how far the image of a box
    bulges past the hull of its lattice images.
    """
    n = len(lattice_img)
    grid = lattice_img.reshape((n,) + (3,) * dim + (lattice_img.shape[-1],))
    worst = np.zeros((n, lattice_img.shape[-1]))
    for axis in range(1, dim + 1):
        a = np.take(grid, 0, axis=axis)
        m = np.take(grid, 1, axis=axis)
        b = np.take(grid, 2, axis=axis)
        dev = np.abs(m - 0.5 * (a + b)).reshape(n, -1, lattice_img.shape[-1])
        with np.errstate(invalid="ignore"):
            worst = np.maximum(worst, np.max(np.where(np.isnan(dev), np.inf, dev), axis=1))
    return worst


def _unwrap(img, model):
    # images of a small box on a circle: shift points next to the first one
    for j, (lo, hi) in enumerate(model.domain):
        period = hi - lo
        ref = img[:, :1, j]
        img[:, :, j] = ref + np.mod(img[:, :, j] - ref + period / 2, period) - period / 2
    return img


def _hull_cells(hlo, hhi, ok, root, depth, periodic):
    """Keys of all depth cells meeting each hull, with the owning hull index."""
    n = 2**depth
    base = np.array([float(a) for a, _ in root])
    w = np.array([float(b - a) for a, b in root]) / n
    # open faces: a hull touching a cell only along its boundary does not meet it
    with np.errstate(invalid="ignore"):
        i0 = np.floor((np.where(ok[:, None], hlo, base) - base) / w).astype(np.int64)
        i1 = np.ceil((np.where(ok[:, None], hhi, base) - base) / w).astype(np.int64) - 1
    i1 = np.maximum(i1, i0)
    if periodic:
        i1 = np.minimum(i1, i0 + n - 1)
    else:
        i0 = np.clip(i0, 0, n)
        i1 = np.clip(i1, -1, n - 1)
    span = np.maximum(i1 - i0 + 1, 0)
    span[~ok] = 0
    total = np.prod(span, axis=1)
    if total.sum() > 50_000_000:
        raise ResourceError("image hulls cover too many cells; lower the depth")
    owner = np.repeat(np.arange(len(i0)), total)
    # mixed-radix offset of each enumerated cell inside its hull
    local = np.arange(total.sum()) - np.repeat(np.cumsum(total) - total, total)
    cells = np.empty((len(owner), len(root)), dtype=np.int64)
    for j in range(len(root) - 1, -1, -1):
        sj = span[owner, j]
        cells[:, j] = i0[owner, j] + local % sj
        local //= sj
    if periodic:
        cells %= n
    return encode(cells, depth), owner


def subdivide_select(
    model: ModelHandle, boxes: BoxCollection, cfg: SubdivisionConfig, workers: int = 1
) -> BoxCollection:
    """One bisect-and-select step of the relative attractor of ``model``.

    Every axis of every kept box is halved.  A child survives if the padded
    image hull of some child meets it (forward pass) and, for invertible
    models, its own image hull meets a survivor (backward pass).
    """
    model.require_valid()
    cfg.validate()
    boxes.validate()
    if boxes.depth + 1 > cfg.max_depth:
        raise ResourceError(f"depth {boxes.depth + 1} above configured maximum {cfg.max_depth}")
    kids = _children(boxes)
    if len(kids) > cfg.cap:
        raise ResourceError(f"{len(kids)} candidate boxes exceed the cap {cfg.cap}")
    n = len(kids)
    chunks = [slice(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]

    def work(sl):
        return _image_hulls(model, kids, cfg, sl)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(sl) for sl in chunks]
    hlo = np.concatenate([p[0] for p in parts])
    hhi = np.concatenate([p[1] for p in parts])
    ok = np.concatenate([p[2] for p in parts])
    bad = sum(p[3] * (sl.stop - sl.start) for p, sl in zip(parts, chunks)) / max(n, 1)
    if bad > 0.5:
        raise ContractError(f"{bad:.0%} of test points are singular or non-finite")

    kid_keys = kids.keys()
    args = (kids.root, kids.depth, model.periodic)
    hit = np.unique(np.concatenate([_hull_cells(hlo[sl], hhi[sl], ok[sl], *args)[0] for sl in chunks]))
    keep = np.isin(kid_keys, hit)
    if cfg.backward and model.inverse is not None:
        survivors = kid_keys[keep]
        own = np.zeros(n, dtype=bool)
        for sl in chunks:
            sub = np.flatnonzero(keep[sl]) + sl.start
            if len(sub):
                cells, owner = _hull_cells(hlo[sub], hhi[sub], ok[sub], *args)
                own[sub[np.unique(owner[np.isin(cells, survivors)])]] = True
        keep &= own
    return BoxCollection(kids.root, kids.depth, kids.indices[keep])


def relative_attractor(model: ModelHandle, root, depth: int, cfg: Optional[SubdivisionConfig] = None, workers: int = 1) -> list:
    """Covers at depths 0..depth starting from the root box."""
    cfg = cfg or SubdivisionConfig(max_depth=depth)
    boxes = BoxCollection.root_box(root)
    out = [boxes]
    for _ in range(depth):
        boxes = subdivide_select(model, boxes, cfg, workers=workers)
        out.append(boxes)
    return out


# ---------------------------------------------------------------------------
# series and classification
# ---------------------------------------------------------------------------

CLASSES = ("decay-to-zero", "plateau")


@dataclass(frozen=True)
class Classification:
    label: str
    slope: float
    window: int
    threshold: float
    reason: str = "fit"

    def to_dict(self) -> dict:
        return {
            "classification": self.label,
            "slope": self.slope,
            "window": self.window,
            "threshold": self.threshold,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class VolumeSeries:
    parameters: tuple
    measures: tuple  # Fractions or floats
    counts: tuple = ()
    label: str = "sampled cover"

    def __post_init__(self):
        if len(self.parameters) != len(self.measures):
            raise ContractError("parameters and measures differ in length")
        if any(m < 0 for m in self.measures):
            raise ContractError("measures must be non-negative")

    def __len__(self):
        return len(self.measures)

    def is_non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.measures, self.measures[1:]))

    def rows(self):
        counts = self.counts or (None,) * len(self)
        return list(zip(self.parameters, self.measures, counts))


def fit_classify(series: VolumeSeries, window: int = 5, plateau_threshold: float = 0.01) -> Classification:
    """Least-squares slope of log measure over the trailing window."""
    if window < 3:
        raise ContractError("window must be at least 3")
    if window > len(series):
        raise ContractError(f"window {window} larger than series of length {len(series)}")
    par = np.array([float(p) for p in series.parameters[-window:]])
    mes = [m for m in series.measures[-window:]]
    if any(m == 0 for m in mes):
        return Classification("decay-to-zero", -math.inf, window, plateau_threshold, "trailing zeros")
    logs = np.array([math.log(m) if not isinstance(m, Fraction) else _log_fraction(m) for m in mes])
    slope = float(np.polyfit(par, logs, 1)[0])
    label = "plateau" if abs(slope) < plateau_threshold else "decay-to-zero"
    return Classification(label, slope, window, plateau_threshold)


def _log_fraction(q: Fraction) -> float:
    # ratios of huge integers overflow float(); logs of each part do not
    return math.log(q.numerator) - math.log(q.denominator)


# ---------------------------------------------------------------------------
# escape fractions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EscapeEstimate:
    fraction: float
    stderr: float
    samples: int
    steps: int
    direction: str

    def consistent_with(self, p: float, sigmas: float = 3.0) -> bool:
        se = math.sqrt(max(p * (1 - p), 0.0) / self.samples)
        return abs(self.fraction - p) <= sigmas * se


def _in_region(pts, region, periodic=False):
    if periodic:
        return np.ones(len(pts), dtype=bool)
    ok = np.ones(len(pts), dtype=bool)
    for j, (lo, hi) in enumerate(region):
        ok &= (pts[:, j] >= float(lo)) & (pts[:, j] <= float(hi))
    return ok


def escape_fraction(
    model: ModelHandle, region, samples: int, steps: int, seed: int, direction: str = "forward"
) -> EscapeEstimate:
    """Fraction of uniform samples of ``region`` whose orbit stays in it.

    ``direction="backward"`` follows unique preimages instead, which measures
    the region's ``steps``-th forward image.
    """
    if samples < 1:
        raise ContractError("need at least one sample")
    if direction not in ("forward", "backward"):
        raise ContractError(f"unknown direction {direction!r}")
    if direction == "backward" and model.inverse is None:
        raise ContractError("backward escape needs an invertible model")
    rng = np.random.default_rng(seed)
    lo = np.array([float(a) for a, _ in region])
    hi = np.array([float(b) for _, b in region])
    pts = lo + (hi - lo) * rng.random((samples, len(region)))
    alive = np.ones(samples, dtype=bool)
    for _ in range(steps):
        idx = np.flatnonzero(alive)
        if not len(idx):
            break
        cur = pts[idx]
        if direction == "forward":
            usable = ~model.is_singular(cur)
            nxt = np.full_like(cur, np.nan)
            if usable.any():
                nxt[usable] = model.step(cur[usable])
            ok = usable
        else:
            nxt, ok = model.inverse(cur)
        ok = ok & np.all(np.isfinite(nxt), axis=1)
        ok &= _in_region(np.where(ok[:, None], nxt, lo), region, model.periodic)
        pts[idx] = np.where(ok[:, None], nxt, cur)
        alive[idx] = ok
    p = float(alive.mean())
    return EscapeEstimate(p, math.sqrt(p * (1 - p) / samples), samples, steps, direction)


# ---------------------------------------------------------------------------
# trapped-set volumes of the suspension
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrappingRegion:
    """Flow box over a section rectangle: (x, y) in the rectangle, phase in [0, 1).

    Phase v stands for the point reached after the fraction v of the return
    time r(x) from the section point (x, y).
    """

    x: tuple = (Fraction(-3, 4), Fraction(3, 4))
    y: tuple = (Fraction(-3, 4), Fraction(3, 4))

    @property
    def root(self):
        return (
            (Fraction(self.x[0]), Fraction(self.x[1])),
            (Fraction(self.y[0]), Fraction(self.y[1])),
            (Fraction(0), Fraction(1)),
        )

    @property
    def volume(self) -> Fraction:
        return (Fraction(self.x[1]) - Fraction(self.x[0])) * (Fraction(self.y[1]) - Fraction(self.y[0]))


def check_trapping(spec, region: TrappingRegion, samples: int = 4096, seed: int = 0) -> None:
    """Raise TrappingError if a sampled section point's image leaves the rectangle."""
    from .geometric_lorenz import SECTION, return_map

    for j, (lo, hi) in enumerate(region.root[:2]):
        if lo < SECTION[j][0] or hi > SECTION[j][1] or lo >= hi:
            raise ContractError("trapping region must be a sub-rectangle of the section")
    rng = np.random.default_rng(seed)
    lo = np.array([float(region.x[0]), float(region.y[0])])
    hi = np.array([float(region.x[1]), float(region.y[1])])
    pts = lo + (hi - lo) * rng.random((samples, 2))
    # corners and edge midpoints as deterministic probes
    probe = np.array([[a, b] for a in (lo[0], 0.5 * (lo[0] + hi[0]), hi[0]) for b in (lo[1], 0.0, hi[1])])
    probe = probe[(probe[:, 0] != 0) & (probe[:, 1] >= lo[1]) & (probe[:, 1] <= hi[1])]
    pts = np.concatenate([probe, pts[pts[:, 0] != 0]])
    img, _ = return_map(spec, pts)
    out = ~_in_region(img, region.root[:2])
    if out.any():
        i = int(np.argmax(out))
        start = [float(v) for v in pts[i]]
        image = [float(v) for v in img[i]]
        raise TrappingError(
            f"orbit of {start} leaves the trapping region at {image}",
            witness={"start": start, "image": image},
        )


def _preimage_times(spec, susp, xy: np.ndarray, region, horizon: float) -> np.ndarray:
    """Accumulated return times along the unique backward chain of each point.

    Stops once the chain breaks or the accumulated time reaches ``horizon``;
    unbroken chains report +inf.
    """
    from .geometric_lorenz import return_inverse, return_time

    total = np.zeros(len(xy))
    alive = np.ones(len(xy), dtype=bool)
    cur = xy.copy()
    while alive.any():
        idx = np.flatnonzero(alive)
        pre, ok = return_inverse(spec, cur[idx])
        ok &= _in_region(np.where(ok[:, None], pre, 0.0), region.root[:2])
        dead = idx[~ok]
        alive[dead] = False
        go = idx[ok]
        total[go] += return_time(susp, pre[ok, 0])
        cur[go] = pre[ok]
        done = go[total[go] >= horizon]
        total[done] = np.inf
        alive[done] = False
    return total


def lifetimes(spec, susp, pts: np.ndarray, region, horizon: float) -> np.ndarray:
    """Backward survival time in the flow box of points (x, y, phase)."""
    from .geometric_lorenz import return_time

    own = pts[:, 2] * return_time(susp, pts[:, 0])
    return own + _preimage_times(spec, susp, pts[:, :2], region, horizon)


def trapped_volume_series(
    susp,
    region: Optional[TrappingRegion] = None,
    t_max: float = 30,
    grid_depth: int = 8,
    times: Optional[Sequence[float]] = None,
    workers: int = 1,
    seed: int = 0,
) -> VolumeSeries:
    """Measures of Lambda^T = points of U lying in X_t(U) for all t in [0, T].

    Membership at time T is decided on one seeded, uniformly jittered sample
    per grid cell of the flow box (phase jitter shared along each column).
    The same sample serves every T, so survivor sets are nested in T and the
    series is exactly non-increasing.
    """
    from .geometric_lorenz import derive_return_map, return_time

    region = region or TrappingRegion()
    spec = derive_return_map(susp)
    check_trapping(spec, region)
    times = tuple(range(int(t_max) + 1)) if times is None else tuple(times)
    if any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0:
        raise ContractError("times must be increasing and non-negative")
    n = 2**grid_depth
    if n**3 > box_cap(1 << 27):
        raise ResourceError(f"grid of {n**3} cells exceeds the cap")
    root = region.root
    rng = np.random.default_rng(seed)
    cells = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), axis=-1).reshape(-1, 2)
    lo = np.array([float(root[0][0]), float(root[1][0])])
    width = np.array([float(root[0][1] - root[0][0]), float(root[1][1] - root[1][0])]) / n
    xy = lo + (cells + rng.random(cells.shape)) * width
    # a sample on the singular line has no return time
    xy[xy[:, 0] == 0, 0] = 1e-290
    shift = rng.random(len(xy))
    horizon = float(times[-1])
    rows = [slice(a, min(a + CHUNK, len(xy))) for a in range(0, len(xy), CHUNK)]

    def work(sl):
        return _preimage_times(spec, susp, xy[sl], region, horizon)

    if workers > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chain = np.concatenate(list(pool.map(work, rows)))
    else:
        chain = np.concatenate([work(sl) for sl in rows])
    ret = return_time(susp, xy[:, 0])
    cell = region.volume / Fraction(n) ** 3
    counts = []
    for t in times:
        # phases (k + shift)/n with phase * r(x) + chain >= t, k = 0..n-1
        need = np.where(np.isinf(chain), -np.inf, (t - chain) / ret)
        first = np.clip(np.ceil(need * n - shift), 0, n)
        counts.append(int((n - first).sum()))
    return VolumeSeries(tuple(times), tuple(c * cell for c in counts), tuple(counts), label="sampled grid")


def flow_survival_fraction(susp, region: Optional[TrappingRegion], samples: int, t: float, seed: int) -> EscapeEstimate:
    """Monte Carlo estimate of the fraction of the flow box surviving time t backward."""
    from .geometric_lorenz import derive_return_map

    region = region or TrappingRegion()
    spec = derive_return_map(susp)
    rng = np.random.default_rng(seed)
    lo = np.array([float(a) for a, _ in region.root])
    hi = np.array([float(b) for _, b in region.root])
    pts = lo + (hi - lo) * rng.random((samples, 3))
    life = lifetimes(spec, susp, pts, region, t)
    p = float((life >= t).mean())
    return EscapeEstimate(p, math.sqrt(p * (1 - p) / samples), samples, int(t), "backward")
