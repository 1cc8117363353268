"""Batch command-line front end.

    lorenzvol --config exp.ini --out results/ [--seed N] [--workers N] [--plot STYLE]
    lorenzvol plot INPUT.csv --style line|scatter|boxes [--log] --out FIGURE.svg

Exit status: 0 success, 2 invalid input, 3 resource cap or trapping
violation, 4 numeric failure.  Errors are reported as one JSON object on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
import zlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .cantor import CantorMapSpec, GapSchedule, build_cover, hoelder_modulus, limit_measure_bracket
from .config import SAMPLED_KINDS, ExperimentConfig, load
from .errors import (
    ContractError,
    InsufficientDataError,
    LorenzVolError,
    NumericError,
    ResourceError,
    TrappingError,
)
from .geometric_lorenz import (
    ReturnMapSpec,
    SuspensionSpec,
    cross_section_stats,
    derive_return_map,
    flow_box_volume,
    return_map,
    return_map_model,
)
from .hyperbolicity import ConeSpec, cone_invariance, pushed_frame_field, splitting_estimate
from .lorenz_map import DEFAULT_CENTERS, LorenzMapSpec, distortion, invariant_cover, validate_properties
from .plot import STYLES, emit_plot
from .solenoid import SolenoidSpec, slice_cover, star_condition, verify_injectivity
from .volume_lab import (
    SubdivisionConfig,
    TrappingRegion,
    VolumeSeries,
    box_cap,
    fit_classify,
    flow_survival_fraction,
    trapped_volume_series,
)

EXIT_OK, EXIT_INVALID, EXIT_RESOURCE, EXIT_NUMERIC = 0, 2, 3, 4


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ResourceError, TrappingError)):
        return EXIT_RESOURCE
    if isinstance(exc, (NumericError, InsufficientDataError, ArithmeticError)):
        return EXIT_NUMERIC
    return EXIT_INVALID


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue().encode("utf-8")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def json_bytes(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode("utf-8")


@dataclass
class Artifact:
    name: str
    content: bytes
    plot: str | None = None  # "series" or "boxes": what --plot may render
    axes: tuple | None = None  # (x column, y column) for series plots
    log: bool = False


def subseed(seed: int, tag: str) -> int:
    """Independent 63-bit stream seed for one operation of an experiment."""
    ss = np.random.SeedSequence([seed, zlib.crc32(tag.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# spec builders
# ---------------------------------------------------------------------------


def _num(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float, Fraction)):
        raise ContractError(f"{name} must be a number, got {v!r}")
    return v


def build_schedule(cfg: ExperimentConfig) -> GapSchedule:
    sec = cfg.section("schedule")
    kind = sec.get("kind", "inverse-square")
    if kind == "constant":
        sched = GapSchedule.constant(Fraction(_num(cfg.require("schedule", "value"), "value")))
    elif kind == "inverse-square":
        sched = GapSchedule.inverse_square()
    elif kind == "explicit":
        entries = cfg.require("schedule", "entries")
        if not isinstance(entries, list):
            raise ContractError("[schedule] entries must be a list")
        sched = GapSchedule.explicit([Fraction(_num(e, "entry")) for e in entries], sec.get("tail"))
    else:
        raise ContractError(f"unknown schedule kind {kind!r}")
    sched.require_valid()
    return sched


def build_map(cfg: ExperimentConfig) -> LorenzMapSpec:
    sec = cfg.section("map")
    variant = sec.get("variant", "power-law")
    if variant == "power-law":
        spec = LorenzMapSpec.power_law(_num(sec.get("rho", 0.75), "rho"), _num(sec.get("beta", 1.8), "beta"))
    elif variant == "cantor-extension":
        cantor = CantorMapSpec(build_schedule(cfg), int(sec.get("max_depth", 30)))
        spec = LorenzMapSpec.cantor_extension(cantor)
    else:
        raise ContractError(f"unknown map variant {variant!r}")
    rep = validate_properties(spec)
    if not rep.ok:
        bad = rep.report.failures()[0]
        raise ContractError(f"map invalid: {bad.name} ({bad.detail})")
    return spec


def build_return_map(cfg: ExperimentConfig) -> ReturnMapSpec:
    sec = cfg.section("fiber")
    spec = ReturnMapSpec(
        base=build_map(cfg),
        offset=float(_num(sec.get("offset", 0.4), "offset")),
        kappa=float(_num(sec.get("kappa", 0.25), "kappa")),
        s=float(_num(sec.get("s", 1.2), "s")),
    )
    spec.require_valid()
    return spec


def build_suspension(cfg: ExperimentConfig) -> SuspensionSpec:
    sec = cfg.section("suspension")
    base = build_map(cfg) if cfg.get("map", "variant") == "cantor-extension" else None
    kw = {}
    for key in ("lambda1", "lambda2", "lambda3", "beta", "offset", "kappa", "transit"):
        if key in sec:
            kw[key] = float(_num(sec[key], key))
    susp = SuspensionSpec(base=base, **kw)
    susp.require_valid()
    return susp


def _subdivision(cfg: ExperimentConfig, seed: int, depth: int) -> SubdivisionConfig:
    caps = cfg.section("caps")
    cap = box_cap(int(caps.get("max_boxes", box_cap())))
    return SubdivisionConfig(
        random_points=int(cfg.get("run", "random_points", 8)),
        max_depth=max(depth, int(caps.get("max_depth", 16))),
        cap=cap,
        seed=seed,
    )


def _check_depth(cfg, depth):
    limit = int(cfg.get("caps", "max_depth", 16))
    if depth > limit:
        raise ResourceError(f"depth {depth} above the configured cap {limit}")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_cantor_measure(cfg: ExperimentConfig, seed, workers):
    sched = build_schedule(cfg)
    depth = int(cfg.require("run", "depth"))
    if depth < 1:
        raise ContractError("[run] depth must be >= 1")
    rows = []
    cover = None
    for k in range(1, depth + 1):
        cover = build_cover(sched, k)
        rows.append((k, len(cover), sched.lengths(k)[-1], cover.measure, float(cover.measure)))
    out = [
        Artifact(
            "measure.csv",
            csv_bytes(["depth", "intervals", "length", "measure", "measure_float"], rows),
            plot="series",
            axes=("depth", "measure"),
            log=True,
        )
    ]
    if cfg.get("run", "write_cover", depth <= 12):
        out.append(
            Artifact(
                "cover.csv",
                csv_bytes(["depth", "index", "left", "right"], [(depth, i, lo, hi) for i, (lo, hi) in enumerate(cover.intervals())]),
            )
        )
    tol = float(cfg.get("run", "tol", 1e-6))
    mid, lo, hi, terms = limit_measure_bracket(sched, tol)
    out.append(
        Artifact("limit.json", json_bytes({"schedule": sched.to_dict(), "tol": tol, "limit": mid, "lower": lo, "upper": hi, "terms": terms}))
    )
    return out


def run_hoelder(cfg, seed, workers):
    sched = build_schedule(cfg)
    alpha = float(cfg.get("run", "alpha", 0.5))
    depth = int(cfg.get("run", "depth", 25))
    spec = CantorMapSpec(sched, int(cfg.get("run", "max_depth", max(30, depth + 1))))
    spec.require_valid()
    prof = hoelder_modulus(spec, alpha, depth)
    rows = [
        (m + 1, prof.per_level[m], prof.running_max[m], prof.bridge_terms[m], prof.gap_terms[m])
        for m in range(depth)
    ]
    ratios = [b / a if a > 0 else None for a, b in zip(prof.running_max, prof.running_max[1:])]
    return [
        Artifact(
            "hoelder.csv",
            csv_bytes(["level", "value", "running_max", "bridge_term", "gap_term"], rows),
            plot="series",
            axes=("level", "running_max"),
            log=True,
        ),
        Artifact("hoelder.json", json_bytes({"alpha": alpha, "depth": depth, "schedule": sched.to_dict(), "maximum": prof.maximum, "ratios": ratios})),
    ]


def run_invariant(cfg, seed, workers):
    spec = build_map(cfg)
    depth = int(cfg.require("run", "depth"))
    rows = []
    cover = None
    for k in range(depth + 1):
        cover = invariant_cover(spec, k)
        rows.append((k, len(cover), cover.measure, float(cover.measure)))
    props = validate_properties(spec)
    head = {"map": spec.header(), "properties": props.to_dict()}
    lo, hi = cover.float_bounds()
    cov_rows = (
        [(depth, i, a, b) for i, (a, b) in enumerate(cover.intervals())]
        if cover.exact
        else [(depth, i, float(a), float(b)) for i, (a, b) in enumerate(zip(lo, hi))]
    )
    return [
        Artifact(
            "invariant.csv",
            csv_bytes(["depth", "intervals", "measure", "measure_float"], rows),
            plot="series",
            axes=("depth", "measure"),
        ),
        Artifact("cover.csv", csv_bytes(["depth", "index", "left", "right"], cov_rows)),
        Artifact("properties.json", json_bytes(head)),
    ]


def run_distortion(cfg, seed, workers):
    spec = build_map(cfg)
    ns = cfg.get("run", "n", [5, 10, 15])
    ns = ns if isinstance(ns, list) else [ns]
    radius = float(cfg.get("run", "radius", 0.05))
    centers = cfg.get("run", "centers", list(DEFAULT_CENTERS))
    rows = []
    for n in ns:
        rep = distortion(spec, int(n), radius, [float(c) for c in centers], seed=subseed(seed, f"distortion-{n}"))
        d = rep.to_dict()
        rows.append((d["n"], d["radius"], d["distortion"], d["center"], d["itinerary"], d["admissible"], d["exhaustive"]))
    return [
        Artifact(
            "distortion.csv",
            csv_bytes(["n", "radius", "distortion", "center", "itinerary", "admissible", "exhaustive"], rows),
            plot="series",
            axes=("n", "distortion"),
        )
    ]


def _cover_artifacts(stats, spec):
    series = VolumeSeries(stats.depths, stats.areas, stats.box_counts)
    proj = VolumeSeries(stats.depths, stats.projections, stats.box_counts)
    window = int(min(5, len(series)))
    rows = [(d, a, float(a), p, float(p), c) for d, a, p, c in stats.rows()]
    cover = stats.cover
    lo, hi = cover.bounds()
    cov_rows = [
        (cover.depth, int(ix[0]), int(ix[1]), float(l[0]), float(h[0]), float(l[1]), float(h[1]))
        for ix, l, h in zip(cover.indices, lo, hi)
    ]
    cls = {"label": stats.label, "base": spec.base.header()}
    if window >= 3:
        cls["area"] = fit_classify(series, window).to_dict()
        cls["projection"] = fit_classify(proj, window).to_dict()
    return [
        Artifact(
            "series.csv",
            csv_bytes(["depth", "area", "area_float", "projection", "projection_float", "boxes"], rows),
            plot="series",
            axes=("depth", "area"),
            log=True,
        ),
        Artifact("cover.csv", csv_bytes(["depth", "i", "j", "x_lo", "x_hi", "y_lo", "y_hi"], cov_rows), plot="boxes"),
        Artifact("classification.json", json_bytes(cls)),
    ]


def run_return_map_cover(cfg, seed, workers):
    spec = build_return_map(cfg)
    depth = int(cfg.require("run", "depth"))
    _check_depth(cfg, depth)
    stats = cross_section_stats(spec, depth, _subdivision(cfg, subseed(seed, "subdivide"), depth), workers=workers)
    return _cover_artifacts(stats, spec)


def run_flow_box(cfg, seed, workers):
    susp = build_suspension(cfg)
    spec = derive_return_map(susp)
    depth = int(cfg.require("run", "depth"))
    _check_depth(cfg, depth)
    eps = float(cfg.get("run", "epsilon", 0.01))
    stats = cross_section_stats(spec, depth, _subdivision(cfg, subseed(seed, "subdivide"), depth), workers=workers)
    est = flow_box_volume(susp, stats.cover, eps)
    arts = _cover_artifacts(stats, spec)
    return [a for a in arts if a.name == "series.csv"] + [Artifact("flowbox.json", json_bytes(est.to_dict()))]


def _section_seeds(spec, count, transient, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.75, 0.75, (count, 2))
    for _ in range(transient):
        pts, _ = return_map(spec, pts)
    return pts


def run_splitting(cfg, seed, workers):
    spec = build_return_map(cfg)
    n = int(cfg.get("run", "n_max", 50))
    seeds = _section_seeds(spec, int(cfg.get("run", "seeds", 1000)), int(cfg.get("run", "transient", 0)), subseed(seed, "seeds"))
    cap = cfg.get("run", "max_prefactor")
    rep = splitting_estimate(return_map_model(spec), seeds, n, int(cfg.get("run", "d_E", 1)), max_prefactor=cap)
    d = rep.to_dict()
    d["domination_bound"] = spec.domination
    return [
        Artifact("splitting.json", json_bytes(d)),
        Artifact("margins.csv", csv_bytes(["seed", "n", "margin"], rep.margin_rows())),
    ]


def run_cones(cfg, seed, workers):
    spec = build_return_map(cfg)
    model = return_map_model(spec)
    width = float(cfg.get("run", "width", 0.5))
    frame = cfg.get("run", "frame", "pushed")
    if frame == "pushed":
        cone = ConeSpec(1, width, frame_field=pushed_frame_field(model))
    elif frame == "axes":
        cone = ConeSpec(1, width, frame=np.array([[0.0, 1.0], [1.0, 0.0]]))
    else:
        raise ContractError(f"unknown cone frame {frame!r}")
    pts = _section_seeds(spec, int(cfg.get("run", "samples", 10000)), int(cfg.get("run", "transient", 40)), subseed(seed, "seeds"))
    rep = cone_invariance(model, cone, pts, int(cfg.get("run", "steps", 1)), seed=subseed(seed, "cones"))
    d = rep.to_dict()
    d["frame"] = frame
    return [Artifact("cones.json", json_bytes(d))]


def build_solenoid(cfg) -> SolenoidSpec:
    sec = cfg.section("solenoid")
    kw = {}
    if "matrix" in sec:
        kw["matrix"] = tuple(tuple(r) for r in sec["matrix"])
    if "contraction" in sec:
        kw["contraction"] = Fraction(_num(sec["contraction"], "contraction"))
    if "weights" in sec:
        kw["weights"] = tuple(Fraction(_num(w, "weight")) for w in sec["weights"])
    try:
        spec = SolenoidSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ContractError(f"solenoid record: {exc}") from None
    spec.require_valid()
    return spec


def run_solenoid(cfg, seed, workers):
    spec = build_solenoid(cfg)
    level = int(cfg.require("run", "level"))
    fibers = cfg.get("run", "fibers", [[0.0] * spec.k])
    threshold = float(cfg.get("run", "threshold", 1e-3))
    sep = verify_injectivity(spec, int(cfg.get("run", "samples", 4096)), subseed(seed, "injectivity"))
    rows = []
    stats = []
    for z in fibers:
        cov = slice_cover(spec, z, level)
        rows.extend(cov.rows())
        stats.append(cov.to_dict())
    verdicts = [v.to_dict() for v in star_condition(spec, fibers, level, threshold)]
    return [
        Artifact("slice.csv", csv_bytes(["level", "cx", "cy", "radius"], rows), plot="series", axes=("cx", "cy")),
        Artifact(
            "slice.json",
            json_bytes({"solenoid": spec.to_dict(), "injectivity": sep.to_dict(), "slices": stats, "star": verdicts}),
        ),
    ]


def run_trapped(cfg, seed, workers):
    susp = build_suspension(cfg)
    sec = cfg.section("region")
    region = TrappingRegion(
        x=tuple(Fraction(v) for v in sec.get("x", [Fraction(-3, 4), Fraction(3, 4)])),
        y=tuple(Fraction(v) for v in sec.get("y", [Fraction(-3, 4), Fraction(3, 4)])),
    )
    t_max = float(cfg.get("run", "t_max", 30))
    depth = int(cfg.get("run", "grid_depth", 8))
    series = trapped_volume_series(susp, region, t_max, depth, workers=workers, seed=subseed(seed, "grid"))
    window = int(cfg.get("run", "window", 5))
    cls = fit_classify(series, window, float(cfg.get("run", "threshold", 0.01)))
    mc_n = int(cfg.get("run", "mc_samples", 100000))
    cells = 2 ** (3 * depth)
    checks = []
    for t, _, c in series.rows():
        p = c / cells
        # normal approximation only where the expected sample count is large
        if mc_n * min(p, 1 - p) < 50:
            continue
        est = flow_survival_fraction(susp, region, mc_n, t, subseed(seed, f"mc-{t}"))
        checks.append({"t": t, "grid": p, "mc": est.fraction, "stderr": est.stderr, "consistent": est.consistent_with(p)})
    rows = [(t, m, float(m), c) for t, m, c in series.rows()]
    report = {
        "label": series.label,
        "classification": cls.to_dict(),
        "non_increasing": series.is_non_increasing(),
        "cross_validation": checks,
        "cross_validation_passed": all(c["consistent"] for c in checks),
    }
    return [
        Artifact(
            "series.csv",
            csv_bytes(["t", "measure", "measure_float", "count"], rows),
            plot="series",
            axes=("t", "measure"),
            log=True,
        ),
        Artifact("classification.json", json_bytes(report)),
    ]


RUNNERS: dict[str, Callable] = {
    "cantor-measure": run_cantor_measure,
    "hoelder": run_hoelder,
    "lorenz1d-invariant": run_invariant,
    "distortion": run_distortion,
    "return-map-cover": run_return_map_cover,
    "flow-box": run_flow_box,
    "splitting": run_splitting,
    "cones": run_cones,
    "solenoid-slice": run_solenoid,
    "trapped-volume": run_trapped,
}


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, out_dir, seed: int | None = None, workers: int = 1, plot: str | None = None) -> dict:
    """Run one experiment, write its outputs and return the manifest."""
    seed = cfg.seed if seed is None else seed
    if seed is None:
        if cfg.kind in SAMPLED_KINDS:
            raise ContractError(f"experiment {cfg.kind} needs a seed")
        seed = 0
    if workers < 1:
        raise ContractError("workers must be >= 1")
    if plot is not None and plot not in STYLES:
        raise ContractError(f"unknown plot style {plot!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ContractError(f"output directory {out} not writable: {exc.strerror}") from None
    t0 = time.perf_counter()
    artifacts = RUNNERS[cfg.kind](cfg, seed, workers)
    t_run = time.perf_counter() - t0
    timings = {cfg.kind: t_run}
    if plot is not None:
        wanted = "boxes" if plot == "boxes" else "series"
        for art in list(artifacts):
            if art.plot != wanted:
                continue
            t1 = time.perf_counter()
            x, y = art.axes or (None, None)
            svg = emit_plot(art.content.decode("utf-8"), plot, log=art.log, x=x, y=y)
            artifacts.append(Artifact(art.name.rsplit(".", 1)[0] + ".svg", svg))
            timings[f"plot:{art.name}"] = time.perf_counter() - t1
    files = []
    for art in artifacts:
        (out / art.name).write_bytes(art.content)
        files.append({"path": art.name, "sha256": hashlib.sha256(art.content).hexdigest(), "bytes": len(art.content)})
    manifest = {
        "artifact_version": __version__,
        "config_digest": cfg.digest,
        "experiment": cfg.kind,
        "seed": seed,
        "workers": workers,
        "wall_clock_seconds": time.perf_counter() - t0,
        "timings": timings,
        "outputs": files,
    }
    (out / "manifest.json").write_bytes(json_bytes(manifest))
    return manifest


def _error(exc: BaseException) -> int:
    code = exit_code(exc)
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("witness", "step", "exit_time"):
        val = getattr(exc, attr, None)
        if val is not None:
            payload[attr] = _jsonable(val)
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def _run_parser():
    p = argparse.ArgumentParser(prog="lorenzvol", description="Run a declared experiment.")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides [experiment] seed)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot", choices=STYLES, help="also render plots in this style")
    return p


def _plot_parser():
    p = argparse.ArgumentParser(prog="lorenzvol plot", description="Render a CSV output as SVG.")
    p.add_argument("input")
    p.add_argument("--style", choices=STYLES, default="line")
    p.add_argument("--log", action="store_true", help="logarithmic vertical axis")
    p.add_argument("--x", help="column for the horizontal axis")
    p.add_argument("--y", help="column for the vertical axis")
    p.add_argument("--out", required=True)
    return p


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    plotting = bool(argv) and argv[0] == "plot"
    parser = _plot_parser() if plotting else _run_parser()
    parser.__class__ = _Parser
    try:
        args = parser.parse_args(argv[1:] if plotting else argv)
    except _ArgError as exc:
        return _error(ContractError(f"usage: {exc}"))
    try:
        if plotting:
            try:
                text = Path(args.input).read_text(encoding="utf-8")
            except OSError as exc:
                raise ContractError(f"cannot read {args.input}: {exc.strerror}") from None
            Path(args.out).write_bytes(emit_plot(text, args.style, log=args.log, x=args.x, y=args.y))
            return EXIT_OK
        cfg = load(args.config)
        out = args.out or cfg.out
        if out is None:
            raise ContractError("no output directory: pass --out or set [output] dir")
        run_experiment(cfg, out, seed=args.seed, workers=args.workers, plot=args.plot)
        return EXIT_OK
    except (LorenzVolError, ArithmeticError) as exc:
        return _error(exc)
    except MemoryError as exc:
        return _error(ResourceError(str(exc) or "out of memory"))


if __name__ == "__main__":
    sys.exit(main())
