"""Experiment configuration, pipelines and run manifests.

A run is described by one JSON document. Each pipeline writes into its own
subdirectory of the output directory and returns metrics plus named boolean
assertions; the manifest collects them together with the config hash, package
versions and wall-clock times.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import platform
import tempfile
import threading
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .blaschke_family import (HermanBlaschke, critical_orbit_clearance, critical_points, fixed_points,
                              save_registry, solve_lambda, validate_family)
from .bubbles_puzzles import (OrbitCombinatorics, PuzzleTower, fiber_diameter, save_polyline_f32,
                              trapping_check)
from .cf_engine import RotationNumber, return_times, value, verify_growth_lemmas, verify_nested_arcs
from .circle_maps import CircleMapLift, verify_real_bounds
from .conformal_geometry import (AnnulusSpec, modulus_annulus, round_annulus, square)
from .rays_potentials import check_equivariance, equipotential, save_scene, scene_json, trace_rays

THREADS_ENV = "SIEGELAB_THREADS"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


def thread_budget(requested: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, requested or cap))


# ---------------------------------------------------------------------------
# configuration

DEFAULT_EXPERIMENTS = ("cf_lemmas", "blaschke", "verify_circle", "rays", "modulus_calibration",
                       "puzzle_nesting", "puzzle_moduli", "fiber_shrinkage", "trapping")

DEFAULT_SECTIONS = {
    "cf": {"samples": 1000, "bound": 10, "length": 20},
    "circle": {"n_max": 12, "plateau_depth": 8},
    "rays": {"count": 64, "depth": 20, "levels": [1.5, 2.0, 4.0], "samples": 256},
    "modulus": {"resolutions": [256, 512, 1024]},
    "puzzle": {"size": 384, "scales": 6},
    "fiber": {"angles": 5, "depths": [0, 1, 2, 3, 5, 8, 12, 16, 20, 25, 30], "size": 256},
    "trapping": {"n_max": 6, "size": 96},
}

DEFAULT_TOLERANCES = {
    "lambda": 1e-8, "critical": 1e-8, "plateau": 1.25, "r_squared": 0.99,
    "potential": 1e-7, "ray_mismatch": 1e-6, "round_annulus": 0.02, "ladder_stability": 0.01,
    "containment_pixels": 1.5, "modulus_ratio": 0.5, "fiber_ratio": 1e-2, "equivariance": 0.99,
}


@dataclass
class ExperimentConfig:
    rho: list[int]
    member: dict = field(default_factory=lambda: {"d": 2, "zeros": [[1 / 3, 0.0]]})
    experiments: list[str] = field(default_factory=lambda: list(DEFAULT_EXPERIMENTS))
    sections: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_SECTIONS))
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: str = "runs/default"
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        merged = copy.deepcopy(DEFAULT_SECTIONS)
        for k, v in (self.sections or {}).items():
            merged.setdefault(k, {}).update(v)
        self.sections = merged
        self.tolerances = {**DEFAULT_TOLERANCES, **(self.tolerances or {})}
        self.validate()

    def validate(self) -> None:
        try:
            RotationNumber(tuple(self.rho))
        except ValueError as exc:
            raise ConfigError(f"rho: {exc}") from None
        if len(self.rho) < 8:
            raise ConfigError("rho needs at least 8 partial quotients")
        for k, v in self.tolerances.items():
            if not v > 0:
                raise ConfigError(f"tolerance {k} must be positive")
        unknown = set(self.experiments) - set(PIPELINES)
        if unknown:
            raise ConfigError(f"unknown experiments: {sorted(unknown)}")
        for name, sec in self.sections.items():
            for k, v in sec.items():
                vals = v if isinstance(v, list) else [v]
                if any(isinstance(x, (int, float)) and x < 0 for x in vals):
                    raise ConfigError(f"{name}.{k} must be nonnegative")
        if self.sections["circle"]["n_max"] < 3:
            raise ConfigError("circle.n_max must be at least 3")
        if self.sections["circle"]["n_max"] + 2 > len(self.rho):
            raise ConfigError("circle.n_max exceeds the rotation-number prefix")
        if self.sections["puzzle"]["scales"] + 8 > len(self.rho):
            raise ConfigError("puzzle.scales exceeds the rotation-number prefix")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be positive")

    def rotation_number(self) -> RotationNumber:
        return RotationNumber(tuple(self.rho))

    def to_json(self) -> dict:
        return {"rho": list(self.rho), "member": self.member, "experiments": list(self.experiments),
                "sections": self.sections, "tolerances": self.tolerances, "out": self.out,
                "seed": self.seed, "threads": self.threads}

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        known = {"rho", "member", "experiments", "sections", "tolerances", "out", "seed", "threads"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "rho" not in data:
            raise ConfigError("config needs rho")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def digest(self) -> str:
        """Hash of everything that affects results (output location and thread count excluded)."""
        body = self.to_json()
        body.pop("out")
        body.pop("threads")
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def parse_rho(text: str) -> list[int]:
    """'golden:30', 'silver:20' or a comma separated coefficient list."""
    if ":" in text:
        name, n = text.split(":", 1)
        coeff = {"golden": 1, "silver": 2}.get(name)
        if coeff is None:
            raise ConfigError(f"unknown named rotation number {name}")
        return [coeff] * int(n)
    return [int(a) for a in text.replace(" ", "").split(",") if a]


# ---------------------------------------------------------------------------
# shared state per run


class RunContext:
    """Caches the solved member and puzzle towers so concurrent pipelines share them."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._lock = threading.Lock()
        self._member: HermanBlaschke | None = None
        self._towers: dict[int, PuzzleTower] = {}
        self._tower_locks: dict[int, threading.Lock] = {}

    def member(self) -> HermanBlaschke:
        with self._lock:
            if self._member is None:
                self._member = build_member(self.config)
            return self._member

    def tower(self, size: int) -> PuzzleTower:
        with self._lock:
            lock = self._tower_locks.setdefault(size, threading.Lock())
        F = self.member()
        with lock:
            if size not in self._towers:
                self._towers[size] = PuzzleTower(F, self.config.rotation_number(), size=size)
            return self._towers[size]


def build_member(config: ExperimentConfig) -> HermanBlaschke:
    m = config.member
    if m.get("kind") == "rigid":
        raise ConfigError("a rigid rotation has no Blaschke member")
    zeros = tuple(complex(*z) for z in m["zeros"])
    if "lambda" in m:
        return HermanBlaschke(int(m["d"]), complex(*m["lambda"]), zeros)
    try:
        lam = solve_lambda(zeros, int(m["d"]), config.rotation_number(), config.tolerances["lambda"])
    except Exception as exc:
        raise StageError("solve_lambda", exc) from exc
    return HermanBlaschke(int(m["d"]), lam, zeros)


# ---------------------------------------------------------------------------
# output helpers


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, data) -> None:
    atomic_write_text(path, json.dumps(data, indent=1, default=_jsonable))


def write_table(path, rows: list[dict], meta: dict) -> None:
    """CSV table with a JSON sidecar of metadata (same stem, .json)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    os.replace(tmp, path)
    write_json(path.with_suffix(".json"), meta)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


@dataclass
class ExperimentResult:
    name: str
    metrics: dict
    assertions: dict[str, bool]
    seconds: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(self.assertions.values())

    def to_json(self):
        return {"passed": self.passed, "assertions": self.assertions, "metrics": self.metrics,
                "seconds": self.seconds, "error": self.error}


# ---------------------------------------------------------------------------
# pipelines


def run_cf_lemmas(ctx: RunContext, out: Path) -> ExperimentResult:
    sec = ctx.config.sections["cf"]
    rng = np.random.default_rng(ctx.config.seed)
    failures = []
    for k in range(sec["samples"]):
        coeffs = tuple(int(a) for a in rng.integers(1, sec["bound"] + 1, sec["length"]))
        rho = RotationNumber(coeffs, bound=sec["bound"])
        lemmas = verify_growth_lemmas(rho)
        arcs = verify_nested_arcs(rho)
        if not lemmas.ok or not all(a.holds for a in arcs):
            failures.append(list(coeffs))
    rho = ctx.config.rotation_number()
    times = return_times(rho)
    write_json(out / "return_times.json", times.to_json())
    write_json(out / "failures.json", failures)
    return ExperimentResult("cf_lemmas", {"samples": sec["samples"], "failures": len(failures)},
                            {"growth_and_arc_lemmas": not failures})


def run_member(ctx: RunContext, out: Path) -> ExperimentResult:
    F = ctx.member()
    rho = ctx.config.rotation_number()
    report = validate_family(F, rho, ctx.config.tolerances["lambda"])
    crit = critical_points(F)
    save_registry([F], out / "registry.json")
    metrics = {"lambda": [F.lam.real, F.lam.imag], "rotation_estimate": report.rotation_estimate,
               "critical_points": [{"point": [c.location.real, c.location.imag], "degree": c.local_degree,
                                    "on_circle": c.on_circle} for c in crit.finite()],
               "fixed_points": [[z.real, z.imag] for z in fixed_points(F) if np.isfinite(z)],
               "orbit_clearance": critical_orbit_clearance(F)}
    cubic = crit.near(1 + 0j, ctx.config.tolerances["critical"])
    return ExperimentResult("blaschke", metrics,
                            {"family_valid": report.ok,
                             "cubic_critical_point_at_1": cubic is not None and cubic.local_degree == 3})


def run_verify_circle(ctx: RunContext, out: Path) -> ExperimentResult:
    cfg = ctx.config
    sec = cfg.sections["circle"]
    tol = cfg.tolerances
    rho = cfg.rotation_number()
    n_max = sec["n_max"]
    metrics: dict = {}
    checks: dict[str, bool] = {}
    if cfg.member.get("kind") == "rigid":
        lift = CircleMapLift.rigid(float(value(rho)))
    else:
        F = ctx.member()
        try:
            report = validate_family(F, rho, tol["lambda"])
        except Exception as exc:
            raise StageError("validate_family", exc) from exc
        crit = [c for c in critical_points(F).points if c.local_degree == 3]
        metrics["lambda"] = [F.lam.real, F.lam.imag]
        metrics["rotation_error"] = abs(report.rotation_estimate - float(value(rho)))
        metrics["critical_distance"] = min((abs(c.location - 1) for c in crit), default=math.inf)
        checks["rotation_number"] = metrics["rotation_error"] < tol["lambda"]
        checks["cubic_critical_point"] = metrics["critical_distance"] < tol["critical"]
        lift = F.circle_lift()
    try:
        bounds = verify_real_bounds(lift, rho, n_max)
    except Exception as exc:
        raise StageError("verify_real_bounds", exc) from exc
    try:
        lemmas = verify_growth_lemmas(rho, n_max)
    except Exception as exc:
        raise StageError("verify_growth_lemmas", exc) from exc
    K = bounds.K
    early = max(K[n] for n in K if n <= sec["plateau_depth"])
    metrics.update({"K": {str(n): K[n] for n in K}, "K_max": max(K.values()), "K_max_early": early,
                    "decay": bounds.decay, "r_squared": bounds.r_squared,
                    "lemma_matrix": {k: v for k, v in lemmas.clauses().items()}})
    checks["growth_lemmas"] = lemmas.ok
    if cfg.member.get("kind") != "rigid":
        checks["plateau"] = max(K.values()) <= tol["plateau"] * early
        checks["geometric_decay"] = bounds.r_squared > tol["r_squared"]
    rows = [{"n": n, "K": K[n], "arc_length": bounds.arc_lengths.get(n, float("nan"))} for n in sorted(K)]
    write_table(out / "k_table.csv", rows, {"rho": list(rho.coeffs), "slope": bounds.slope,
                                            "intercept": bounds.intercept, "r_squared": bounds.r_squared})
    return ExperimentResult("verify_circle", metrics, checks)


def run_rays(ctx: RunContext, out: Path) -> ExperimentResult:
    sec = ctx.config.sections["rays"]
    tol = ctx.config.tolerances
    F = ctx.member()
    angles = np.arange(sec["count"]) / sec["count"]
    rays = trace_rays(F, angles, depth=sec["depth"])
    eqs = [equipotential(F, L, sec["samples"]) for L in sec["levels"]]
    rep = check_equivariance(F, rays, eqs)
    save_scene(out / "scene.json", scene_json(rays, eqs))
    landed = sum(r.landing is not None for r in rays)
    return ExperimentResult("rays", {**rep.to_json(), "rays": len(rays), "landed": landed},
                            {"green_equivariance": rep.potential_defect < tol["potential"],
                             "ray_pushforward": rep.ray_mismatch < tol["ray_mismatch"]})


SQUARE_FRAME_WINDOW = (-2 - 2j, 2 + 2j)


def run_modulus_calibration(ctx: RunContext, out: Path) -> ExperimentResult:
    res = tuple(ctx.config.sections["modulus"]["resolutions"])
    tol = ctx.config.tolerances
    m1 = modulus_annulus(round_annulus(1.0, math.exp(2 * math.pi), resolutions=res))
    m2 = modulus_annulus(round_annulus(1.0, math.exp(4 * math.pi), resolutions=res))
    frame = modulus_annulus(AnnulusSpec(square(0, 3), square(0, 1), res, window=SQUARE_FRAME_WINDOW))
    extrap = ladder_extrapolates(frame.ladder)
    spread = (max(extrap) - min(extrap)) / abs(frame.extrapolated)
    for name, est in (("round_1", m1), ("round_2", m2), ("square_frame", frame)):
        write_json(out / f"{name}.json", est.to_json())
    return ExperimentResult("modulus_calibration",
                            {"round_1": m1.extrapolated, "round_2": m2.extrapolated,
                             "square_frame": frame.extrapolated, "square_frame_error": frame.error,
                             "square_frame_spread": spread},
                            {"round_1": abs(m1.extrapolated - 1) < tol["round_annulus"],
                             "round_2": abs(m2.extrapolated - 2) < 2 * tol["round_annulus"],
                             "square_frame_stable": spread < tol["ladder_stability"]})


def ladder_extrapolates(ladder) -> list[float]:
    """First-order Richardson value from every consecutive pair of the ladder."""
    out = []
    for (n1, a), (n2, b) in zip(ladder, ladder[1:]):
        r = n2 / n1
        out.append((r * b - a) / (r - 1))
    return out


def _scales(ctx: RunContext, tower: PuzzleTower) -> range:
    return range(tower.n0, tower.n0 + ctx.config.sections["puzzle"]["scales"] + 1)


def run_puzzle_nesting(ctx: RunContext, out: Path) -> ExperimentResult:
    sec = ctx.config.sections["puzzle"]
    tol = ctx.config.tolerances
    tower = ctx.tower(sec["size"])
    rows = []
    ok_nest = ok_sep = True
    for n in _scales(ctx, tower):
        inner, compact = tower.nesting(n)
        ok_nest &= inner.excess_pixels <= tol["containment_pixels"]
        ok_sep &= compact.separation > 0
        disk = tower.disk(n)
        rows.append({"n": n, "contained_fraction": inner.contained_fraction,
                     "excess_pixels": inner.excess_pixels, "separation": compact.separation,
                     "diameter": disk.region.diameter(), "degree": disk.degree,
                     "base_start": disk.region.base_arc.start, "base_end": disk.region.base_arc.end})
    for n, disk in sorted(tower.disks.items()):
        planar = disk.region.planar()
        write_json(out / f"D{n}.json", {**planar.to_json(), "scale": n, "depth": disk.depth,
                                        "log": [s.to_json() for s in disk.log]})
        save_polyline_f32(out / f"D{n}.f32", planar.boundary)
    write_table(out / "nesting.csv", rows, {"n0": tower.n0, "size": sec["size"]})
    return ExperimentResult("puzzle_nesting",
                            {"n0": tower.n0, "separations": [r["separation"] for r in rows],
                             "excess_pixels": [r["excess_pixels"] for r in rows],
                             "degrees": [r["degree"] for r in rows]},
                            {"nested": bool(ok_nest), "compactly_nested": bool(ok_sep)})


def run_puzzle_moduli(ctx: RunContext, out: Path) -> ExperimentResult:
    sec = ctx.config.sections["puzzle"]
    tol = ctx.config.tolerances
    res = tuple(ctx.config.sections["modulus"]["resolutions"])
    tower = ctx.tower(sec["size"])
    top = tower.n0 + sec["scales"]
    rows = []
    precondition = True
    for n in range(tower.n0 + 2, top + 1):
        _, compact = tower.nesting(n - 2)
        precondition &= compact.separation > 0
        spec = AnnulusSpec(tower.disk(n - 2).region, tower.disk(n).region, res)
        est = modulus_annulus(spec)
        rows.append({"n": n, "modulus": est.extrapolated, "error": est.error, "finest": est.value})
        write_json(out / f"A{n}.json", est.to_json())
    mods = [r["modulus"] for r in rows]
    write_table(out / "moduli.csv", rows, {"n0": tower.n0, "resolutions": list(res)})
    return ExperimentResult("puzzle_moduli",
                            {"moduli": mods, "errors": [r["error"] for r in rows], "min": min(mods),
                             "max": max(mods)},
                            {"nesting_precondition": bool(precondition),
                             "positive": all(m > 0 for m in mods),
                             "no_degeneration": min(mods) >= tol["modulus_ratio"] * max(mods)})


def fiber_angles(ctx: RunContext) -> list[float]:
    rng = np.random.default_rng(ctx.config.seed)
    return [0.0] + [float(x) for x in rng.random(ctx.config.sections["fiber"]["angles"])]


def run_fiber_shrinkage(ctx: RunContext, out: Path) -> ExperimentResult:
    sec = ctx.config.sections["fiber"]
    tol = ctx.config.tolerances
    F = ctx.member()
    comb = OrbitCombinatorics(F, ctx.config.rotation_number())
    curves = {}
    errors = {}
    for s in fiber_angles(ctx):
        try:
            curves[s] = fiber_diameter(F, comb, s, max(sec["depths"]), sec["size"], sec["depths"])
        except Exception as exc:  # per-angle failures are reported, the run continues
            errors[repr(s)] = f"{type(exc).__name__}: {exc}"
    monotone = all(all(b <= a * (1 + 1e-12) for (_, a), (_, b) in zip(c, c[1:])) for c in curves.values())
    ratios = {repr(s): c[-1][1] / c[0][1] for s, c in curves.items()}
    rates = {}
    for s, c in curves.items():
        n = np.array([k for k, _ in c if k > 0], dtype=float)
        d = np.array([x for k, x in c if k > 0])
        rates[repr(s)] = float(np.polyfit(n, np.log(d), 1)[0]) if n.size > 1 else float("nan")
    rows = [{"angle": s, "depth": n, "diameter": d} for s, c in curves.items() for n, d in c]
    write_table(out / "fibers.csv", rows, {"seed": ctx.config.seed, "depths": sec["depths"]})
    return ExperimentResult("fiber_shrinkage",
                            {"final_ratio": ratios, "log_decay_rate": rates, "errors": errors,
                             "curves": {repr(s): [d for _, d in c] for s, c in curves.items()}},
                            {"all_angles_ran": not errors, "monotone": monotone,
                             "shrinks_below_ratio": bool(curves) and all(
                                 r < tol["fiber_ratio"] for r in ratios.values())})


def run_trapping(ctx: RunContext, out: Path) -> ExperimentResult:
    sec = ctx.config.sections["trapping"]
    tol = ctx.config.tolerances
    F = ctx.member()
    comb = OrbitCombinatorics(F, ctx.config.rotation_number())
    try:
        rep = trapping_check(F, comb, sec["n_max"], sec["size"], seed=ctx.config.seed)
    except Exception as exc:
        raise StageError("fixed_points", exc) from exc
    metrics = {"N": rep.first_trapping_depth, "fixed_points": [[z.real, z.imag] for z in rep.fixed_points],
               "equivariance": {str(k): v for k, v in rep.equivariance.items()},
               "distances": {str(k): v for k, v in rep.distances.items()}}
    write_json(out / "trapping.json", metrics)
    return ExperimentResult("trapping", metrics,
                            {"finite_N": rep.first_trapping_depth is not None,
                             "origin_infinity_outside": rep.origin_infinity_outside,
                             "equivariance": all(v >= tol["equivariance"] for v in rep.equivariance.values())})


PIPELINES = {
    "blaschke": run_member,
    "cf_lemmas": run_cf_lemmas,
    "verify_circle": run_verify_circle,
    "rays": run_rays,
    "modulus_calibration": run_modulus_calibration,
    "puzzle_nesting": run_puzzle_nesting,
    "puzzle_moduli": run_puzzle_moduli,
    "fiber_shrinkage": run_fiber_shrinkage,
    "trapping": run_trapping,
}

DESCRIPTIONS = {
    "blaschke": "solve lambda for the configured zeros, critical and fixed points, registry file",
    "cf_lemmas": "return-time growth inequalities and nested arcs on random bounded-type prefixes",
    "verify_circle": "solve lambda, real a priori bounds (K_n table, decay fit) and growth lemmas",
    "rays": "external rays and equipotentials with the Böttcher equivariance check",
    "modulus_calibration": "round annuli and square frame against the modulus engine",
    "puzzle_nesting": "puzzle disks D^n, containment and boundary separation",
    "puzzle_moduli": "moduli of the puzzle annuli A^n = D^(n-2) minus closure(D^n)",
    "fiber_shrinkage": "diameters of puzzle neighborhoods of circle points by depth",
    "trapping": "depth N after which no off-circle fixed point lies in the puzzle neighborhood",
}


# ---------------------------------------------------------------------------
# runs and manifests


def run_experiment(ctx: RunContext, name: str, out: Path) -> ExperimentResult:
    sub = out / name
    sub.mkdir(parents=True, exist_ok=True)
    t = time.perf_counter()
    try:
        result = PIPELINES[name](ctx, sub)
    except Exception as exc:
        result = ExperimentResult(name, {}, {}, error=f"{exc}\n{traceback.format_exc(limit=3)}")
    result.seconds = time.perf_counter() - t
    return result


def versions() -> dict:
    import scipy
    return {"siegelab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(config: ExperimentConfig, experiments=None) -> dict:
    """Run the configured pipelines concurrently and write ``<out>/manifest.json``."""
    names = list(experiments or config.experiments)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", config.to_json())
    ctx = RunContext(config)
    t = time.perf_counter()
    with ThreadPoolExecutor(max_workers=thread_budget(config.threads)) as pool:
        futures = {n: pool.submit(run_experiment, ctx, n, out) for n in names}
        results = {n: f.result() for n, f in futures.items()}
    manifest = {"config_hash": config.digest(), "seed": config.seed, "versions": versions(),
                "experiments": {n: r.to_json() for n, r in results.items()},
                "passed": all(r.passed for r in results.values()),
                "wall_seconds": time.perf_counter() - t}
    write_json(out / "manifest.json", manifest)
    return manifest


def integer_metrics(manifest: dict) -> dict:
    """The integer and boolean leaves of a manifest's metrics, keyed by path (for determinism checks)."""
    out = {}

    def walk(prefix, x):
        if isinstance(x, dict):
            for k, v in x.items():
                walk(f"{prefix}/{k}", v)
        elif isinstance(x, list):
            for i, v in enumerate(x):
                walk(f"{prefix}[{i}]", v)
        elif isinstance(x, (bool, int)) and not isinstance(x, float):
            out[prefix] = x

    for name, exp in manifest["experiments"].items():
        walk(name, exp["metrics"])
        walk(name + "/assertions", exp["assertions"])
    return out
