"""Benchmark harness: shared test sets, SR/CSR/length/time metrics, CSV + JSON output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_model
from .distance import DistanceOracle
from .planner import (AdaptiveParams, FmmPlanner, PlanParams, PlanResult, distance_fn, first_collision,
                      path_length, plan, rrt_connect, straight_line_plan)
from .scene import CSpace, build_env_sdf, cspace_for, load_robot, load_workspace

log = logging.getLogger(__name__)

CSV_HEADER = ["planner", "sr", "csr", "mean_length", "mean_time_ms", "n_pairs", "n_hard"]
PLANNERS = ("neural", "neural_adaptive", "fmm", "rrt", "straight")


class TestsetError(RuntimeError):
    pass


def sub_seed(seed: int, name: str) -> int:
    """Independent, named child seed of a run seed."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


@dataclass
class BenchSpec:
    scene: str = "trap"
    robot: str = "disc"
    planners: list[str] = field(default_factory=lambda: ["neural", "fmm", "rrt"])
    n_pairs: int = 1000
    seed: int = 0
    time_limits: dict = field(default_factory=lambda: {"rrt": 10.0})
    out_dir: str | None = None
    checkpoint: str | None = None
    sdf_resolution: int = 256
    fmm_dims: list[int] = field(default_factory=lambda: [128, 128])
    rrt_step: float = 0.05
    rrt_max_iter: int = 20000
    deterministic: bool = False
    plan: PlanParams = field(default_factory=PlanParams)
    adaptive: AdaptiveParams = field(default_factory=AdaptiveParams)

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        unknown = set(self.planners) - set(PLANNERS)
        if unknown:
            raise ValueError(f"unknown planners {sorted(unknown)}; choose from {PLANNERS}")
        if isinstance(self.plan, dict):
            self.plan = PlanParams(**self.plan)
        if isinstance(self.adaptive, dict):
            self.adaptive = AdaptiveParams(**self.adaptive)


@dataclass
class MetricsRow:
    planner: str
    sr: float
    csr: float
    mean_length: float
    mean_time_ms: float
    n_pairs: int
    n_hard: int
    failures: dict = field(default_factory=dict)

    def csv_fields(self) -> list[str]:
        return [self.planner, repr(float(self.sr)), repr(float(self.csr)), repr(float(self.mean_length)),
                repr(float(self.mean_time_ms)), str(self.n_pairs), str(self.n_hard)]


def rows_to_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for r in rows:
        wr.writerow(r.csv_fields())
    return buf.getvalue()


def rows_from_csv(text: str) -> list[MetricsRow]:
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    return [MetricsRow(r[0], float(r[1]), float(r[2]), float(r[3]), float(r[4]), int(r[5]), int(r[6]))
            for r in rd]


# ------------------------------------------------------------------ test sets


def gen_testset(space: CSpace, oracle, n: int, seed: int, margin: float = 0.0,
                max_draws: int = 1_000_000) -> np.ndarray:
    """``(n, 2, d)`` collision-free start/goal pairs, uniform over free c-space."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    dist = distance_fn(oracle)
    out, drawn, need = [], 0, 2 * n
    while need > 0:
        if drawn >= max_draws:
            raise TestsetError(f"free-space sampling exhausted after {drawn} draws")
        k = min(max(2 * need, 1024), max_draws - drawn)
        c = space.sample(rng, k)
        drawn += k
        c = c[np.asarray(dist(c)) > margin][:need]
        out.append(c)
        need -= len(c)
    return np.concatenate(out).reshape(n, 2, space.dim)


def save_testset(path: str | Path, pairs: np.ndarray, seed: int, meta: dict | None = None) -> None:
    doc = {"seed": seed, "meta": meta or {}, "pairs": np.asarray(pairs).tolist()}
    Path(path).write_text(json.dumps(doc))


def load_testset(path: str | Path) -> tuple[np.ndarray, int]:
    doc = json.loads(Path(path).read_text())
    return np.asarray(doc["pairs"], float), int(doc["seed"])


def is_easy_case(space: CSpace, oracle, s, g, alpha: float = 0.03, margin: float = 0.0) -> bool:
    """Whether linear interpolation (shortest angular path) is already collision-free."""
    seg = np.stack([np.asarray(s, float), np.asarray(g, float)])
    return first_collision(space, distance_fn(oracle), seg, alpha / 4, margin)[0] is None


# ------------------------------------------------------------------ harness


def summarize(name: str, results: list[PlanResult], valid: np.ndarray, easy: np.ndarray,
              deterministic: bool = False) -> MetricsRow:
    n = len(results)
    hard = ~easy
    ok = np.asarray(valid, bool)
    lengths = [r.length for r, v in zip(results, ok) if v]
    times = [1000.0 * r.planning_time for r in results]
    failures: dict[str, int] = {}
    for r, v in zip(results, ok):
        if not v:
            key = r.reason or "invalid"
            failures[key] = failures.get(key, 0) + 1
    n_hard = int(hard.sum())
    return MetricsRow(
        name,
        100.0 * ok.sum() / n,
        100.0 * (ok & hard).sum() / n_hard if n_hard else 0.0,
        float(np.mean(lengths)) if lengths else math.nan,
        math.nan if deterministic else float(np.mean(times)),
        n, n_hard, failures)


def run_planner(name: str, pairs: np.ndarray, space: CSpace, oracle, spec: BenchSpec, field=None,
                source=None) -> list[PlanResult]:
    """Run one planner on every pair; failures are recorded, never raised."""
    source = oracle if source is None else source
    p = spec.plan
    out = []
    fmm = FmmPlanner(space, oracle, spec.fmm_dims, margin=p.collision_margin) if name == "fmm" else None
    for i, (s, g) in enumerate(pairs):
        try:
            if name in ("neural", "neural_adaptive"):
                if field is None:
                    raise ValueError("neural planners need a trained field")
                rng = np.random.default_rng(sub_seed(spec.seed, f"planner/{i}"))
                ad = spec.adaptive if name == "neural_adaptive" else None
                r = plan(field, s, g, p, source, oracle, ad, rng)
            elif name == "fmm":
                r = fmm.plan(s, g, oracle, p.collision_margin, p.resolution)
            elif name == "rrt":
                limit = None if spec.deterministic else spec.time_limits.get("rrt", 10.0)
                r = rrt_connect(space, oracle, s, g, spec.rrt_step, limit, sub_seed(spec.seed, f"rrt/{i}"),
                                spec.rrt_max_iter, p.resolution, p.collision_margin)
            else:
                r = straight_line_plan(space, oracle, s, g, p.resolution, p.collision_margin)
        except Exception as e:  # a failing query must not abort the run
            log.warning("%s failed on pair %d: %s", name, i, e)
            r = PlanResult(np.asarray([s]), "failure", f"error: {type(e).__name__}")
        out.append(r)
    return out


def validate(results: list[PlanResult], pairs: np.ndarray, space: CSpace, oracle, p: PlanParams) -> np.ndarray:
    """Independent exact-oracle check of every claimed success (endpoints included)."""
    ok = np.zeros(len(results), bool)
    for i, (r, (s, g)) in enumerate(zip(results, pairs)):
        if not r.success:
            continue
        path = np.asarray(r.path, float)
        ends = (float(space.distance(path[0], s)) < 1e-9 and float(space.distance(path[-1], g)) < 1e-9)
        ok[i] = ends and first_collision(space, distance_fn(oracle), path, p.resolution,
                                         p.collision_margin)[0] is None
    return ok


@dataclass
class BenchOutput:
    rows: list[MetricsRow]
    results: dict[str, list[PlanResult]]
    pairs: np.ndarray
    easy: np.ndarray
    files: dict[str, str] = field(default_factory=dict)


def run_bench(spec: BenchSpec, field=None, source=None, oracle: DistanceOracle | None = None,
              pairs: np.ndarray | None = None) -> BenchOutput:
    """Run every planner in ``spec`` on one shared test set.

    ``field`` (or ``spec.checkpoint``) drives the neural planners; ``source`` is the
    distance source they check collisions with while planning (default: the oracle).
    """
    workspace = load_workspace(spec.scene)
    robot = load_robot(spec.robot)
    if oracle is None:
        oracle = DistanceOracle(build_env_sdf(workspace, spec.sdf_resolution), robot,
                                space=cspace_for(robot, workspace))
    space = oracle.space
    if field is None and spec.checkpoint and any(p.startswith("neural") for p in spec.planners):
        field, _ = load_model(spec.checkpoint)
    if pairs is None:
        pairs = gen_testset(space, oracle, spec.n_pairs, sub_seed(spec.seed, "testset"),
                            spec.plan.collision_margin)
    easy = np.array([is_easy_case(space, oracle, s, g, spec.plan.alpha, spec.plan.collision_margin)
                     for s, g in pairs])
    rows, results = [], {}
    for name in spec.planners:
        res = run_planner(name, pairs, space, oracle, spec, field, source)
        valid = validate(res, pairs, space, oracle, spec.plan)
        rows.append(summarize(name, res, valid, easy, spec.deterministic))
        results[name] = res
        log.info("%s: SR %.1f CSR %.1f", name, rows[-1].sr, rows[-1].csr)
    out = BenchOutput(rows, results, pairs, easy)
    if spec.out_dir:
        out.files = write_outputs(out, spec, workspace, space)
    return out


def write_outputs(out: BenchOutput, spec: BenchSpec, workspace, space) -> dict[str, str]:
    from .plotting import bench_figure, paths_figure

    d = Path(spec.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    files = {"csv": str(d / "bench.csv"), "json": str(d / "bench.json"),
             "metrics_png": str(d / "bench_metrics.png"), "paths_png": str(d / "bench_paths.png")}
    Path(files["csv"]).write_text(rows_to_csv(out.rows))
    spec_doc = asdict(spec)
    doc = {"spec": spec_doc, "rows": [asdict(r) for r in out.rows],
           "n_easy": int(out.easy.sum()), "n_pairs": len(out.pairs)}
    Path(files["json"]).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable))
    bench_figure(out.rows, files["metrics_png"])
    paths_figure(workspace, space, out.pairs, out.results, files["paths_png"])
    return files


def _jsonable(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


__all__ = ["BenchSpec", "MetricsRow", "gen_testset", "is_easy_case", "path_length", "run_bench",
           "rows_to_csv", "rows_from_csv", "save_testset", "load_testset", "sub_seed"]
