"""Command-line entry point: ``eikoplan <subcommand> [options]``.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

log = logging.getLogger("eikoplan")


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return json.loads(p.read_text())


def _section(cfg: dict, name: str, cls) -> dict:
    """Keys of ``cfg[name]`` that are fields of dataclass ``cls``; unknown keys are usage errors."""
    sec = cfg.get(name, {})
    names = {f.name for f in fields(cls)}
    bad = set(sec) - names
    if bad:
        raise UsageError(f"unknown keys in config section '{name}': {sorted(bad)}")
    return dict(sec)


def _out(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _setup(args):
    from .distance import DistanceOracle
    from .scene import build_env_sdf, cspace_for, load_robot, load_workspace

    w = load_workspace(args.scene)
    robot = load_robot(args.robot)
    space = cspace_for(robot, w)
    oracle = DistanceOracle(build_env_sdf(w, args.resolution), robot, space=space)
    return w, robot, space, oracle


def _config_vec(text: str, dim: int) -> np.ndarray:
    v = np.asarray([float(x) for x in text.replace(",", " ").split()], float)
    if len(v) != dim:
        raise UsageError(f"expected {dim} coordinates, got {len(v)}: {text!r}")
    return v


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


# ------------------------------------------------------------------ commands


def cmd_scene_sdf(args, cfg):
    from .scene import build_env_sdf, load_workspace, save_env_sdf

    w = load_workspace(args.scene)
    g = build_env_sdf(w, args.resolution)
    path = _out(args) / f"{w.name}.esdf"
    save_env_sdf(g, path)
    print(path)


def cmd_sadf_train(args, cfg):
    from .checkpoint import save_model
    from .sadf import SadfTrainConfig, train_sadf

    _, robot, space, oracle = _setup(args)
    kw = _section(cfg, "sadf", SadfTrainConfig)
    kw.setdefault("seed", args.seed)
    if args.epochs is not None:
        kw["epochs"] = args.epochs
    if args.samples is not None:
        kw["n_samples"] = args.samples
    tc = SadfTrainConfig(**kw)
    model, report = train_sadf(tc, oracle)
    out = _out(args)
    ckpt = out / "sadf.ckpt"
    save_model(model, ckpt, space, {"scene": args.scene, "robot": args.robot, "seed": tc.seed,
                                    "report": report.to_dict()})
    _write_json(out / "sadf_report.json", report.to_dict())
    print(ckpt)


def _load_sadf(path, robot):
    from .checkpoint import CheckpointError, load_model

    model, doc = load_model(path, robot)
    if doc["kind"] != "sadf":
        raise CheckpointError(f"{path} is not a SADF checkpoint")
    return model


def cmd_sadf_eval(args, cfg):
    from .sadf import eval_sadf

    _, robot, _, oracle = _setup(args)
    model = _load_sadf(args.checkpoint, robot)
    ev = eval_sadf(model, oracle, args.n, args.seed)
    doc = ev.to_dict()
    _write_json(_out(args) / "sadf_eval.json", doc)
    print(json.dumps(doc, sort_keys=True))


def cmd_field_train(args, cfg):
    from .checkpoint import save_model
    from .training import TrainConfig, train_field

    _, robot, space, oracle = _setup(args)
    kw = _section(cfg, "train", TrainConfig)
    kw.setdefault("seed", args.seed)
    kw["deterministic"] = kw.get("deterministic", False) or args.deterministic
    for k in ("epochs", "pairs_total", "lambda_m", "lambda_o", "constraint_start_epoch"):
        v = getattr(args, k)
        if v is not None:
            kw[k] = v
    tc = TrainConfig(**kw)
    source = _load_sadf(args.sadf, robot) if args.sadf else oracle
    out = _out(args)
    model, report = train_field(tc, space, source, exact=oracle, report_path=out / "train_report.ndjson",
                                checkpoint_dir=out / "checkpoints",
                                meta={"scene": args.scene, "robot": args.robot})
    ckpt = out / "field.ckpt"
    save_model(model, ckpt, space, {"scene": args.scene, "robot": args.robot, "seed": tc.seed,
                                    "config": tc.to_dict(), "wall_time": report.wall_time})
    print(ckpt)


def cmd_fmm_solve(args, cfg):
    from .distance import clip_speed
    from .fmm import GridSpec, fmm_solve, save_time_grid

    _, _, space, oracle = _setup(args)
    dims = args.dims or ([128, 128] if space.dim == 2 else [64, 64, 36])
    if len(dims) != space.dim:
        raise UsageError(f"--dims needs {space.dim} values")
    spec = GridSpec.for_space(space, dims)
    d = oracle(spec.centers().reshape(-1, space.dim)).reshape(spec.dims)
    speed = np.where(d > 0, clip_speed(d), 0.0)
    src = _config_vec(args.source, space.dim)
    tg = fmm_solve(spec, speed, src, init_radius=4.0)
    path = _out(args) / "time.tgrd"
    save_time_grid(tg, path)
    print(path)


def cmd_plan(args, cfg):
    from .checkpoint import load_model
    from .planner import AdaptiveParams, PlanParams, plan

    field, doc = load_model(args.checkpoint)
    meta = doc.get("meta", {})
    args.scene = args.scene or meta.get("scene")
    args.robot = args.robot or meta.get("robot")
    if not args.scene or not args.robot:
        raise UsageError("--scene and --robot are required when the checkpoint does not record them")
    w, robot, space, oracle = _setup(args)
    p = PlanParams(**_section(cfg, "plan", PlanParams))
    ad = AdaptiveParams(**_section(cfg, "adaptive", AdaptiveParams)) if args.adaptive else None
    s, g = _config_vec(args.start, space.dim), _config_vec(args.goal, space.dim)
    source = _load_sadf(args.sadf, robot) if args.sadf else oracle
    res = plan(field, s, g, p, source, oracle, ad, np.random.default_rng(args.seed))
    doc = res.to_dict()
    out = _out(args)
    _write_json(out / "plan.json", doc)
    if args.svg:
        from .plotting import render_plan

        render_plan(args.svg, w, space, res.path, s, g, field, robot)
    print(json.dumps({k: doc[k] for k in ("status", "reason", "length", "replanned")}, sort_keys=True))
    if not res.success:
        return 1


def cmd_bench(args, cfg):
    from .bench import BenchSpec, run_bench

    kw = _section(cfg, "bench", BenchSpec)
    kw.setdefault("seed", args.seed)
    kw["deterministic"] = kw.get("deterministic", False) or args.deterministic
    kw["out_dir"] = str(_out(args))
    for k in ("scene", "robot", "checkpoint"):
        v = getattr(args, k)
        if v is not None:
            kw[k] = v
    if args.planners:
        kw["planners"] = args.planners.split(",")
    if args.n_pairs is not None:
        kw["n_pairs"] = args.n_pairs
    if "plan" in cfg:
        kw["plan"] = cfg["plan"]
    if "adaptive" in cfg:
        kw["adaptive"] = cfg["adaptive"]
    try:
        spec = BenchSpec(**kw)
    except ValueError as e:
        raise UsageError(str(e))
    if kw["deterministic"]:
        from .training import set_deterministic

        set_deterministic(True)
    out = run_bench(spec)
    sys.stdout.write(Path(out.files["csv"]).read_text())


def cmd_testset_gen(args, cfg):
    from .bench import gen_testset, save_testset

    _, _, space, oracle = _setup(args)
    pairs = gen_testset(space, oracle, args.n, args.seed)
    path = _out(args) / "testset.json"
    save_testset(path, pairs, args.seed, {"scene": args.scene, "robot": args.robot})
    print(path)


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="eikoplan", description="Neural time-field motion planning toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--deterministic", action="store_true", help="single-threaded, bitwise-reproducible")
    common.add_argument("--config", help="JSON document with train/plan/adaptive/bench/sadf sections")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, fn, help_, scene=True):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        if scene:
            p.add_argument("--scene", default="trap", help="bundled scene name or JSON path")
            p.add_argument("--robot", default="disc", help="bundled robot name or JSON path")
            p.add_argument("--resolution", type=int, default=256, help="environment SDF grid resolution")
        return p

    p = add("scene-sdf", cmd_scene_sdf, "build and save the environment SDF grid", scene=False)
    p.add_argument("--scene", default="trap")
    p.add_argument("--resolution", type=int, default=256)

    p = add("sadf-train", cmd_sadf_train, "train a learned shape-aware distance model")
    p.add_argument("--epochs", type=int)
    p.add_argument("--samples", type=int)

    p = add("sadf-eval", cmd_sadf_eval, "compare a SADF checkpoint with the exact oracle")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=1000)

    p = add("field-train", cmd_field_train, "train a neural time field")
    p.add_argument("--sadf", help="SADF checkpoint used for labels (default: exact oracle)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--pairs-total", dest="pairs_total", type=int)
    p.add_argument("--lambda-m", dest="lambda_m", type=float)
    p.add_argument("--lambda-o", dest="lambda_o", type=float)
    p.add_argument("--constraint-start-epoch", dest="constraint_start_epoch", type=int)

    p = add("fmm-solve", cmd_fmm_solve, "solve arrival times from a source with fast marching")
    p.add_argument("--source", required=True, help="source configuration, e.g. '0.1,-0.2'")
    p.add_argument("--dims", type=int, nargs="+")

    p = add("plan", cmd_plan, "plan a single query on a trained field")
    p.set_defaults(scene=None, robot=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--goal", required=True)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--sadf")
    p.add_argument("--svg", help="write a rendering of the plan to this file")

    p = add("bench", cmd_bench, "run the planner benchmark and write CSV/JSON/figures")
    p.set_defaults(scene=None, robot=None)
    p.add_argument("--checkpoint")
    p.add_argument("--planners", help="comma-separated: neural,neural_adaptive,fmm,rrt,straight")
    p.add_argument("--n-pairs", dest="n_pairs", type=int)

    p = add("testset-gen", cmd_testset_gen, "sample collision-free start/goal pairs")
    p.add_argument("--n", type=int, default=1000)
    return top


_COORD_FLAGS = ("--start", "--goal", "--source")


def _join_coords(argv: list[str]) -> list[str]:
    # argparse reads "-0.3,0.1" as an option; bind coordinate values to their flag
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _COORD_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_coords(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        code = args.func(args, cfg)
        return int(code or 0)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"eikoplan: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # operational failure: report and exit 1
        log.debug("failure", exc_info=True)
        print(f"eikoplan: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
