"""Command line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import Case, MotionScenario, loss_depth_sweep, supervision_target
from .camera import EulerPose, pose_from_euler
from .exceptions import DegenerateInputError, DivergenceError, Do3dError, DomainError
from .loss import LossWeights
from .metrics import (depth_metrics, disparity_proxy, fg_bg_split, flow_epe, sceneflow_outliers,
                      to_csv, to_table)
from .optim import (BLOCKS, DEFAULT_ITERATIONS, FitState, StageSchedule, default_schedule,
                    fit_staged, gradient_check, history_to_csv, set_threads)
from .scene import SceneSpec, load_pair, presets, render_pair, save_pair
from .warp import project_correspondence

log = logging.getLogger("do3d")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _need_file(path, what):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _write_config(out, args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    (Path(out) / "run_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True,
                                                          default=str))


# --------------------------------------------------------------------------- scene-gen

def cmd_scene_gen(args):
    spec_path = _need_file(args.spec, "spec file")
    try:
        spec = SceneSpec.from_json(spec_path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{spec_path}: invalid JSON ({e})") from e
    if args.seed is not None:
        spec = SceneSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    pair = render_pair(spec)
    manifest = save_pair(pair, args.out)
    print(f"wrote {len(manifest['files'])} files to {args.out} (spec {manifest['spec_sha256'][:12]})")
    return EXIT_OK


# --------------------------------------------------------------------------- analyze

def cmd_analyze(args):
    if args.sweep is None:
        if None in (args.t3, args.dt3, args.dgt):
            raise UsageError("analyze needs --t3 --dt3 --dgt, or --sweep PAIR_DIR")
        try:
            target = supervision_target(MotionScenario(args.t3, args.dt3, args.dgt))
        except DomainError as e:
            raise UsageError(f"rejected scenario: {e}") from e
        print(target.describe())
        return EXIT_OK
    pair = load_pair(_need_file(args.sweep, "pair directory"))
    if not pair.has_ground_truth():
        raise UsageError("sweep needs a pair with ground-truth pose")
    if args.object is not None:
        region = pair.instances.by_id(args.object).mask
    elif len(pair.instances):
        region = pair.instances.union()
    else:
        region = np.ones(pair.shape, dtype=bool)
    d_gt = args.dgt if args.dgt is not None else float(np.median(pair.depth_t[region]))
    motion = pair.motion if args.with_motion else None
    curve = loss_depth_sweep(pair.image_t, pair.image_s, region, pair.K,
                             pose_from_euler(pair.ego), d_gt, n=args.n, motion=motion)
    label = ""
    t3 = pair.ego.translation[2]
    if t3 < 0 and not args.with_motion:
        dt3 = 0.0
        if args.object is not None or len(pair.instances) == 1:
            oid = args.object if args.object is not None else pair.instances[0].id
            rig = {r.id: r for r in pair.rigids}.get(oid)
            dt3 = rig.pose.translation[2] if rig is not None else 0.0
        try:
            target = supervision_target(MotionScenario(t3, dt3, d_gt))
            label = target.case.value
            print(target.describe())
        except DomainError:
            pass
    elif args.with_motion:
        label = Case.STATIC.value
    print(f"argmin {curve.argmin:.10g} m (step {curve.step:.6g}), d_gt {d_gt:.10g} m")
    csv_text = curve.to_csv(label)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(csv_text)
    return EXIT_OK


# --------------------------------------------------------------------------- fit

def _parse_schedule(text):
    if text is None:
        return default_schedule()
    p = Path(text)
    if p.suffix == ".json" or p.exists():
        data = json.loads(_need_file(p, "schedule file").read_text())
        if "stages" in data:
            return StageSchedule.from_dict(data)
        return default_schedule(data.get("iterations", DEFAULT_ITERATIONS),
                                **{k: v for k, v in data.items() if k.startswith("lr_")})
    try:
        its = [int(x) for x in text.split(",")]
    except ValueError as e:
        raise UsageError(f"bad --schedule {text!r}: expected 4 comma-separated counts or a "
                         "JSON file") from e
    if len(its) != 4 or min(its) < 0:
        raise UsageError("--schedule needs four non-negative iteration counts")
    return default_schedule(its)


def _parse_weights(text):
    if text is None:
        return LossWeights()
    p = Path(text)
    try:
        if p.exists():
            return LossWeights(**json.loads(p.read_text()))
        vals = [float(x) for x in text.split(",")]
        return LossWeights(*vals)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad --weights {text!r}: {e}") from e


def _object_summary(state, pair):
    """Per-object depth and translation, median-scaled to ground truth when known."""
    out = {"ego": state.ego.to_dict(), "objects": []}
    gt = pair.depth_t if pair.has_ground_truth() else None
    fg = pair.instances.union(pair.shape)
    scale = 1.0
    if gt is not None:
        bg = ~fg if (~fg).any() else np.ones(pair.shape, dtype=bool)
        scale = float(np.median(gt[bg]) / np.median(state.depth[bg]))
        out["scale"] = scale
    for inst in pair.instances:
        row = {"id": inst.id,
               "median_depth": float(np.median(state.depth[inst.mask]) * scale),
               "translation": [float(x) * scale for x in state.rigids[inst.id].translation],
               "dynamic": inst.id in state.dynamic}
        if gt is not None:
            d_true = float(np.median(gt[inst.mask]))
            row["true_depth"] = d_true
            row["depth_ratio"] = row["median_depth"] / d_true
            row["abs_rel"] = float(np.mean(np.abs(state.depth[inst.mask] * scale - gt[inst.mask])
                                           / gt[inst.mask]))
            rig = {r.id: r for r in pair.rigids}.get(inst.id)
            if rig is not None:
                row["true_translation"] = list(rig.pose.translation)
        out["objects"].append(row)
    return out


def _format_summary(name, s):
    lines = [f"[{name}]"]
    for o in s["objects"]:
        line = f"  object {o['id']}: median depth {o['median_depth']:.4f} m"
        if "true_depth" in o:
            line += f" (true {o['true_depth']:.4f}, ratio {o['depth_ratio']:.3f})"
        t = ", ".join(f"{x:.4f}" for x in o["translation"])
        line += f"; translation ({t})"
        if "true_translation" in o:
            line += " (true (" + ", ".join(f"{x:.4f}" for x in o["true_translation"]) + "))"
        lines.append(line)
    return "\n".join(lines)


def cmd_fit(args):
    pair_dir = _need_file(args.pair, "pair directory")
    pair = load_pair(pair_dir)
    sched = _parse_schedule(args.schedule)
    weights = _parse_weights(args.weights)
    modes = []
    if args.baseline:
        modes.append(("baseline", (1,)))
    if args.full or not modes:
        modes.append(("full", (1, 2, 3, 4)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {}
    for name, stages in modes:
        target = out / name if len(modes) > 1 else out
        state, history, rep = fit_staged(pair, sched, weights, init_depth=args.init_depth,
                                         stages=stages, lambda_def=args.lambda_def,
                                         filter_margin=args.filter_margin)
        state.save(target)
        (target / "history.csv").write_text(history_to_csv(history))
        summary = _object_summary(state, pair)
        for key in ("stage2_filter", "stage3_filter"):
            if key in rep:
                summary[key] = {"dynamic": sorted(rep[key].dynamic),
                                "static": sorted(rep[key].static),
                                "loss_before": {str(k): v for k, v in rep[key].loss_before.items()},
                                "loss_after": {str(k): v for k, v in rep[key].loss_after.items()}}
        report[name] = summary
        print(_format_summary(name, summary))
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    _write_config(out, args)
    return EXIT_OK


# --------------------------------------------------------------------------- eval

def _load_fit(path):
    p = _need_file(path, "fit directory")
    if not (p / "poses.json").exists():
        for sub in ("full", "baseline"):
            if (p / sub / "poses.json").exists():
                p = p / sub
                break
        else:
            raise UsageError(f"no fit result (poses.json) in {path}")
    return FitState.load(p)


def cmd_eval(args):
    state = _load_fit(args.fit)
    pair = load_pair(_need_file(args.pair, "pair directory"))
    if not pair.has_ground_truth():
        raise UsageError(f"{args.pair} has no ground truth to evaluate against")
    if state.log_depth.shape != pair.shape:
        raise UsageError("fit result and pair have different image sizes")
    fg, bg = fg_bg_split(pair.instances, pair.shape)
    motion = state.motion_map(pair.K, pair.instances) if len(pair.instances) else None
    corr = project_correspondence(state.depth, pair.K, pose_from_euler(state.ego), motion)
    if args.task == "depth":
        rows = {}
        for name, region in (("all", np.ones(pair.shape, bool)), ("bg", bg), ("fg", fg)):
            if region.any():
                rows[name] = depth_metrics(state.depth, pair.depth_t, region,
                                           median_scale=not args.no_median_scale)
        text = "".join(f"[{k}]\n{to_table(v)}" for k, v in rows.items())
        csv_text = "".join(f"# {k}\n{to_csv(v)}" for k, v in rows.items())
    elif args.task == "flow":
        rep = flow_epe(corr.flow(), pair.flow, pair.valid, pair.noc, fg)
        text, csv_text = to_table(rep), to_csv(rep)
    else:
        scale = 1.0
        if not args.no_median_scale:
            scale = float(np.median(pair.depth_t) / np.median(state.depth))
        src_z = _gt_source_depth(pair)
        pred = {"D0": disparity_proxy(state.depth * scale),
                "D1": disparity_proxy(np.where(np.isfinite(corr.d), corr.d, np.inf) * scale),
                "flow": np.nan_to_num(corr.flow())}
        gt = {"D0": disparity_proxy(pair.depth_t), "D1": disparity_proxy(np.where(src_z > 0, src_z, np.inf)),
              "flow": pair.flow}
        rep = sceneflow_outliers(pred, gt, pair.valid & (src_z > 0))
        text, csv_text = to_table(rep), to_csv(rep)
    print(text, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(csv_text)
    return EXIT_OK


def _gt_source_depth(pair):
    from .camera import backproject_grid
    P = backproject_grid(pair.K, pair.depth_t)
    return P[..., 2] + pair.scene_flow[..., 2]


# --------------------------------------------------------------------------- gradcheck

def _gradcheck_problem(seed):
    """A deforming object plus a moving box, with a perturbed ground-truth state."""
    spec = presets.deforming_object(seed=seed)
    spec["objects"].append({"id": 2, "shape": "box", "size": [1.2, 1.0, 1.0],
                            "pose": {"translation": [2.3, 0.2, 10.0]},
                            "motion": {"yaw": 0.01, "translation": [-0.2, 0.0, 0.4]}})
    pair = render_pair(spec)
    rng = np.random.default_rng(seed)
    ids = [i.id for i in pair.instances]
    rig = {r.id: r.pose for r in pair.rigids}
    state = FitState(
        np.log(pair.depth_t) + 0.02 * rng.standard_normal(pair.shape),
        ego=EulerPose.from_vector(pair.ego.as_vector() + 0.002 * rng.standard_normal(6)),
        rigids={i: EulerPose.from_vector(rig[i].as_vector() + 0.002 * rng.standard_normal(6))
                for i in ids},
        deformation=pair.deformation + 0.005 * rng.standard_normal(pair.deformation.shape),
        dynamic=set(ids), deformable=set(ids))
    return state, pair.without_ground_truth()


def cmd_gradcheck(args):
    blocks = list(BLOCKS) if args.blocks == "all" else [b.strip() for b in args.blocks.split(",")]
    bad = [b for b in blocks if b not in BLOCKS]
    if bad:
        raise UsageError(f"unknown block(s) {bad}; choose from {list(BLOCKS)} or 'all'")
    seeds = [int(s) for s in str(args.seeds).split(",")]
    worst = {b: 0.0 for b in blocks}
    for seed in seeds:
        state, pair = _gradcheck_problem(seed)
        for b in blocks:
            corrupt = None
            if args.corrupt == b:
                def corrupt(g):
                    return g * 1.01 + 1e-3
            err = gradient_check(state, pair, b, eps=args.eps, samples=args.samples,
                                 seed=seed, corrupt=corrupt)
            worst[b] = max(worst[b], err)
    failed = [b for b in blocks if not worst[b] < GRADCHECK_TOL]
    for b in blocks:
        print(f"{b:12s} max rel err {worst[b]:.3e}  {'FAIL' if b in failed else 'pass'}")
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# --------------------------------------------------------------------------- main

def build_parser():
    p = _Parser(prog="do3d", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scene-gen", help="render a scene spec to a pair directory")
    s.add_argument("spec")
    s.add_argument("out")
    s.add_argument("--seed", type=int, default=None, help="override the spec seed")
    s.set_defaults(func=cmd_scene_gen)

    s = sub.add_parser("analyze", help="supervision target or depth-loss sweep")
    s.add_argument("--t3", type=float)
    s.add_argument("--dt3", type=float)
    s.add_argument("--dgt", type=float)
    s.add_argument("--sweep", metavar="PAIR_DIR")
    s.add_argument("--object", type=int, default=None, help="instance id for the sweep region")
    s.add_argument("--with-motion", action="store_true",
                   help="supply the ground-truth motion map during the sweep")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--out", help="curve CSV path")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("fit", help="staged fitting on a pair directory")
    s.add_argument("pair")
    s.add_argument("out")
    s.add_argument("--baseline", action="store_true", help="stage 1 only")
    s.add_argument("--full", action="store_true", help="all four stages (default)")
    s.add_argument("--schedule", help="'n1,n2,n3,n4' iterations or a JSON file")
    s.add_argument("--weights", help="'w_ph,w_ds,w_m[,alpha]' or a JSON file")
    s.add_argument("--init-depth", type=float, default=10.0)
    s.add_argument("--lambda-def", type=float, default=0.0)
    s.add_argument("--filter-margin", type=float, default=0.0,
                   help="relative loss drop an object must beat to count as moving")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("eval", help="metrics of a fit against ground truth")
    s.add_argument("fit")
    s.add_argument("pair")
    s.add_argument("--task", choices=["depth", "flow", "sceneflow"], default="depth")
    s.add_argument("--no-median-scale", action="store_true")
    s.add_argument("--out", help="CSV path")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    s.add_argument("--blocks", default="all")
    s.add_argument("--seeds", default="0")
    s.add_argument("--samples", type=int, default=8)
    s.add_argument("--eps", type=float, default=1e-4)
    s.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # usage errors, --help, --version
        return e.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_threads()
    try:
        return args.func(args)
    except (DivergenceError, DegenerateInputError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, Do3dError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
