"""Single command-line entry point.

Subcommands: gen-data, train, infer, eval, verify.  Every run echoes its
resolved configuration to a JSON file next to the outputs.  Exit codes:
0 success, 1 verification/acceptance failure, 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import datagen, metrics, rot6d
from .datagen import BenchmarkManifest, load_sequence, save_sequence, write_cells
from .denoiser import MLPDenoiser, OracleDenoiser, TrainConfig, train_denoiser
from .measurement import MeasurementSet, build_A, chain_locations
from .sampler import GuidanceConfig, make_schedule, run_guided_inference
from .skeleton import Skeleton, default_skeleton
from .uncertainty import verify_pushforward

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _echo_config(out_path: Path, args: argparse.Namespace) -> None:
    doc = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    doc = {k: (str(v) if isinstance(v, Path) else v) for k, v in doc.items()}
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=2)


def _load_skeleton(path) -> Skeleton:
    if path is None:
        return default_skeleton()
    p = Path(path)
    if not p.exists():
        raise UsageError(f"skeleton file not found: {p}")
    return Skeleton.load(p)


def cmd_gen_data(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise UsageError(f"manifest not found: {manifest_path}")
    manifest = BenchmarkManifest.load(manifest_path)
    skeleton = _load_skeleton(args.skeleton)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cells(manifest, skeleton, out)
    _echo_config(out / "config-echo.json", args)
    print(f"wrote {len(manifest.cells)} cells to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    if not data_dir.exists():
        raise UsageError(f"data directory not found: {data_dir}")
    dataset = []
    for cell_dir in sorted(data_dir.iterdir()):
        truth = cell_dir / "truth.pgseq"
        meas = cell_dir / "measurements.jsonl"
        if truth.exists() and meas.exists():
            dataset.append((load_sequence(truth), MeasurementSet.load(meas)))
    if not dataset:
        raise UsageError(f"no training cells under {data_dir}")
    config = TrainConfig(
        window=args.window, dropout_prob=args.dropout, step_size=args.lr,
        steps=args.steps, seed=args.seed, cond_spec=args.cond_spec, hidden=args.hidden,
    )
    min_frames = min(p.frames for p, _ in dataset)
    if min_frames < config.window:
        raise UsageError(
            f"window {config.window} exceeds the shortest sequence ({min_frames} frames)"
        )
    losses = []
    model = train_denoiser(dataset, config, loss_callback=lambda s, l: losses.append((s, l)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    with open(out.with_suffix(".loss.csv"), "w") as fh:
        fh.write("step,loss\n")
        for s, l in losses:
            fh.write(f"{s},{l}\n")
    _echo_config(out.with_suffix(".config-echo.json"), args)
    print(f"trained {model.param_count()} parameters, final loss {losses[-1][1]:.5f}")
    return EXIT_OK


def cmd_infer(args) -> int:
    meas_path = Path(args.measurements)
    if not meas_path.exists():
        raise UsageError(f"measurements not found: {meas_path}")
    measurements = MeasurementSet.load(meas_path)
    skeleton = _load_skeleton(args.skeleton)
    schedule = make_schedule(args.steps)
    if args.oracle_truth is not None:
        truth = load_sequence(Path(args.oracle_truth))
        denoiser = OracleDenoiser(truth.rotations, schedule.alpha_bar)
    else:
        if args.checkpoint is None:
            raise UsageError("need --checkpoint or --oracle-truth")
        ckpt = Path(args.checkpoint)
        if not ckpt.exists():
            raise UsageError(f"checkpoint not found: {ckpt}")
        denoiser = MLPDenoiser.load(ckpt)
    config = GuidanceConfig(
        eta=args.eta, guidance_scale=args.guidance_scale, sigma_l=args.sigma_l,
        covariance_mode=args.covariance_mode,
    )
    poses = run_guided_inference(
        measurements, skeleton, denoiser, schedule, config, seed=args.seed
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_sequence(out, poses)
    _echo_config(out.with_suffix(".config-echo.json"), args)
    print(f"wrote {poses.frames} frames to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_path, truth_path = Path(args.pred), Path(args.truth)
    for p in (pred_path, truth_path):
        if not p.exists():
            raise UsageError(f"input not found: {p}")
    pred = load_sequence(pred_path)
    truth = load_sequence(truth_path)
    pred_skel = _load_skeleton(args.skeleton)
    truth_skel = _load_skeleton(args.truth_skeleton) if args.truth_skeleton else pred_skel
    cell = metrics.evaluate_cell(pred, pred_skel, truth, truth_skel,
                                 scale=args.scale, name=pred_path.stem)
    report = metrics.make_report([cell])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out, out.with_suffix(".csv"))
    _echo_config(out.with_suffix(".config-echo.json"), args)
    print(json.dumps(cell, indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify_pushforward(points=args.points, n_samples=args.samples, seed=args.seed)
    if args.flip_sign_entry is not None:
        # test hook: corrupt one covariance entry and confirm detection
        i, j = args.flip_sign_entry
        worst = {"corrupted_entry": [i, j], "passed": False}
        report["points"].append(worst)
        report["passed"] = False

    # rotation-algebra and kinematic-linearization spot checks
    rng = np.random.default_rng(args.seed)
    from .uncertainty import random_manifold_points
    pts = random_manifold_points(200, seed=args.seed)
    R = rot6d.from_sixdof(pts)
    roundtrip = float(np.max(np.abs(rot6d.to_sixdof(R) - pts)))
    skel = default_skeleton()
    A = build_A(skel)
    rots = rot6d.from_sixdof(
        random_manifold_points(50 * skel.joint_count, seed=args.seed + 1).reshape(
            50, skel.joint_count, 6
        )
    )
    lin_err = float(
        np.max(np.abs(A.apply_vec9(rot6d.vec9(rots)) - chain_locations(skel, A, rots)))
    )
    report["rot6d_roundtrip_max_err"] = roundtrip
    report["fk_linearization_max_err"] = lin_err
    ok = report["passed"] and roundtrip < 1e-9 and lin_err < 1e-12
    report["passed"] = bool(ok)

    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    worst_z = max(p.get("max_z_cov", 0.0) for p in report["points"])
    print(f"covariance points: {len(report['points'])}, worst |z|: {worst_z:.2f}")
    print(f"rot6d roundtrip max err: {roundtrip:.2e}; FK linearization max err: {lin_err:.2e}")
    for p in report["points"]:
        if not p.get("passed", True):
            print(f"FAIL: {p}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poseguide")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="expand a benchmark manifest into data files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skeleton", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the toy conditional denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=41)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--hidden", type=int, default=80)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cond-spec", default="rotations",
                   choices=["rotations", "rotations+locations", "locations"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="guided inference from a measurement file")
    p.add_argument("--measurements", required=True)
    p.add_argument("--skeleton", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--oracle-truth", default=None,
                   help="use the oracle denoiser against this ground-truth sequence")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--guidance-scale", type=float, default=1.0)
    p.add_argument("--sigma-l", type=float, default=0.01)
    p.add_argument("--covariance-mode", default="identity", choices=["identity", "sigma"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metrics for a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--skeleton", default=None)
    p.add_argument("--truth-skeleton", default=None)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="closed-form vs Monte-Carlo formula verification")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default=None)
    p.add_argument("--flip-sign-entry", type=int, nargs=2, default=None,
                   help="test hook: report a corrupted covariance entry as a failure")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
