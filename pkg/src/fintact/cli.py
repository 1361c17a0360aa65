"""Command-line interface: simulate, build-reference, calibrate, reconstruct,
detect, train-force, eval, bench.

Exit codes: 0 success, 2 configuration error, 3 data error. Errors print a
single machine-parsable line on stderr: ``error: <Class>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ioutil
from .calibration import BallSpec, calibrate_session
from .contact import ForceNet, train_force
from .errors import ConfigError, DataError, FintactError
from .geometry import CameraIntrinsics, default_intrinsics
from .global_recon import FingerConfig
from .image import average_frames
from .markers import MarkerLayout, estimate_occluded, index_markers
from .pipeline import Pipeline, PipelineConfig, bench
from .reference import build_store, detect_markers, load_store, retrieve, save_store
from .simulator import (
    FingerState,
    Renderer,
    SceneConfig,
    gen_reference_sequence,
    press_sequence_states,
    walk_states,
)


def cmd_simulate(args) -> int:
    scene = SceneConfig.from_json(args.scene) if args.scene else SceneConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    renderer = Renderer(scene)
    frames = []
    states = []
    gt_markers = []
    if args.reference_only:
        for state, frame, markers in gen_reference_sequence(scene, args.frames, args.seed):
            frames.append(frame)
            states.append(state)
            gt_markers.append(markers)
    else:
        base = walk_states(scene, max(args.frames, 60), args.seed)
        for i, state in enumerate(press_sequence_states(scene, base, args.frames, args.seed + 1)):
            frames.append(renderer.render(state, seed=args.seed + 1000 + i, frame_id=i))
            states.append(state)
            gt_markers.append(renderer.true_markers(state, frame_id=i))
    ioutil.write_sequence(out, frames, fps=30.0)
    ioutil.write_jsonl(out / "states.jsonl", (s.to_dict() for s in states))
    ioutil.write_jsonl(out / "markers_gt.jsonl", (m.to_record() for m in gt_markers))
    renderer.rest_layout().to_json(out / "layout.json")
    scene.to_json(out / "scene.json")
    print(f"wrote {len(frames)} frames to {out}")
    return 0


def cmd_build_reference(args) -> int:
    layout = MarkerLayout.from_json(args.layout)
    frames = ioutil.read_sequence(args.inp)
    manifest = ioutil.read_manifest(args.inp)
    store = build_store(frames, layout, fps=manifest.get("fps", 30.0))
    save_store(store, args.out)
    print(f"reference store: {len(store)} entries, epsilon {store.epsilon_px:.1f} px -> {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    store = load_store(args.store)
    live = average_frames(ioutil.read_frame(p) for p in args.live)
    k = (
        CameraIntrinsics.from_json(args.intrinsics)
        if args.intrinsics
        else default_intrinsics().scaled(live.width)
    )
    finger = FingerConfig.from_json(args.finger) if args.finger else FingerConfig()
    markers = estimate_occluded(index_markers(detect_markers(live), store.layout), store.layout)
    ref_id, dist = retrieve(store, markers)
    ref = store.frames[ref_id]
    init = None
    if args.init_circle:
        from .calibration import CircleFit

        cu, cv, r = (float(x) for x in args.init_circle.split(","))
        init = CircleFit(center=(cu, cv), radius=r, edge_point=(cu + r, cv))
    fit, mapping, info = calibrate_session(
        live, ref, k, BallSpec(args.ball_radius), finger, init=init
    )
    mapping.to_json(
        args.out,
        extra={
            "ball_radius_mm": info["ball_radius_mm"],
            "circle": info["circle"],
            "residual_mm": info["residual_mm"],
        },
    )
    print(
        f"calibration -> {args.out}: constant term {mapping.constant_term:+.4f} mm, "
        f"residual {info['residual_mm']:.4f} mm, reference frame {ref_id} ({dist:.1f} px)"
    )
    return 0


def _pipeline_from_args(args) -> Pipeline:
    cfg = PipelineConfig.from_json(args.config)
    return Pipeline.from_config(cfg), cfg


def cmd_reconstruct(args) -> int:
    pipeline, cfg = _pipeline_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    events = []
    n = 0
    for result in pipeline.run(ioutil.read_sequence(args.inp), workers=cfg.workers, realtime=cfg.realtime):
        fid = result.frame_id
        if result.contact_cloud is not None:
            ioutil.write_ply(out / f"contact_{fid:06d}.ply", result.contact_cloud.points, result.contact_cloud.valid)
        elif result.view_face is not None:
            ioutil.write_ply(out / f"view_{fid:06d}.ply", result.view_face.points, result.view_face.valid)
        if result.depth is not None:
            ioutil.write_depth_pgm(out / f"depth_{fid:06d}.pgm", result.depth.depth)
        events.append(result.to_record())
        n += 1
    ioutil.write_jsonl(out / "events.jsonl", events)
    print(f"reconstructed {n} frames -> {out}")
    return 0


def cmd_detect(args) -> int:
    pipeline, cfg = _pipeline_from_args(args)
    records = []
    for result in pipeline.run(ioutil.read_sequence(args.inp), workers=cfg.workers, realtime=cfg.realtime):
        rec = result.event.to_record() if result.event else {"frame_id": result.frame_id, "detected": False, "error": result.error}
        records.append(rec)
    ioutil.write_jsonl(args.out, records)
    print(f"wrote {len(records)} events -> {args.out}")
    return 0


def cmd_train_force(args) -> int:
    rows = ioutil.read_jsonl(args.dataset)
    x = np.array([r["x"] for r in rows], dtype=float)
    y = np.array([r["y"] for r in rows], dtype=float)
    net, report = train_force((x, y), seed=args.seed)
    net.to_json(args.out)
    Path(str(args.out) + ".report.json").write_text(json.dumps(report, indent=2))
    print(
        "force net -> {}: test MAE {:.3f} / {:.3f} N (train {:.3f} / {:.3f})".format(
            args.out, *report["test_mae"], *report["train_mae"]
        )
    )
    return 0


def cmd_eval(args) -> int:
    from .acceptance import run_suite

    report = run_suite(args.workdir, seed=args.seed)
    for item in report["criteria"]:
        status = "PASS" if item["passed"] else "FAIL"
        print(f"[{status}] {item['name']}: {item['detail']}")
    n_fail = sum(not item["passed"] for item in report["criteria"])
    Path(args.workdir, "acceptance_report.json").write_text(json.dumps(report, indent=2))
    print(f"{len(report['criteria']) - n_fail}/{len(report['criteria'])} criteria passed")
    return 0 if n_fail == 0 else 1


def cmd_bench(args) -> int:
    pipeline, cfg = _pipeline_from_args(args)
    frames = list(ioutil.read_sequence(args.inp))
    means, table = bench(pipeline, frames, workers=cfg.workers)
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fintact", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a synthetic frame sequence")
    s.add_argument("--scene", default=None, help="scene JSON (default scene if omitted)")
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reference-only", action="store_true", help="contact-free deformation walk")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("build-reference", help="build a reference store from a sequence")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--layout", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_reference)

    s = sub.add_parser("calibrate", help="ball-press calibration of the depth mapping")
    s.add_argument("--live", nargs="+", required=True, help="pressed frame(s); several are averaged")
    s.add_argument("--store", required=True)
    s.add_argument("--ball-radius", type=float, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--init-circle", default=None, help="cu,cv,r manual override")
    s.add_argument("--intrinsics", default=None)
    s.add_argument("--finger", default=None)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("reconstruct", help="full reconstruction of a sequence")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("detect", help="contact events only")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("train-force", help="train the force regressor")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_force)

    s = sub.add_parser("eval", help="run the acceptance battery")
    s.add_argument("--suite", default="acceptance", choices=["acceptance"])
    s.add_argument("--workdir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="per-stage timing table")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except FintactError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
