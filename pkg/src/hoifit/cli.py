"""Command-line entry points: fit, eval, synth, render, validate, serve."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import (
    DataFormatError,
    fit_result_to_dict,
    list_videos,
    load_json,
    load_model_library,
    load_video_record,
    params_from_result_dict,
    save_json,
    validate_dataset,
)
from .errors import HoifitError
from .estimator import ArticulatedObjectFitter
from .metrics import model_accuracy
from .overlay import render_result_frames
from .synthetic import SCENE_KINDS, NoiseLevels, SceneSpec, generate_scene


def _load_config(path, overrides: dict) -> RunConfig:
    base = RunConfig.from_file(path) if path else RunConfig()
    doc = base.to_dict()
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(doc)


def cmd_fit(args) -> int:
    root = Path(args.dataset)
    config = _load_config(args.config, {"jobs": args.jobs, "iterations": args.iterations})
    if args.no_hoi:
        config = RunConfig.from_dict(config.to_dict() | {"hoi_weight": 0.0})
    library = load_model_library(root / "models")
    record = load_video_record(root / args.video, library)
    if args.models:
        missing = [m for m in args.models if m not in library]
        if missing:
            raise DataFormatError(f"models not in library: {missing}")
        models = [library[m] for m in args.models]
    elif record.ground_truth is not None and record.ground_truth.model_id in library:
        models = [library[record.ground_truth.model_id]]
    else:
        models = list(library.values())

    fitter = ArticulatedObjectFitter.from_config(config).fit(record, models)
    out = Path(args.out) if args.out else root / args.video / "fit"
    out.mkdir(parents=True, exist_ok=True)
    save_json(out / "result.json", fit_result_to_dict(fitter.result_))
    config.save(out / "config.resolved.json")
    best = fitter.result_.best
    render_result_frames(
        fitter.models_[best.candidate.model_id],
        best.params,
        record.camera,
        config.raster_settings(),
        frame_paths=record.frame_paths,
        out_dir=out / "overlays",
    )
    print(f"fitted {args.video}: best={best.candidate.label()} total={best.final_total:.4f}")
    if record.ground_truth is not None:
        report = fitter.evaluate()
        save_json(out / "metrics.json", report.to_dict())
        print(
            f"vs ground truth: orientation={report.orientation_err_deg:.3f} deg, "
            f"location={report.location_err_cm:.3f} cm, "
            f"part motion={report.part_motion_err:.3f} {report.part_motion_unit}, "
            f"dimensions={report.dimension_err_cm:.3f} cm"
        )
    print(f"results in {out}")
    return 0


def _category_of(result_doc: dict, library) -> str:
    best = result_doc["candidates"][result_doc["bestIndex"]]
    mid = best["candidate"]["modelId"]
    return library[mid].category if mid in library else mid


def cmd_eval(args) -> int:
    root = Path(args.dataset)
    library = load_model_library(root / "models")
    rows = []
    for result_path in sorted(Path(args.results).rglob("result.json")):
        doc = load_json(result_path)
        video_id = result_path.parent.name if result_path.parent.name != "fit" else result_path.parent.parent.name
        record = load_video_record(root / video_id, library)
        gt = record.ground_truth
        if gt is None:
            print(f"skipping {video_id}: no ground truth", file=sys.stderr)
            continue
        best = doc["candidates"][doc["bestIndex"]]
        params = params_from_result_dict(best["params"])
        model = library[gt.model_id]
        kind = model.parts[gt.active_part].joint.kind
        from .metrics import evaluate_fit

        rep = evaluate_fit(
            params.rotation, params.translation_cm, params.part_motion, params.size_cm,
            gt.rotation(), gt.translation_cm, np.asarray(gt.part_motion), gt.size_cm,
            kind,
            model_pred=best["candidate"]["modelId"],
            model_gt=gt.model_id,
        )
        rows.append(
            {
                "video": video_id,
                "category": model.category,
                "kind": kind,
                "orientationDeg": rep.orientation_err_deg,
                "locationCm": rep.location_err_cm,
                "partMotion": rep.part_motion_err,
                "partMotionUnit": rep.part_motion_unit,
                "dimensionCm": rep.dimension_err_cm,
                "modelCorrect": rep.model_correct,
            }
        )
    if not rows:
        print("no evaluable results found", file=sys.stderr)
        return 1

    categories: dict[str, list[dict]] = {}
    for r in rows:
        key = f"{r['category']} ({'prismatic' if r['partMotionUnit'] == 'cm' else 'revolute'})"
        categories.setdefault(key, []).append(r)
    table = []
    for cat in sorted(categories):
        rs = categories[cat]
        table.append(
            {
                "category": cat,
                "orientationDeg": float(np.mean([r["orientationDeg"] for r in rs])),
                "locationCm": float(np.mean([r["locationCm"] for r in rs])),
                "partMotion": float(np.mean([r["partMotion"] for r in rs])),
                "partMotionUnit": rs[0]["partMotionUnit"],
                "dimensionCm": float(np.mean([r["dimensionCm"] for r in rs])),
                "videos": len(rs),
            }
        )
    # The all-category average keeps part motion in degrees only, so
    # prismatic rows (cm) are excluded from that one column.
    revolute_rows = [t for t in table if t["partMotionUnit"] == "deg"]
    average = {
        "category": "average",
        "orientationDeg": float(np.mean([t["orientationDeg"] for t in table])),
        "locationCm": float(np.mean([t["locationCm"] for t in table])),
        "partMotion": float(np.mean([t["partMotion"] for t in revolute_rows])) if revolute_rows else 0.0,
        "partMotionUnit": "deg",
        "dimensionCm": float(np.mean([t["dimensionCm"] for t in table])),
        "videos": len(rows),
    }
    correct_pairs = [(r["video"], r["modelCorrect"]) for r in rows if r["modelCorrect"] is not None]
    out_doc = {"perCategory": table, "average": average, "perVideo": rows}
    if correct_pairs:
        acc = model_accuracy([("x", "x") if ok else ("x", "y") for _, ok in correct_pairs])
        out_doc["modelAccuracy"] = acc

    header = f"{'category':<24}{'orientation':>12}{'location':>10}{'part motion':>13}{'dimension':>11}"
    lines = [header, "-" * len(header)]
    for t in table + [average]:
        lines.append(
            f"{t['category']:<24}{t['orientationDeg']:>12.3f}{t['locationCm']:>10.3f}"
            f"{t['partMotion']:>10.3f} {t['partMotionUnit']:<2}{t['dimensionCm']:>11.3f}"
        )
    text = "\n".join(lines)
    print(text)
    if args.out:
        save_json(args.out, out_doc)
        Path(args.out).with_suffix(".txt").write_text(text + "\n")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    specs = []
    if args.spec:
        doc = load_json(args.spec)
        entries = doc if isinstance(doc, list) else [doc]
        for e in entries:
            noise = e.get("noise", {})
            specs.append(
                SceneSpec(
                    kind=e["kind"],
                    seed=int(e.get("seed", 0)),
                    num_frames=int(e.get("numFrames", 6)),
                    image_size=tuple(e.get("imageSize", (256, 256))),
                    focal_px=e.get("focalPx"),
                    hand=e.get("hand", "right"),
                    noise=NoiseLevels(
                        mask_flip_prob=float(noise.get("maskFlipProb", 0.0)),
                        keypoint_jitter_px=float(noise.get("keypointJitterPx", 0.0)),
                        hand_offset_cm=float(noise.get("handOffsetCm", 0.0)),
                    ),
                    include_distractor=bool(e.get("includeDistractor", False)),
                )
            )
    else:
        kinds = args.kinds.split(",") if args.kinds else list(SCENE_KINDS)
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [0]
        for kind in kinds:
            for seed in seeds:
                specs.append(SceneSpec(kind=kind, seed=seed, include_distractor=args.distractors))
    for spec in specs:
        video_dir = generate_scene(spec, out)
        print(f"generated {video_dir}")
    return 0


def cmd_render(args) -> int:
    root = Path(args.dataset)
    library = load_model_library(root / "models")
    record = load_video_record(root / args.video, library)
    if args.params:
        doc = load_json(args.params)
        if "candidates" in doc:  # a FitResult file
            doc = doc["candidates"][doc["bestIndex"]]["params"] | {
                "modelId": doc["candidates"][doc["bestIndex"]]["candidate"]["modelId"]
            }
        params = params_from_result_dict(doc)
        model_id = doc.get("modelId") or (record.ground_truth.model_id if record.ground_truth else None)
    else:
        if record.ground_truth is None:
            raise DataFormatError(f"{args.video} has no gt.json; pass --params")
        params = record.ground_truth.to_params()
        model_id = record.ground_truth.model_id
    if model_id not in library:
        raise DataFormatError(f"model {model_id!r} not in library")
    out = Path(args.out) if args.out else root / args.video / "render"
    config = _load_config(args.config, {})
    render_result_frames(
        library[model_id], params, record.camera, config.raster_settings(),
        frame_paths=record.frame_paths, out_dir=out,
    )
    print(f"rendered {params.num_frames} frames to {out}")
    return 0


def cmd_validate(args) -> int:
    report = validate_dataset(args.dataset)
    errors = 0
    for video, entry in sorted(report.items()):
        for w in entry.get("warnings", []):
            print(f"[warn] {video}: {w}")
        for e in entry.get("errors", []):
            print(f"[error] {video}: {e}")
            errors += 1
    ok = sum(1 for e in report.values() if not e.get("errors"))
    print(f"{ok}/{len(report)} entries clean")
    return 1 if errors else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(Path(args.dataset))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hoifit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit models to one video")
    f.add_argument("--dataset", required=True)
    f.add_argument("--video", required=True)
    f.add_argument("--models", type=lambda s: s.split(","), default=None,
                   help="comma-separated model ids (default: GT model, else whole library)")
    f.add_argument("--config", default=None, help="run-config JSON file")
    f.add_argument("--out", default=None)
    f.add_argument("--jobs", type=int, default=None, help="candidate parallelism cap")
    f.add_argument("--iterations", type=int, default=None)
    f.add_argument("--no-hoi", action="store_true", help="zero the interaction weight (ablation)")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="aggregate fit results against ground truth")
    e.add_argument("--results", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate synthetic scenes")
    s.add_argument("--out", required=True)
    s.add_argument("--spec", default=None, help="scene-spec JSON file (object or list)")
    s.add_argument("--kinds", default=None, help="comma-separated: door,drawer,laptop")
    s.add_argument("--seeds", default=None, help="comma-separated integers")
    s.add_argument("--distractors", action="store_true")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("render", help="render overlays for given or GT parameters")
    r.add_argument("--dataset", required=True)
    r.add_argument("--video", required=True)
    r.add_argument("--params", default=None, help="params JSON or FitResult file (default: gt.json)")
    r.add_argument("--config", default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_render)

    v = sub.add_parser("validate", help="validate a dataset directory")
    v.add_argument("--dataset", required=True)
    v.set_defaults(func=cmd_validate)

    sv = sub.add_parser("serve", help="run the annotation HTTP service")
    sv.add_argument("--dataset", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8036)
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HoifitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
