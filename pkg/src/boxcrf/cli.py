"""Command-line front end: ``boxcrf <command> ...``.

Commands: synth, infer, train, eval, plan, export-wireframe. Errors are
reported on stderr with exit status 1 (2 for bad usage).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import serialize
from .datasets import Scene, load_scene_dir, save_scene, synthetic_dataset
from .evaluation import run_benchmark
from .learning import PerturbationSampler, fit, make_training_set
from .model import FEATURE_NAMES, box_template
from .pipeline import PipelineConfig, PipelineError, infer_box, main_cluster
from .planner import make_plan
from .pointcloud import ROLES, BoxSpec, CloudParseError, load_cloud, synth_box
from .segmentation import extract_segments


class CommandError(RuntimeError):
    """A command failed for a reason worth one line on stderr."""


# -- helpers -------------------------------------------------------------------


def _load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CommandError(f"cannot read config {path}: {exc}") from None
    try:
        return PipelineConfig.from_dict(data)
    except ValueError as exc:
        raise CommandError(f"invalid config {path}: {exc}") from None


def _read_doc(path: str, what: str) -> dict:
    try:
        return serialize.read(path)
    except OSError as exc:
        raise CommandError(f"cannot read {what} {path}: {exc.strerror or exc}") from None


def _load_weights(path: str):
    return serialize.weights_from_dict(_read_doc(path, "weights file"))


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise CommandError(f"cannot write {out}: {exc.strerror or exc}") from None


def _spec_from_dict(data: dict) -> BoxSpec:
    if not isinstance(data, dict):
        raise CommandError("box spec must be a JSON object")
    known = {f.name for f in dataclasses.fields(BoxSpec)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise CommandError(f"unknown box spec field(s): {', '.join(unknown)}")
    try:
        return BoxSpec(**data)
    except (TypeError, ValueError) as exc:
        raise CommandError(f"invalid box spec: {exc}") from None


# -- commands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.spec is not None:
        try:
            data = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"cannot read box spec {args.spec}: {exc}") from None
        spec = _spec_from_dict(data)
        cloud, labels = synth_box(spec, args.seed)
        scenes = [Scene(args.name, cloud, labels, "box", spec)]
    else:
        scenes = synthetic_dataset(
            args.count,
            args.seed,
            noise_sigma=args.noise,
            occluded_flaps=args.occluded_flaps,
            clutter=args.clutter,
        )
    written = []
    try:
        for scene in scenes:
            written.extend(save_scene(scene, out))
    except OSError as exc:
        raise CommandError(f"cannot write to {out}: {exc.strerror or exc}") from None
    for p in written:
        print(p)
    return 0


def cmd_infer(args) -> int:
    config = _load_config(args.config)
    weights = _load_weights(args.weights)
    try:
        cloud = load_cloud(args.cloud)
    except OSError as exc:
        raise CommandError(f"cannot read cloud {args.cloud}: {exc.strerror or exc}") from None
    except CloudParseError as exc:
        raise CommandError(f"{args.cloud}: {exc}") from None
    try:
        result = infer_box(cloud, weights, config)
    except PipelineError as exc:
        raise CommandError(str(exc)) from None
    doc = serialize.model_to_dict(
        result.assignment, result.score, result.segments, result.features, cluster_size=result.cluster_size
    )
    if args.format == "structured":
        _emit(serialize.dumps(doc), args.out)
    else:
        _emit(_model_text(doc), args.out)
    return 0


def _model_text(doc: dict) -> str:
    lines = [f"score J = {doc['score']:.6f}", "", f"{'role':<8}{'segment':>8}   centroid"]
    for role in ROLES:
        s = doc["assignment"][role]
        where = "" if s is None else "  ".join(f"{v:7.3f}" for v in doc["segments"][s]["centroid"])
        lines.append(f"{role:<8}{'-' if s is None else s:>8}   {where}")
    if "features" in doc:
        lines += ["", "features"] + [f"  {k:<7}{doc['features'][k]:10.4f}" for k in FEATURE_NAMES]
    return "\n".join(lines) + "\n"


def _scene_segments(scenes, config: PipelineConfig):
    out = []
    for scene in scenes:
        try:
            cluster = main_cluster(scene.cloud, config.cluster)
        except PipelineError as exc:
            print(f"warning: {scene.name}: {exc}; skipped", file=sys.stderr)
            continue
        out.append((extract_segments(cluster, config.segmentation), scene.labels, cluster.centroid()))
    return out


def cmd_train(args) -> int:
    config = _load_config(args.config)
    scenes = _load_scenes(args.scenes)
    examples = make_training_set(
        _scene_segments(scenes, config),
        box_template(config.two_stage),
        config.features,
        PerturbationSampler(count=args.perturbations, seed=args.seed),
    )
    if not examples:
        raise CommandError("no usable training scenes")
    fitted = fit(examples, config.ridge)
    _emit(serialize.dumps(serialize.weights_to_dict(fitted)), args.out)
    print(f"trained on {len(examples)} examples from {len(scenes)} scenes", file=sys.stderr)
    return 0


def _load_scenes(directory: str):
    try:
        scenes = load_scene_dir(directory)
    except FileNotFoundError as exc:
        raise CommandError(str(exc)) from None
    if not scenes:
        raise CommandError(f"no labelled scenes in {directory}")
    return scenes


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    weights = _load_weights(args.weights)
    report = run_benchmark(_load_scenes(args.dataset), weights, config)
    if args.format == "structured":
        _emit(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    else:
        _emit(report.to_table() + "\n", args.out)
    return 0


def _load_model(path: str):
    try:
        return serialize.model_from_dict(_read_doc(path, "model"))
    except serialize.DocumentError as exc:
        raise CommandError(f"{path}: {exc}") from None


def cmd_plan(args) -> int:
    config = _load_config(args.config)
    assign, _, segments = _load_model(args.model)
    plan = make_plan(assign, segments, args.steps or config.planner.steps)
    _emit(serialize.dumps(serialize.plan_to_dict(plan)), args.out)
    return 0


SIDE_FILL = "#5a5a5a"
OTHER_FILL = "#d9d9d9"


def wireframe_svg(assign, segments, azimuth: float = 35.0, elevation: float = 30.0, size: int = 480) -> str:
    """Orthographic view of the assigned rectangles; sides dark, base and flaps light."""
    az, el = math.radians(azimuth), math.radians(elevation)
    view = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    right = np.array([-math.sin(az), math.cos(az), 0.0])
    up = np.cross(view, right)
    faces = [(node, segments[s].corners) for node, s in enumerate(assign) if s is not None]
    if not faces:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}"></svg>\n'
    pts = np.vstack([c for _, c in faces])
    uv = np.column_stack([pts @ right, pts @ up])
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    scale = 0.9 * size / max(float((hi - lo).max()), 1e-9)
    centre = 0.5 * (lo + hi)

    def to_px(c):
        p = (np.column_stack([c @ right, c @ up]) - centre) * scale
        return " ".join(f"{size / 2 + x:.2f},{size / 2 - y:.2f}" for x, y in p)

    # painter's order: farthest from the viewer first
    faces.sort(key=lambda f: float(f[1].mean(axis=0) @ view))
    body = []
    for node, corners in faces:
        fill = SIDE_FILL if node < 4 else OTHER_FILL
        body.append(
            f'  <polygon points="{to_px(corners)}" fill="{fill}" fill-opacity="0.85" '
            f'stroke="#000" stroke-width="1"><title>{ROLES[node]}</title></polygon>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n' + "\n".join(body) + "\n</svg>\n"
    )


def cmd_export_wireframe(args) -> int:
    assign, _, segments = _load_model(args.model)
    _emit(wireframe_svg(assign, segments, args.azimuth, args.elevation), args.out)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxcrf", description="Box model inference from point clouds.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, fmt=False, out_required=False):
        if config:
            p.add_argument("--config", help="JSON file overriding pipeline defaults")
        if fmt:
            p.add_argument("--format", choices=("text", "structured"), default="text")
        p.add_argument("--out", required=out_required, help="output path (default: standard output)")

    p = sub.add_parser("synth", help="write synthetic labelled scenes")
    p.add_argument("--spec", help="JSON box spec; without it, random scenes are drawn")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--name", default="box")
    p.add_argument("--count", type=int, default=1, help="number of random scenes")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma (m)")
    p.add_argument("--occluded-flaps", type=int, default=0, choices=range(5))
    p.add_argument("--clutter", type=float, default=0.0, help="clutter points as a fraction of the box")
    common(p, config=False, out_required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("infer", help="infer the box model of a cloud")
    p.add_argument("cloud")
    p.add_argument("--weights", required=True)
    common(p, fmt=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("train", help="fit weights on a directory of labelled scenes")
    p.add_argument("scenes")
    p.add_argument("--seed", type=int, required=True, help="seed of the perturbation sampler")
    p.add_argument("--perturbations", type=int, default=20)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="benchmark weights on a directory of labelled scenes")
    p.add_argument("dataset")
    p.add_argument("--weights", required=True)
    common(p, fmt=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", help="flap-closing plan for an inferred model")
    p.add_argument("model")
    p.add_argument("--steps", type=int, help="waypoints per flap (default from config)")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("export-wireframe", help="SVG drawing of an inferred model")
    p.add_argument("model")
    p.add_argument("--azimuth", type=float, default=35.0)
    p.add_argument("--elevation", type=float, default=30.0)
    common(p, config=False)
    p.set_defaults(func=cmd_export_wireframe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "steps", None) is not None and args.steps < 2:
        print("boxcrf: error: --steps must be at least 2", file=sys.stderr)
        return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (CommandError, serialize.DocumentError) as exc:
        print(f"boxcrf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
