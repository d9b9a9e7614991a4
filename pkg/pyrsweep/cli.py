#!/usr/bin/env python3
"""Command Line Interface for pyrsweep

Features:
- Infer coarse-to-fine depth maps for dataset views
- Filter and fuse depth maps into a PLY point cloud
- Evaluate depth maps and clouds
- Render seeded synthetic datasets
- Inspect derived hypothesis intervals and run the pixel-interval study
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .dataio import (
    Dataset,
    read_depth_map,
    read_pfm,
    read_ply,
    write_depth_map,
    write_pfm,
    write_ply,
)
from .depth import DepthMap, auto_levels, infer_depth
from .evaluator import Evaluator, interval_study
from .exceptions import PyrSweepError
from .fusion import consistency_filter, fuse
from .geometry import (
    RANGE_OK,
    depth_interval_for_offset,
    depth_search_ranges,
    level_size,
    pixel_grid,
    planes_for_interval,
)
from .logger import RunLogger, dumps
from .settings import FusionConfig, PipelineConfig, settings
from .synth import SCENE_KINDS, SceneSpec, synthesize, write_scene

logger = logging.getLogger(__name__)


def _auto_int(value: str) -> Optional[int]:
    """Integer flag that also accepts 'auto'"""
    if value == "auto":
        return None
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected an integer or 'auto', got '{value}'"
        ) from None


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        levels=args.levels,
        coarse_planes=args.coarse_planes,
        refine_planes=args.refine_planes,
        sample_offset_px=args.sample_offset,
        range_offset_px=args.range_offset,
        tau=args.tau,
        n_views=args.views,
        descriptor=args.descriptor,
        workers=args.workers,
        fusion=_fusion_config(args, FusionConfig()),
    )


def _fusion_config(args, base: FusionConfig) -> FusionConfig:
    """Thresholds given on the command line, the rest taken from ``base``"""
    flags = {
        "conf_min": args.conf,
        "reproj_px_max": args.reproj_px,
        "rel_depth_max": args.rel_depth,
        "min_consistent_views": args.min_views,
    }
    values = asdict(base)
    values.update({name: value for name, value in flags.items() if value is not None})
    return FusionConfig(**values)


def _recorded_fusion(depth_dir: Path) -> FusionConfig:
    """Fusion thresholds of the depth run that wrote ``depth_dir``"""
    sidecars = sorted(depth_dir.glob("depth_*.json"))
    if not sidecars:
        return FusionConfig()
    try:
        recorded = json.loads(sidecars[0].read_text())["config"]["fusion"]
        return FusionConfig(**recorded)
    except (KeyError, TypeError, ValueError) as err:
        raise PyrSweepError(
            f"{sidecars[0]}: unreadable fusion thresholds ({err})"
        ) from err


def _depth(args) -> Dict[str, Any]:
    dataset = Dataset(args.dataset)
    config = _pipeline_config(args).validate()
    sources = dataset.select_sources(args.ref, config.n_views - 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_dir = out / f"volumes_{args.ref:08d}" if args.dump_volumes else None

    maps = infer_depth(args.ref, sources, dataset, config, dump_dir=dump_dir)
    levels = []
    for D in reversed(maps):
        write_depth_map(D, out / f"depth_{args.ref:08d}_l{D.level}.pfm")
        write_pfm(D.confidence, out / f"conf_{args.ref:08d}_l{D.level}.pfm")
        levels.append(
            {
                **D.meta,
                "width": D.shape[1],
                "height": D.shape[0],
                "valid_pixels": int(D.valid.sum()),
            }
        )
    settings_dict = config.to_dict()
    settings_dict.pop("workers")
    sidecar = {
        "ref": args.ref,
        "sources": sources,
        "config": settings_dict,
        "levels": levels,
    }
    (out / f"depth_{args.ref:08d}.json").write_text(dumps(sidecar) + "\n")
    return {"ref": args.ref, "sources": sources, "levels": levels}


def _fuse(args) -> Dict[str, Any]:
    dataset = Dataset(args.dataset)
    depth_dir = Path(args.depths)
    cfg = _fusion_config(args, _recorded_fusion(depth_dir)).validate()
    view_ids, maps = [], []
    for view_id in dataset.view_ids:
        path = depth_dir / f"depth_{view_id:08d}_l0.pfm"
        if not path.is_file():
            continue
        D = read_depth_map(path)
        conf_path = depth_dir / f"conf_{view_id:08d}_l0.pfm"
        if conf_path.is_file():
            D = DepthMap(depth=D.depth, valid=D.valid, confidence=read_pfm(conf_path))
        view_ids.append(view_id)
        maps.append(D)
    if not maps:
        raise PyrSweepError(f"no level-0 depth maps found in {depth_dir}")

    cams = [dataset.camera(v) for v in view_ids]
    filtered = consistency_filter(maps, cams, cfg, workers=args.workers)
    images = [dataset.load_color(v) for v in view_ids]
    cloud = fuse(filtered, cams, cfg, images)
    write_ply(cloud, args.out)
    return {
        "views": view_ids,
        "surviving_pixels": [int(D.valid.sum()) for D in filtered],
        "points": len(cloud),
        "thresholds": asdict(cfg),
        "out": str(args.out),
    }


def _eval_cloud(args) -> Dict[str, Any]:
    evaluator = Evaluator(dist_cap=args.cap, threshold=args.threshold)
    report = evaluator.evaluate_cloud(read_ply(args.est), read_ply(args.gt)).to_dict()
    inputs = {"est": args.est, "gt": args.gt}
    evaluator.log_with_evaluation("eval-cloud", inputs, report)
    return report


def _eval_depth(args) -> Dict[str, Any]:
    evaluator = Evaluator()
    report = evaluator.evaluate_depth_dirs(args.est, args.gt)
    inputs = {"est": args.est, "gt": args.gt}
    evaluator.log_with_evaluation("eval-depth", inputs, report)
    return report


def _synth(args) -> Dict[str, Any]:
    spec = SceneSpec.preset(args.scene, args.seed)
    cams, images, depths = synthesize(
        spec, args.cameras, args.radius, args.width, args.height, workers=args.workers
    )
    write_scene(args.out, spec, cams, images, depths)
    return {
        "scene": args.scene,
        "seed": args.seed,
        "cameras": len(cams),
        "d_min": cams[0].d_min,
        "d_max": cams[0].d_max,
        "out": str(args.out),
    }


def _sweep_info(args) -> Dict[str, Any]:
    dataset = Dataset(args.dataset)
    sources = dataset.select_sources(args.ref, args.views - 1)
    ref = dataset.camera(args.ref)
    srcs = [dataset.camera(v) for v in sources]
    top = args.levels if args.levels is not None else auto_levels(ref.width, ref.height)
    mid = 0.5 * (ref.d_min + ref.d_max)

    levels = []
    for level in range(top, -1, -1):
        interval = depth_interval_for_offset(ref, srcs, level, args.sample_offset)
        width, height = level_size(ref.width, level), level_size(ref.height, level)
        pixels = pixel_grid(height, width)
        d_lo, d_hi, reason = depth_search_ranges(
            ref, srcs[0], pixels, np.full(len(pixels), mid), args.range_offset, level
        )
        span = (d_hi - d_lo)[reason == RANGE_OK]
        entry = {
            "level": level,
            "width": width,
            "height": height,
            "interval": interval,
            "planes": planes_for_interval(ref, interval),
            "degenerate_fraction": float(np.mean(reason != RANGE_OK)),
        }
        if span.size:
            entry.update(
                s_min=float(span.min()),
                s_mean=float(span.mean()),
                s_max=float(span.max()),
            )
        levels.append(entry)
    return {
        "ref": args.ref,
        "sources": sources,
        "d_min": ref.d_min,
        "d_max": ref.d_max,
        "levels": levels,
    }


def _interval_study(args) -> Dict[str, Any]:
    return interval_study(
        offsets=args.offsets,
        seeds=list(range(args.seeds)),
        kind=args.scene,
        cameras=args.cameras,
        width=args.width,
        height=args.height,
        tau=args.tau,
        range_offset_px=args.range_offset,
        workers=args.workers,
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--json", action="store_true", help="Output in JSON format")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging, -vv for debug"
    )
    parser.add_argument("--workers", type=int, default=None, help="Worker threads")


def _add_fusion_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--conf", type=float, default=None, help="Minimum confidence")
    parser.add_argument(
        "--reproj-px", type=float, default=None, help="Maximum reprojection error"
    )
    parser.add_argument(
        "--rel-depth", type=float, default=None, help="Maximum relative depth error"
    )
    parser.add_argument(
        "--min-views", type=int, default=None, help="Consistent views to keep a pixel"
    )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation"""
    parser = argparse.ArgumentParser(
        prog="pyrsweep", description="pyrsweep coarse-to-fine multi-view stereo"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    depth = sub.add_parser("depth", help="Infer the depth pyramid of one view")
    depth.add_argument("--dataset", required=True)
    depth.add_argument("--ref", type=int, required=True)
    depth.add_argument(
        "--views", type=int, default=5, help="Total views, reference included"
    )
    depth.add_argument(
        "--levels", type=_auto_int, default=None, help="Pyramid levels - 1 or 'auto'"
    )
    depth.add_argument("--coarse-planes", type=_auto_int, default=96)
    depth.add_argument("--refine-planes", type=_auto_int, default=8)
    depth.add_argument("--sample-offset", type=float, default=0.5)
    depth.add_argument("--range-offset", type=float, default=2.0)
    depth.add_argument(
        "--tau",
        type=float,
        default=1.0,
        help="Softmax temperature; about 0.05 suits the standardized features, "
        "1.0 spreads probability and pulls depth toward mid-range",
    )
    depth.add_argument("--descriptor", default="classic16")
    depth.add_argument(
        "--dump-volumes", action="store_true", help="Write aggregated cost volumes"
    )
    _add_fusion_flags(depth)
    depth.add_argument("--out", required=True)
    depth.set_defaults(handler=_depth)

    fuse_cmd = sub.add_parser("fuse", help="Fuse level-0 depth maps into a PLY cloud")
    fuse_cmd.add_argument("--dataset", required=True)
    fuse_cmd.add_argument("--depths", required=True)
    _add_fusion_flags(fuse_cmd)
    fuse_cmd.add_argument("--out", required=True)
    fuse_cmd.set_defaults(handler=_fuse)

    eval_cloud = sub.add_parser("eval-cloud", help="Accuracy/completeness of a cloud")
    eval_cloud.add_argument("--est", required=True)
    eval_cloud.add_argument("--gt", required=True)
    eval_cloud.add_argument("--cap", type=float, default=20.0)
    eval_cloud.add_argument("--threshold", type=float, default=0.5)
    eval_cloud.set_defaults(handler=_eval_cloud)

    eval_depth = sub.add_parser("eval-depth", help="Per-level L1 error of depth maps")
    eval_depth.add_argument("--est", required=True)
    eval_depth.add_argument("--gt", required=True)
    eval_depth.set_defaults(handler=_eval_depth)

    synth = sub.add_parser("synth", help="Render a synthetic dataset")
    synth.add_argument("--scene", choices=SCENE_KINDS, default="plane")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--cameras", type=int, default=5)
    synth.add_argument("--radius", type=float, default=0.8)
    synth.add_argument("--width", type=int, default=160)
    synth.add_argument("--height", type=int, default=128)
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=_synth)

    info = sub.add_parser("sweep-info", help="Derived intervals and search ranges")
    info.add_argument("--dataset", required=True)
    info.add_argument("--ref", type=int, required=True)
    info.add_argument("--views", type=int, default=5)
    info.add_argument("--levels", type=_auto_int, default=None)
    info.add_argument("--sample-offset", type=float, default=0.5)
    info.add_argument("--range-offset", type=float, default=2.0)
    info.set_defaults(handler=_sweep_info)

    study = sub.add_parser(
        "interval-study", help="Finest-level error per sample offset"
    )
    study.add_argument("--scene", choices=SCENE_KINDS, default="sphere")
    study.add_argument("--seeds", type=int, default=3)
    study.add_argument(
        "--offsets", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0]
    )
    study.add_argument("--cameras", type=int, default=5)
    study.add_argument("--width", type=int, default=160)
    study.add_argument("--height", type=int, default=128)
    study.add_argument("--tau", type=float, default=0.05)
    study.add_argument("--range-offset", type=float, default=2.0)
    study.set_defaults(handler=_interval_study)

    for command in sub.choices.values():
        _add_common(command)
    return parser


def _format(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, dict):
        return " ".join(f"{k}={_format(v)}" for k, v in value.items())
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _print_text(result: Dict[str, Any]) -> None:
    for key, value in result.items():
        if isinstance(value, list) and value and isinstance(value[0], dict):
            print(f"{key}:")
            for item in value:
                print(f"  {_format(item)}")
        else:
            print(f"{key}: {_format(value)}")


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    """Main function for the CLI, returning the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 2
    _configure_logging(args.verbose)

    try:
        result = args.handler(args)
    except (PyrSweepError, OSError) as err:
        message = " ".join(str(err).split())
        print(f"pyrsweep {args.command}: error: {message}", file=sys.stderr)
        return 1

    if args.json:
        print(dumps(result))
    else:
        _print_text(result)

    if settings.logging_enabled:
        arguments = {k: v for k, v in vars(args).items() if k != "handler"}
        RunLogger(args.command, settings.log_dir).log(
            {"command": args.command, "arguments": arguments, "result": result}
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
