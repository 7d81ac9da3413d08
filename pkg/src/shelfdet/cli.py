"""Batch command-line surface for the teacher -> pseudo-label -> student loop.

Subcommands: refine, pseudo-label, merge, eval, sample-frames, synth.
Configuration precedence: command-line flags override config-file values,
which override built-in defaults; `--dump-config` writes the effective
config so a run can be reproduced exactly. Data goes to files or stdout,
diagnostics to stderr; output files are written atomically.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import dataset as ds
from . import report as rpt
from .dataset import (
    Annotation,
    Category,
    DatasetError,
    DetectionDataset,
    DetectionResults,
    atomic_write_bytes,
)
from .evaluation import EvalConfig, EvaluationError, evaluate
from .selftrain import (
    FrameSamplerConfig,
    RoundManifest,
    SelfTrainError,
    merge,
    pseudo_label,
    record_round,
    sample_frames,
)
from .suppression import Stage, SuppressionConfig, refine_detailed
from .synth import CorruptionSpec, SceneSpec, corrupt, generate_scene


@dataclass(frozen=True)
class PipelineConfig:
    suppression: SuppressionConfig = field(default_factory=SuppressionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sampler: FrameSamplerConfig = field(default_factory=FrameSamplerConfig)
    scene: SceneSpec = field(default_factory=SceneSpec)
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    report_format: str = "table"
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.report_format not in ("table", "machine"):
            raise ValueError(f"report_format must be table|machine: {self.report_format}")

    def to_dict(self) -> dict:
        return {
            "suppression": self.suppression.to_dict(),
            "eval": self.eval.to_dict(),
            "sampler": self.sampler.to_dict(),
            "scene": self.scene.to_dict(),
            "corruption": self.corruption.to_dict(),
            "report_format": self.report_format,
            "paths": dict(self.paths),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            suppression=SuppressionConfig.from_dict(d.get("suppression", {})),
            eval=EvalConfig.from_dict(d.get("eval", {})),
            sampler=FrameSamplerConfig.from_dict(d.get("sampler", {})),
            scene=SceneSpec.from_dict(d.get("scene", {})),
            corruption=CorruptionSpec.from_dict(d.get("corruption", {})),
            report_format=d.get("report_format", "table"),
            paths=dict(d.get("paths", {})),
        )


def _load_pipeline_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, "rb") as f:
        return PipelineConfig.from_dict(json.load(f))


def _override(obj, **kwargs):
    updates = {k: v for k, v in kwargs.items() if v is not None}
    return dataclasses.replace(obj, **updates) if updates else obj


def _suppression_from(args, cfg: PipelineConfig) -> SuppressionConfig:
    stages = None
    if getattr(args, "stages", None):
        stages = tuple(Stage(s.strip()) for s in args.stages.split(","))
    return _override(
        cfg.suppression,
        score_threshold=getattr(args, "score_threshold", None),
        nms_iou_threshold=getattr(args, "nms_iou", None),
        nms_inter_iou_threshold=getattr(args, "nms_inter_iou", None),
        stage_order=stages,
    )


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _maybe_dump_config(args, cfg: PipelineConfig) -> None:
    if getattr(args, "dump_config", None):
        atomic_write_bytes(
            args.dump_config, json.dumps(cfg.to_dict(), indent=2).encode("utf-8")
        )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline config file")
    p.add_argument("--threads", type=int, default=1, help="worker thread bound")
    p.add_argument("--output", help="output path")
    p.add_argument("--format", choices=["table", "machine"], default=None)
    p.add_argument("--dump-config", help="write the effective config to this path")


def _add_suppression_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--score-threshold", type=float)
    p.add_argument("--nms-iou", type=float)
    p.add_argument("--nms-inter-iou", type=float)
    p.add_argument("--stages", help="comma list of score_filter,nms_union,nms_inter")


def cmd_refine(args) -> int:
    cfg = _load_pipeline_config(args.config)
    sup = _suppression_from(args, cfg)
    cfg = dataclasses.replace(cfg, suppression=sup)
    _maybe_dump_config(args, cfg)
    results = ds.parse_results(_read_bytes(args.results))

    def one(item):
        image_id, boxes = item
        kept, removed = refine_detailed(boxes, sup)
        return image_id, kept, removed

    totals = {stage: 0 for stage in sup.stage_order}
    refined: dict[int, list] = {}
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        for image_id, kept, removed in pool.map(one, results.by_image.items()):
            refined[image_id] = kept
            for stage, n in removed.items():
                totals[stage] += n

    out = ds.write_results(DetectionResults(refined))
    if args.output:
        atomic_write_bytes(args.output, out)
    else:
        sys.stdout.write(out.decode("utf-8"))
    for stage in sup.stage_order:
        print(f"{stage.value} removed: {totals[stage]}", file=sys.stderr)
    print(
        f"kept {sum(len(v) for v in refined.values())} of "
        f"{results.total_detections()} detections",
        file=sys.stderr,
    )
    return 0


def cmd_pseudo_label(args) -> int:
    cfg = _load_pipeline_config(args.config)
    sup = _suppression_from(args, cfg)
    cfg = dataclasses.replace(cfg, suppression=sup)
    _maybe_dump_config(args, cfg)
    pool_ds = ds.parse_dataset(_read_bytes(args.images))
    results = ds.parse_results(_read_bytes(args.results))
    categories = tuple((c.category_id, c.name) for c in pool_ds.categories) or (
        (1, "object"),
    )
    out_ds = pseudo_label(list(pool_ds.images), results, sup, categories)
    if not args.output:
        print("pseudo-label requires --output", file=sys.stderr)
        return 2
    atomic_write_bytes(args.output, ds.write_dataset(out_ds))

    prev = None
    if args.prev_manifest:
        prev = RoundManifest.from_json(_read_bytes(args.prev_manifest))
    manifest = record_round(
        prev,
        teacher_checkpoint_label=args.teacher_label,
        labeled_dataset_ref=args.labeled_ref or "",
        unlabeled_pool_ref=args.images,
        suppression_config=sup,
        output_dataset_ref=args.output,
    )
    manifest_path = args.manifest or args.output + ".manifest.json"
    atomic_write_bytes(manifest_path, manifest.to_json())
    print(
        f"round {manifest.round_index}: {len(out_ds.annotations)} pseudo "
        f"annotations on {len(out_ds.images)} images",
        file=sys.stderr,
    )
    return 0


def cmd_merge(args) -> int:
    cfg = _load_pipeline_config(args.config)
    _maybe_dump_config(args, cfg)
    labeled = ds.parse_dataset(_read_bytes(args.labeled))
    pseudo = ds.parse_dataset(_read_bytes(args.pseudo))
    result = merge(labeled, pseudo)
    if not args.output:
        print("merge requires --output", file=sys.stderr)
        return 2
    atomic_write_bytes(args.output, ds.write_dataset(result.dataset))
    if args.remap:
        remap = {
            "images": {f"{side}:{old}": new for (side, old), new in result.image_id_map.items()},
            "annotations": {
                f"{side}:{old}": new for (side, old), new in result.annotation_id_map.items()
            },
        }
        atomic_write_bytes(args.remap, json.dumps(remap, indent=2).encode("utf-8"))
    stats = ds.dataset_stats(result.dataset)
    print(
        f"merged: {stats.image_count} images, {stats.annotation_count} annotations, "
        f"mean density {stats.mean_density:.2f}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _load_pipeline_config(args.config)
    eval_cfg = _override(
        cfg.eval,
        max_detections=args.max_detections,
        recall_points=args.recall_points,
    )
    cfg = dataclasses.replace(cfg, eval=eval_cfg)
    _maybe_dump_config(args, cfg)
    gt = ds.parse_dataset(_read_bytes(args.gt))
    results = ds.parse_results(_read_bytes(args.results))
    report = evaluate(gt, results, eval_cfg)

    fmt = args.format or cfg.report_format
    if fmt == "machine":
        sys.stdout.write(rpt.report_json_bytes(report).decode("utf-8") + "\n")
    else:
        print(rpt.format_report_table(report))
    if args.output:
        atomic_write_bytes(args.output + ".json", rpt.report_json_bytes(report))
        atomic_write_bytes(args.output + ".csv", rpt.report_csv_bytes(report))
        buf = io.BytesIO()
        rpt.render_pr_curves(report, buf)
        atomic_write_bytes(args.output + "_pr.png", buf.getvalue())
    return 0


def cmd_sample_frames(args) -> int:
    cfg = _load_pipeline_config(args.config)
    sampler = _override(
        cfg.sampler,
        min_detections=args.min_detections,
        temporal_stride=args.stride,
        max_frames=args.max_frames,
    )
    cfg = dataclasses.replace(cfg, sampler=sampler)
    _maybe_dump_config(args, cfg)
    results = ds.parse_results(_read_bytes(args.results))
    frames = [(image_id, len(boxes)) for image_id, boxes in results.by_image.items()]
    picked = sample_frames(frames, sampler)
    payload = json.dumps(picked).encode("utf-8")
    if args.output:
        atomic_write_bytes(args.output, payload)
    else:
        sys.stdout.write(payload.decode("utf-8") + "\n")
    print(f"kept {len(picked)} of {len(frames)} frames", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    cfg = _load_pipeline_config(args.config)
    scene = _override(
        cfg.scene,
        image_width=args.width,
        image_height=args.height,
        target_density=args.density,
        grid_rows=args.rows,
        grid_cols=args.cols,
        jitter=args.jitter,
        seed=args.seed,
    )
    corruption = _override(
        cfg.corruption,
        coordinate_noise_sigma=args.noise_sigma,
        nested_fp_rate=args.nested_fp_rate,
        drop_rate=args.drop_rate,
        tp_score_mean=args.tp_score_mean,
        tp_score_sigma=args.tp_score_sigma,
        fp_score_mean=args.fp_score_mean,
        fp_score_sigma=args.fp_score_sigma,
        seed=args.seed,
    )
    cfg = dataclasses.replace(cfg, scene=scene, corruption=corruption)
    _maybe_dump_config(args, cfg)
    if not args.output:
        print("synth requires --output (a directory)", file=sys.stderr)
        return 2

    import os

    os.makedirs(args.output, exist_ok=True)
    images = []
    annotations = []
    by_image: dict[int, list] = {}
    provenance: dict[str, list] = {}
    next_ann = 1
    for i in range(args.scenes):
        image_id = i + 1
        sc = dataclasses.replace(scene, seed=scene.seed + i)
        co = dataclasses.replace(corruption, seed=corruption.seed + i)
        image, gt = generate_scene(
            sc, image_id=image_id, file_name=f"{args.name_prefix}_{image_id:06d}.jpg"
        )
        images.append(image)
        gt_ann_ids = []
        for box in gt:
            annotations.append(
                Annotation(
                    annotation_id=next_ann,
                    image_id=image_id,
                    category_id=1,
                    bbox=box,
                )
            )
            gt_ann_ids.append(next_ann)
            next_ann += 1
        dets, tags = corrupt(gt, co, image=image)
        by_image[image_id] = dets
        provenance[str(image_id)] = [
            {
                "det_index": k,
                "kind": tag.kind.value,
                "gt_index": tag.gt_index,
                "gt_annotation_id": gt_ann_ids[tag.gt_index],
            }
            for k, tag in enumerate(tags)
        ]

    out_ds = DetectionDataset(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=(Category(1, "object"),),
    )
    atomic_write_bytes(os.path.join(args.output, "dataset.json"), ds.write_dataset(out_ds))
    atomic_write_bytes(
        os.path.join(args.output, "results.json"),
        ds.write_results(DetectionResults(by_image)),
    )
    atomic_write_bytes(
        os.path.join(args.output, "provenance.json"),
        json.dumps({"images": provenance}, indent=2).encode("utf-8"),
    )
    print(
        f"wrote {args.scenes} scenes, {len(annotations)} ground-truth boxes, "
        f"{sum(len(v) for v in by_image.values())} detections",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shelfdet",
        description="Pseudo-label refinement and evaluation for dense shelf detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="apply score filter and NMS stages to detections")
    _add_common(p)
    _add_suppression_flags(p)
    p.add_argument("--results", required=True, help="COCO results file")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("pseudo-label", help="turn refined detections into a pseudo dataset")
    _add_common(p)
    _add_suppression_flags(p)
    p.add_argument("--images", required=True, help="dataset file providing the image pool")
    p.add_argument("--results", required=True)
    p.add_argument("--manifest", help="round manifest output path")
    p.add_argument("--prev-manifest", help="previous round manifest to chain from")
    p.add_argument("--teacher-label", default="teacher", help="checkpoint label to record")
    p.add_argument("--labeled-ref", help="labeled dataset path recorded in the manifest")
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("merge", help="merge a labeled and a pseudo-labeled dataset")
    _add_common(p)
    p.add_argument("--labeled", required=True)
    p.add_argument("--pseudo", required=True)
    p.add_argument("--remap", help="write the id remapping table here")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("eval", help="COCO-protocol mAP evaluation")
    _add_common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--max-detections", type=int)
    p.add_argument("--recall-points", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample-frames", help="pick dense frames from per-frame detections")
    _add_common(p)
    p.add_argument("--results", required=True, help="results keyed by frame index")
    p.add_argument("--min-detections", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--max-frames", type=int)
    p.set_defaults(func=cmd_sample_frames)

    p = sub.add_parser("synth", help="generate synthetic dense scenes and detections")
    _add_common(p)
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--name-prefix", default="synth", help="file_name prefix for images")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--nested-fp-rate", type=float)
    p.add_argument("--drop-rate", type=float)
    p.add_argument("--tp-score-mean", type=float)
    p.add_argument("--tp-score-sigma", type=float)
    p.add_argument("--fp-score-mean", type=float)
    p.add_argument("--fp-score-sigma", type=float)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, EvaluationError, SelfTrainError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
