"""Command-line frontend.

Box literals on flags are "cx,cy,w,h,theta" with theta in radians; points
are "x,y".  All randomness is seeded via --seed (default 0), so identical
invocations produce byte-identical output.  OBBKIT_THREADS caps internal
parallelism of the batch kernels (0 = auto).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import align, assignment, encoding, evalio, geometry, losses, proposals

PROG = "obbkit"


def _parse_box(text: str) -> geometry.OrientedBox:
    parts = text.split(",")
    if len(parts) != 5:
        raise ValueError(f"box literal must be cx,cy,w,h,theta, got {text!r}")
    return geometry.OrientedBox(*(float(v) for v in parts))


def _parse_point(text: str) -> geometry.Point:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"point literal must be x,y, got {text!r}")
    return geometry.Point(float(parts[0]), float(parts[1]))


def _parse_distances(text: str) -> encoding.DistanceVector:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"distances literal must be l,t,r,b, got {text!r}")
    return encoding.DistanceVector(*(float(v) for v in parts))


def _load_box_file(path: str) -> list[geometry.OrientedBox]:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, list):
        raise ValueError(f"{path}: expected a JSON array of [cx,cy,w,h,theta] rows")
    return [geometry.OrientedBox(*(float(v) for v in row)) for row in payload]


def _load_detections(path: str) -> list[evalio.DetectionRecord]:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        return evalio.parse_detections_json(text)
    return evalio.parse_detections_text(text)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump_json(payload, out: str | None) -> None:
    _emit(json.dumps(payload, indent=2) + "\n", out)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_iou(args) -> int:
    if args.a_file or args.b_file:
        if not (args.a_file and args.b_file):
            raise ValueError("matrix mode needs both --a-file and --b-file")
        mat = geometry.iou_matrix(_load_box_file(args.a_file), _load_box_file(args.b_file))
        _dump_json({"iou": mat.tolist()}, args.out)
        return 0
    if not (args.a and args.b):
        raise ValueError("need --a and --b box literals (or --a-file/--b-file)")
    a = _parse_box(args.a)
    b = _parse_box(args.b)
    print(f"{geometry.rotated_iou(a, b):.6f}")
    if args.mc:
        print(f"{geometry.iou_oracle_mc(a, b, args.samples, args.seed):.6f}")
    return 0


def _cmd_nms(args) -> int:
    dets = _load_detections(args.dets)
    keep = proposals.rotated_nms([d.box for d in dets], [d.score for d in dets], args.iou_thr)
    _dump_json({"keep": keep}, args.out)
    return 0


def _cmd_encode(args) -> int:
    grid = assignment.FeatureGridSpec.for_level(args.level, 1, 1)
    dv, theta = encoding.encode_distances(_parse_point(args.point), _parse_box(args.gt), grid)
    _dump_json({"distances": list(dv.astuple()), "theta": theta}, args.out)
    return 0


def _cmd_decode(args) -> int:
    grid = assignment.FeatureGridSpec.for_level(args.level, 1, 1)
    box = encoding.decode_box(
        _parse_point(args.point), _parse_distances(args.distances), args.theta, grid
    )
    _dump_json({"box": list(box.astuple())}, args.out)
    return 0


def _cmd_assign(args) -> int:
    records = evalio.parse_dota_annotation(Path(args.gts).read_text())
    cfg = assignment.AssignerConfig(alpha=args.alpha, sigma=args.sigma)
    pyramid = assignment.FeatureGridSpec.pyramid(args.image_size)
    per_gt = []
    by_level: dict[int, list[int]] = {}
    for gi, rec in enumerate(records):
        pos = assignment.assign_level(rec.box, cfg, pyramid)
        by_level.setdefault(pos, []).append(gi)
        per_gt.append({"index": gi, "category": rec.category, "level": pyramid[pos].level, "n_pos": 0})
    level_counts = []
    missing = []
    for pos, grid in enumerate(pyramid):
        idxs = by_level.get(pos, [])
        res = assignment.assign_points(grid, [records[i].box for i in idxs], cfg)
        level_counts.append({"level": grid.level, "n_pos": res.n_pos})
        for li, gi in enumerate(idxs):
            n = int(np.count_nonzero(res.matched_gt == li))
            per_gt[gi]["n_pos"] = n
            if n == 0:
                missing.append(gi)
    _dump_json(
        {"gts": per_gt, "levels": level_counts, "gts_without_positives": sorted(missing)},
        args.out,
    )
    return 0


def _cmd_offsets(args) -> int:
    box = _parse_box(args.box)
    grid = assignment.FeatureGridSpec.pyramid(args.image_size)[args.level - 2]
    if args.pos:
        ix, iy = (int(v) for v in args.pos.split(","))
    else:
        ix = min(max(int(box.cx // grid.stride), 0), grid.width - 1)
        iy = min(max(int(box.cy // grid.stride), 0), grid.height - 1)
    positions = align.sampling_positions(box, (ix, iy), grid)
    boxes = np.tile(geometry.as_array([box])[0], (grid.height, grid.width, 1))
    field = align.offset_field(boxes, grid)
    _dump_json(
        {
            "level": grid.level,
            "position": [ix, iy],
            "kernel": [list(r) for r in align.KERNEL_OFFSETS],
            "positions": positions.tolist(),
            "offsets": field[iy, ix].tolist(),
        },
        args.out,
    )
    return 0


def _cmd_loss(args) -> int:
    payload = json.loads(Path(args.fixture).read_text())
    cfg = losses.LossConfig(
        lam=args.lam, focal_gamma=args.gamma, focal_alpha=args.alpha_f, smooth_l1_beta=args.beta
    )
    batches = []
    for entry in payload["levels"]:
        labels = np.asarray(entry["labels"], dtype=np.int8).ravel()
        matched = np.asarray(
            entry.get("matched_gt", np.where(labels == assignment.POSITIVE, 0, -1)), dtype=np.int64
        ).ravel()
        res = assignment.AssignmentResult(labels=labels, matched_gt=matched)
        batches.append(
            losses.ClmLevelBatch(
                scores=np.asarray(entry["scores"], dtype=np.float64),
                dist_preds=np.asarray(entry["distances"], dtype=np.float64),
                angle_preds=np.asarray(entry["angles"], dtype=np.float64),
                assign=res,
                dist_targets=np.asarray(entry["dist_targets"], dtype=np.float64),
                angle_targets=np.asarray(entry["angle_targets"], dtype=np.float64),
            )
        )
    bd = losses.clm_loss(batches, cfg)
    _dump_json(
        {
            "ctr": bd.ctr,
            "dist": bd.dist,
            "angle": bd.angle,
            "total": bd.total,
            "n_points": bd.n_points,
            "n_pos": bd.n_pos,
        },
        args.out,
    )
    return 0


def _proposal_config(args) -> proposals.ProposalConfig:
    return proposals.ProposalConfig(
        nms_thr=args.nms_thr,
        pre_nms_topk=args.pre_topk,
        post_nms_topn=args.post_topn,
        score_floor=args.score_floor,
    )


def _proposals_to_records(props, image_id: str) -> list[evalio.DetectionRecord]:
    return [
        evalio.DetectionRecord(image_id=image_id, category="proposal", score=p.score, box=p.box)
        for p in props
    ]


def _cmd_propose(args) -> int:
    scene = proposals.scene_from_dict(json.loads(Path(args.scene).read_text()))
    props = proposals.generate_proposals(scene.levels, _proposal_config(args))
    records = _proposals_to_records(props, args.image_id)
    if args.format == "json":
        _emit(evalio.format_detections_json(records), args.out)
    else:
        _emit(evalio.format_detections_text(records), args.out)
    return 0


def _cmd_simulate(args) -> int:
    cfg = proposals.SceneConfig(
        image_size=args.image_size,
        min_gts=args.min_gts,
        max_gts=args.max_gts,
        min_scale=args.min_scale,
        max_scale=args.max_scale,
        noise=args.noise,
    )
    scene = proposals.simulate_scene(args.seed, cfg)
    props = proposals.generate_proposals(scene.levels, _proposal_config(args))
    gt_records = {"scene": [evalio.GroundTruthRecord(box=g, category="object") for g in scene.gts]}
    rec = evalio.recall({"scene": [p.box for p in props]}, gt_records, args.recall_iou)
    if args.dump_scene:
        _dump_json(proposals.scene_to_dict(scene), args.dump_scene)
    if args.dump_proposals:
        _emit(evalio.format_detections_json(_proposals_to_records(props, "scene")), args.dump_proposals)
    if args.json:
        _dump_json(
            {
                "seed": args.seed,
                "noise": args.noise,
                "n_gts": len(scene.gts),
                "n_proposals": len(props),
                "recall_iou": args.recall_iou,
                "recall": rec,
            },
            None,
        )
    else:
        print(f"recall {rec:.4f}")
    return 0


def _cmd_parse(args) -> int:
    records = evalio.parse_dota_annotation(Path(args.gts).read_text())
    payload = [
        {
            "cx": r.box.cx,
            "cy": r.box.cy,
            "w": r.box.w,
            "h": r.box.h,
            "theta": r.box.theta,
            "category": r.category,
            "difficult": r.difficult,
        }
        for r in records
    ]
    _dump_json(payload, args.out)
    return 0


def _cmd_eval(args) -> int:
    dets = _load_detections(args.dets)
    gts = evalio.load_annotation_dir(args.gts)
    result = evalio.evaluate_detections(dets, gts, args.iou_thr, args.metric)
    for cat in sorted(result.per_class):
        print(f"{cat:20s} {result.per_class[cat]:.4f}")
    print(f"{'mAP':20s} {result.mean:.4f}")
    payload = {
        "metric": args.metric,
        "iou_thr": args.iou_thr,
        "per_class": {k: result.per_class[k] for k in sorted(result.per_class)},
        "map": result.mean,
    }
    print(json.dumps(payload, indent=2))
    if args.json:
        _dump_json(payload, args.json)
    return 0


def _merge_hist(a: evalio.Histogram | None, b: evalio.Histogram) -> evalio.Histogram:
    if a is None:
        return b
    if not np.array_equal(a.edges, b.edges):
        raise ValueError("histogram edges differ across images")
    return evalio.Histogram(edges=a.edges, counts=a.counts + b.counts)


def _cmd_stats(args) -> int:
    dets = _load_detections(args.props)
    gts = evalio.load_annotation_dir(args.gts)
    by_image: dict[str, list[geometry.OrientedBox]] = {}
    for d in dets:
        by_image.setdefault(d.image_id, []).append(d.box)
    iou_h = None
    dw_h = None
    dh_h = None
    for image_id in sorted(gts):
        props = by_image.get(image_id, [])
        boxes = [r.box for r in gts[image_id]]
        iou_h = _merge_hist(iou_h, evalio.iou_histogram(props, boxes, args.bins, args.pos_thr))
        dw, dh = evalio.target_histogram(
            props, boxes, args.target_bins, (-args.target_range, args.target_range), args.pos_thr
        )
        dw_h = _merge_hist(dw_h, dw)
        dh_h = _merge_hist(dh_h, dh)
    if iou_h is None:
        raise ValueError("no annotated images found")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "iou_hist.csv").write_text(iou_h.to_csv())
    (out_dir / "dw_hist.csv").write_text(dw_h.to_csv())
    (out_dir / "dh_hist.csv").write_text(dh_h.to_csv())
    print(f"positives {iou_h.total}")
    print(f"iou_mean {iou_h.mean():.4f}")
    print(f"dw_mean {dw_h.mean():.4f}")
    print(f"dh_mean {dh_h.mean():.4f}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Oriented-box kernels: rotated IoU, assignment, coders, "
        "offset fields, proposals, and rotated-detection metrics.",
        epilog='Box literals are "cx,cy,w,h,theta" (radians); points are "x,y". '
        "OBBKIT_THREADS caps batch-kernel parallelism (0 = auto).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iou", help="rotated IoU of two boxes, or a full matrix from files")
    p.add_argument("--a", help="first box literal")
    p.add_argument("--b", help="second box literal")
    p.add_argument("--a-file", help="JSON array of boxes (rows cx,cy,w,h,theta)")
    p.add_argument("--b-file", help="JSON array of boxes")
    p.add_argument("--mc", action="store_true", help="also print the Monte-Carlo estimate")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write JSON here instead of stdout (matrix mode)")
    p.set_defaults(func=_cmd_iou)

    p = sub.add_parser("nms", help="greedy rotated NMS over a detection file")
    p.add_argument("--dets", required=True, help="detections (interchange text or JSON)")
    p.add_argument("--iou-thr", type=float, default=0.8)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_nms)

    p = sub.add_parser("encode", help="distance/angle targets of a point in a gt box")
    p.add_argument("--point", required=True)
    p.add_argument("--gt", required=True, help="gt box literal")
    p.add_argument("--level", type=int, default=2, choices=assignment.LEVELS)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="box from normalized distances + angle at a point")
    p.add_argument("--point", required=True)
    p.add_argument("--distances", required=True, help='normalized "l,t,r,b"')
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--level", type=int, default=2, choices=assignment.LEVELS)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("assign", help="level routing and central-region positives for an annotation file")
    p.add_argument("--gts", required=True, help="annotation file")
    p.add_argument("--image-size", type=int, default=1024)
    p.add_argument("--alpha", type=float, default=8.0)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_assign)

    p = sub.add_parser("offsets", help="sampling lattice and offset field entries for one box")
    p.add_argument("--box", required=True)
    p.add_argument("--level", type=int, default=3, choices=assignment.LEVELS)
    p.add_argument("--image-size", type=int, default=1024)
    p.add_argument("--pos", help='grid position "ix,iy" (default: cell under the box center)')
    p.add_argument("--out")
    p.set_defaults(func=_cmd_offsets)

    p = sub.add_parser("loss", help="dense loss breakdown from a fixture file")
    p.add_argument("--fixture", required=True)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha-f", type=float, default=0.25)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_loss)

    def add_proposal_flags(pp):
        pp.add_argument("--nms-thr", type=float, default=0.8)
        pp.add_argument("--pre-topk", type=int, default=2000)
        pp.add_argument("--post-topn", type=int, default=2000)
        pp.add_argument("--score-floor", type=float, default=0.25)

    p = sub.add_parser("propose", help="proposals from a dumped scene file")
    p.add_argument("--scene", required=True)
    add_proposal_flags(p)
    p.add_argument("--image-id", default="scene")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_propose)

    p = sub.add_parser("simulate", help="synthetic scene end-to-end; prints recall")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--min-gts", type=int, default=5)
    p.add_argument("--max-gts", type=int, default=5)
    p.add_argument("--min-scale", type=float, default=24.0)
    p.add_argument("--max-scale", type=float, default=96.0)
    add_proposal_flags(p)
    p.add_argument("--recall-iou", type=float, default=0.7)
    p.add_argument("--dump-scene", help="write the scene JSON here")
    p.add_argument("--dump-proposals", help="write proposals (interchange JSON) here")
    p.add_argument("--json", action="store_true", help="print a JSON summary instead")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("parse", help="parse an annotation file to JSON box records")
    p.add_argument("--gts", required=True, help="annotation file")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("eval", help="per-class AP and mAP of detections against annotations")
    p.add_argument("--dets", required=True, help="detections (interchange text or JSON)")
    p.add_argument("--gts", required=True, help="directory of per-image annotation files")
    p.add_argument("--iou-thr", type=float, default=0.5)
    p.add_argument("--metric", choices=("voc07", "voc12"), default="voc12")
    p.add_argument("--json", help="also write the JSON report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="IoU / regression-target histograms as CSV")
    p.add_argument("--props", required=True, help="proposals (interchange text or JSON)")
    p.add_argument("--gts", required=True, help="directory of per-image annotation files")
    p.add_argument("--pos-thr", type=float, default=0.7)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--target-bins", type=int, default=80)
    p.add_argument("--target-range", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
