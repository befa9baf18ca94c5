"""Regenerate the shared fixtures consumed by the frontend bindings tests.

Each fixture pairs inputs with the primary package's exact output, dumped
through the same JSON serializer the CLI uses, so the bindings tests can
require bitwise equality.  Output lands in frontend/test/fixtures/.

Usage: python3 scripts/make_bindings_fixtures.py
"""
import json
import math
from pathlib import Path

import numpy as np

from obbkit.evalio import (
    DetectionRecord,
    GroundTruthRecord,
    evaluate_detections,
    format_detections_text,
    format_dota_annotation,
    load_annotation_dir,
    parse_dota_annotation,
)
from obbkit.geometry import OrientedBox, iou_matrix
from obbkit.proposals import rotated_nms

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "frontend" / "test" / "fixtures"


def dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {path.relative_to(ROOT)}")


def boxes(rng, n, spread=25.0, lo=5.0, hi=30.0):
    return [
        OrientedBox(
            float(rng.uniform(-spread, spread)),
            float(rng.uniform(-spread, spread)),
            float(rng.uniform(lo, hi)),
            float(rng.uniform(lo, hi)),
            float(rng.uniform(-math.pi, math.pi)),
        )
        for _ in range(n)
    ]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2024)

    a = boxes(rng, 12)
    b = boxes(rng, 7)
    dump(OUT / "iou_boxes_a.json", [list(x.astuple()) for x in a])
    dump(OUT / "iou_boxes_b.json", [list(x.astuple()) for x in b])
    dump(OUT / "iou_expected.json", {"iou": iou_matrix(a, b).tolist()})

    nms_boxes = boxes(rng, 200, spread=40.0)
    nms_scores = [float(s) for s in rng.uniform(0, 1, 200)]
    dump(OUT / "nms_boxes.json", [list(x.astuple()) for x in nms_boxes])
    dump(OUT / "nms_scores.json", nms_scores)
    dump(
        OUT / "nms_expected.json",
        {str(thr): rotated_nms(nms_boxes, nms_scores, thr) for thr in (0.5, 0.8)},
    )

    # hand-walked AP fixture: 2 gts, detections TP/FP/TP
    g1 = OrientedBox(10, 10, 8, 4, 0.2)
    g2 = OrientedBox(50, 50, 12, 6, -0.3)
    gts_dir = OUT / "eval_gts"
    gts_dir.mkdir(exist_ok=True)
    (gts_dir / "img.txt").write_text(
        format_dota_annotation(
            [
                GroundTruthRecord(box=g1, category="obj"),
                GroundTruthRecord(box=g2, category="obj"),
            ]
        )
    )
    dets = [
        DetectionRecord("img", g1, "obj", 0.9),
        DetectionRecord("img", OrientedBox(100, 100, 5, 5, 0), "obj", 0.8),
        DetectionRecord("img", g2, "obj", 0.7),
    ]
    (OUT / "eval_dets.txt").write_text(format_detections_text(dets))
    print(f"wrote {(OUT / 'eval_dets.txt').relative_to(ROOT)}")
    gt_records = load_annotation_dir(gts_dir)
    expected_eval = {}
    for metric in ("voc07", "voc12"):
        res = evaluate_detections(dets, gt_records, 0.5, metric)
        expected_eval[metric] = {
            "metric": metric,
            "iou_thr": 0.5,
            "per_class": {k: res.per_class[k] for k in sorted(res.per_class)},
            "map": res.mean,
        }
    dump(OUT / "eval_expected.json", expected_eval)

    # parse fixture: rotated rectangles, one difficult, with header lines
    ann_records = [
        GroundTruthRecord(box=OrientedBox(10, 10, 6, 2, math.pi / 6), category="ship"),
        GroundTruthRecord(box=OrientedBox(40, 25, 12, 9, -0.3), category="plane", difficult=True),
        GroundTruthRecord(box=OrientedBox(77.5, 31.25, 20, 14, 0.7), category="ship"),
    ]
    ann_text = "imagesource:sat\ngsd:0.5\n" + format_dota_annotation(ann_records)
    (OUT / "parse_input.txt").write_text(ann_text)
    print(f"wrote {(OUT / 'parse_input.txt').relative_to(ROOT)}")
    parsed = parse_dota_annotation(ann_text)
    dump(
        OUT / "parse_expected.json",
        [
            {
                "cx": r.box.cx,
                "cy": r.box.cy,
                "w": r.box.w,
                "h": r.box.h,
                "theta": r.box.theta,
                "category": r.category,
                "difficult": r.difficult,
            }
            for r in parsed
        ],
    )


if __name__ == "__main__":
    main()
