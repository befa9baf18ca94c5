"""Annotation I/O and rotated-detection metrics.

Annotation lines follow the aerial-imagery convention: optional
"imagesource:"/"gsd:" headers, then one object per line as eight corner
coordinates (clockwise quadrilateral), a category token, and a {0,1}
difficulty flag.  Quadrilaterals become oriented boxes via the
minimum-area enclosing rectangle, which is exact on true rectangles.

Detections interchange as "image_id category score cx cy w h theta" lines
(theta in radians) or an equivalent JSON array.  Metrics: class-agnostic
recall, greedy-matching AP under the 11-point interpolated and the
area-under-curve variants, and histogram summaries of proposal quality.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .encoding import encode_refine
from .geometry import InvalidBoxError, OrientedBox, iou_matrix, min_area_enclosing_box

__all__ = [
    "GroundTruthRecord",
    "DetectionRecord",
    "AnnotationParseError",
    "parse_dota_annotation",
    "format_dota_annotation",
    "load_annotation_dir",
    "parse_detections_text",
    "format_detections_text",
    "parse_detections_json",
    "format_detections_json",
    "recall",
    "average_precision",
    "mean_ap",
    "evaluate_detections",
    "EvalResult",
    "Histogram",
    "iou_histogram",
    "target_histogram",
]


@dataclass(frozen=True)
class GroundTruthRecord:
    box: OrientedBox
    category: str
    difficult: bool = False

    def __post_init__(self):
        if not self.category:
            raise ValueError("category must be non-empty")


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    box: OrientedBox
    category: str
    score: float

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


class AnnotationParseError(ValueError):
    """Carries (line_number, reason) pairs for every malformed line."""

    def __init__(self, problems: list[tuple[int, str]]):
        self.problems = problems
        msg = "; ".join(f"line {ln}: {why}" for ln, why in problems)
        super().__init__(f"malformed annotation ({msg})")


_HEADER_PREFIXES = ("imagesource:", "gsd:")


def parse_dota_annotation(text: str) -> list[GroundTruthRecord]:
    """Parse one image's annotation text; raises AnnotationParseError with
    1-based line numbers for every malformed data line."""
    records: list[GroundTruthRecord] = []
    problems: list[tuple[int, str]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.lower().startswith(_HEADER_PREFIXES):
            continue
        fields = line.split()
        if len(fields) != 10:
            problems.append((ln, f"expected 10 fields, got {len(fields)}"))
            continue
        try:
            coords = [float(v) for v in fields[:8]]
        except ValueError:
            problems.append((ln, "non-numeric corner coordinate"))
            continue
        if not all(math.isfinite(v) for v in coords):
            problems.append((ln, "non-finite corner coordinate"))
            continue
        if fields[9] not in ("0", "1"):
            problems.append((ln, f"difficulty flag must be 0 or 1, got {fields[9]!r}"))
            continue
        try:
            box = min_area_enclosing_box(np.asarray(coords).reshape(4, 2))
        except InvalidBoxError as exc:
            problems.append((ln, str(exc)))
            continue
        records.append(GroundTruthRecord(box=box, category=fields[8], difficult=fields[9] == "1"))
    if problems:
        raise AnnotationParseError(problems)
    return records


def format_dota_annotation(records: Sequence[GroundTruthRecord]) -> str:
    """Serialize records back to the corner-polygon format."""
    from .geometry import corners

    lines = []
    for rec in records:
        pts = corners(rec.box)
        coords = " ".join(f"{v!r}" for p in pts for v in (p.x, p.y))
        lines.append(f"{coords} {rec.category} {int(rec.difficult)}")
    return "\n".join(lines) + ("\n" if lines else "")


def load_annotation_dir(path: str | Path) -> dict[str, list[GroundTruthRecord]]:
    """One annotation file per image; image id is the file stem."""
    out: dict[str, list[GroundTruthRecord]] = {}
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"annotation directory not found: {root}")
    for f in sorted(root.glob("*.txt")):
        out[f.stem] = parse_dota_annotation(f.read_text())
    return out


# ---------------------------------------------------------------------------
# detection interchange

def format_detections_text(dets: Sequence[DetectionRecord]) -> str:
    lines = [
        f"{d.image_id} {d.category} {d.score!r} "
        f"{d.box.cx!r} {d.box.cy!r} {d.box.w!r} {d.box.h!r} {d.box.theta!r}"
        for d in dets
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_detections_text(text: str) -> list[DetectionRecord]:
    records: list[DetectionRecord] = []
    problems: list[tuple[int, str]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 8:
            problems.append((ln, f"expected 8 fields, got {len(fields)}"))
            continue
        try:
            score = float(fields[2])
            nums = [float(v) for v in fields[3:]]
        except ValueError:
            problems.append((ln, "non-numeric field"))
            continue
        try:
            records.append(
                DetectionRecord(
                    image_id=fields[0],
                    category=fields[1],
                    score=score,
                    box=OrientedBox(*nums),
                )
            )
        except ValueError as exc:
            problems.append((ln, str(exc)))
    if problems:
        raise AnnotationParseError(problems)
    return records


def format_detections_json(dets: Sequence[DetectionRecord]) -> str:
    payload = [
        {
            "image_id": d.image_id,
            "category": d.category,
            "score": d.score,
            "cx": d.box.cx,
            "cy": d.box.cy,
            "w": d.box.w,
            "h": d.box.h,
            "theta": d.box.theta,
        }
        for d in dets
    ]
    return json.dumps(payload, indent=2) + "\n"


def parse_detections_json(text: str) -> list[DetectionRecord]:
    payload = json.loads(text)
    if not isinstance(payload, list):
        raise ValueError("detection JSON must be an array of records")
    return [
        DetectionRecord(
            image_id=str(rec["image_id"]),
            category=str(rec["category"]),
            score=float(rec["score"]),
            box=OrientedBox(
                float(rec["cx"]), float(rec["cy"]), float(rec["w"]), float(rec["h"]), float(rec["theta"])
            ),
        )
        for rec in payload
    ]


# ---------------------------------------------------------------------------
# metrics

def recall(
    proposals: Mapping[str, Sequence[OrientedBox]],
    gts: Mapping[str, Sequence[GroundTruthRecord]],
    iou_thr: float = 0.5,
) -> float:
    """Fraction of non-difficult gts covered by at least one proposal with
    rotated IoU >= iou_thr (class-agnostic); 1.0 when there are no gts."""
    if not (0.0 < iou_thr < 1.0):
        raise ValueError(f"iou_thr must be in (0, 1), got {iou_thr}")
    total = 0
    hit = 0
    for image_id, recs in gts.items():
        live = [r.box for r in recs if not r.difficult]
        if not live:
            continue
        total += len(live)
        props = list(proposals.get(image_id, ()))
        if not props:
            continue
        ious = iou_matrix(live, props)
        hit += int(np.count_nonzero(ious.max(axis=1) >= iou_thr))
    return hit / total if total else 1.0


def _match_detections(
    dets: Sequence[DetectionRecord],
    gts: Mapping[str, Sequence[GroundTruthRecord]],
    iou_thr: float,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Greedy score-descending matching for one category.

    Returns (tp, fp) indicator arrays over the sorted detections and the
    count of non-difficult gts.  Each gt is consumed by at most one
    detection; duplicates are false positives; detections landing on
    difficult gts are ignored (neither tp nor fp).
    """
    npos = sum(1 for recs in gts.values() for r in recs if not r.difficult)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    consumed: dict[str, set[int]] = {}
    tp = np.zeros(len(order))
    fp = np.zeros(len(order))
    for rank, di in enumerate(order):
        det = dets[di]
        recs = gts.get(det.image_id, ())
        if len(recs) == 0:
            fp[rank] = 1.0
            continue
        ious = iou_matrix([det.box], [r.box for r in recs])[0]
        best = int(np.argmax(ious))
        if ious[best] >= iou_thr:
            if recs[best].difficult:
                continue
            used = consumed.setdefault(det.image_id, set())
            if best not in used:
                used.add(best)
                tp[rank] = 1.0
            else:
                fp[rank] = 1.0
        else:
            fp[rank] = 1.0
    return tp, fp, npos


def average_precision(
    dets: Sequence[DetectionRecord],
    gts: Mapping[str, Sequence[GroundTruthRecord]],
    iou_thr: float = 0.5,
    metric: str = "voc12",
) -> float:
    """Single-category AP; `metric` selects the 11-point interpolated
    ("voc07") or area-under-the-monotonized-PR-curve ("voc12") flavor."""
    if metric not in ("voc07", "voc12"):
        raise ValueError(f"metric must be voc07 or voc12, got {metric!r}")
    tp, fp, npos = _match_detections(dets, gts, iou_thr)
    if npos == 0 or len(dets) == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(fp)
    rec = ctp / npos
    prec = ctp / np.maximum(ctp + cfp, np.finfo(np.float64).eps)
    if metric == "voc07":
        acc = 0.0
        for t in np.arange(0.0, 1.1, 0.1):
            mask = rec >= t
            acc += float(prec[mask].max()) if mask.any() else 0.0
        return acc / 11.0
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    step = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[step + 1] - mrec[step]) * mpre[step + 1]))


@dataclass(frozen=True)
class EvalResult:
    per_class: dict[str, float]
    mean: float


def evaluate_detections(
    dets: Sequence[DetectionRecord],
    gts: Mapping[str, Sequence[GroundTruthRecord]],
    iou_thr: float = 0.5,
    metric: str = "voc12",
) -> EvalResult:
    """Per-class AP over every category with at least one gt, plus their
    unweighted mean."""
    categories = sorted({r.category for recs in gts.values() for r in recs})
    per_class: dict[str, float] = {}
    for cat in categories:
        cat_dets = [d for d in dets if d.category == cat]
        cat_gts = {
            img: [r for r in recs if r.category == cat] for img, recs in gts.items()
        }
        per_class[cat] = average_precision(cat_dets, cat_gts, iou_thr, metric)
    mean = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return EvalResult(per_class=per_class, mean=mean)


def mean_ap(
    dets: Sequence[DetectionRecord],
    gts: Mapping[str, Sequence[GroundTruthRecord]],
    iou_thr: float = 0.5,
    metric: str = "voc12",
) -> float:
    return evaluate_detections(dets, gts, iou_thr, metric).mean


# ---------------------------------------------------------------------------
# distribution summaries

@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def mean(self) -> float:
        """Bin-center weighted mean; NaN for an empty histogram."""
        if self.total == 0:
            return float("nan")
        centers = (self.edges[:-1] + self.edges[1:]) / 2.0
        return float(np.sum(centers * self.counts) / self.total)

    def to_csv(self) -> str:
        lines = ["bin_left,bin_right,count"]
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            lines.append(f"{float(lo)!r},{float(hi)!r},{int(c)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Histogram":
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if not rows or rows[0] != "bin_left,bin_right,count":
            raise ValueError("missing histogram CSV header")
        lo, hi, counts = [], [], []
        for row in rows[1:]:
            a, b, c = row.split(",")
            lo.append(float(a))
            hi.append(float(b))
            counts.append(int(c))
        edges = np.asarray(lo + hi[-1:], dtype=np.float64)
        return cls(edges=edges, counts=np.asarray(counts, dtype=np.int64))


def _bin(values: np.ndarray, bins: int, value_range: tuple[float, float]) -> Histogram:
    lo, hi = value_range
    clipped = np.clip(values, lo, hi)  # keeps every sample counted
    counts, edges = np.histogram(clipped, bins=bins, range=value_range)
    return Histogram(edges=edges, counts=counts.astype(np.int64))


def _positive_matches(
    proposals: Sequence[OrientedBox], gts: Sequence[OrientedBox], pos_thr: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(proposal index, max IoU, argmax gt) for proposals whose max IoU
    exceeds pos_thr."""
    if len(proposals) == 0 or len(gts) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64)
    ious = iou_matrix(proposals, gts)
    best = ious.max(axis=1)
    arg = ious.argmax(axis=1)
    sel = np.flatnonzero(best > pos_thr)
    return sel, best[sel], arg[sel]


def iou_histogram(
    proposals: Sequence[OrientedBox],
    gts: Sequence[OrientedBox],
    bins: int = 20,
    pos_thr: float = 0.7,
) -> Histogram:
    """Histogram over [0, 1] of each positive proposal's max IoU."""
    _, best, _ = _positive_matches(proposals, gts, pos_thr)
    return _bin(best, bins, (0.0, 1.0))


def target_histogram(
    proposals: Sequence[OrientedBox],
    gts: Sequence[OrientedBox],
    bins: int = 80,
    value_range: tuple[float, float] = (-1.0, 1.0),
    pos_thr: float = 0.7,
) -> tuple[Histogram, Histogram]:
    """Histograms of the refinement size targets dw = log(w_gt/w_prop) and
    dh = log(h_gt/h_prop) over positive proposal/gt matches."""
    sel, _, arg = _positive_matches(proposals, gts, pos_thr)
    dws, dhs = [], []
    for pi, gi in zip(sel, arg):
        d = encode_refine(proposals[int(pi)], gts[int(gi)])
        dws.append(d.dw)
        dhs.append(d.dh)
    return (
        _bin(np.asarray(dws, dtype=np.float64), bins, value_range),
        _bin(np.asarray(dhs, dtype=np.float64), bins, value_range),
    )
