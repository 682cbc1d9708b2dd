"""Haar-cascade face detection on integral images, with grouping of raw
detections, per-frame tracking with a hold-last failure policy, and a JSON
cascade format (plus a converter from the OpenCV XML layout)."""

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Rect, validate_rect
from .ingest import to_grayscale

DEFAULT_SCALE_FACTOR = 1.1
DEFAULT_MIN_NEIGHBORS = 3
DEFAULT_GROUP_EPS = 0.2


class DetectionError(RuntimeError):
    """Face tracking failed on every frame of a clip."""


class CascadeFormatError(ValueError):
    """Cascade file violates the documented schema."""


# ------------------------- integral images -------------------------

def integral_image(gray, squared=False):
    """(H+1, W+1) int64 summed-area table; first row and column are zero.

    Entry [y, x] holds the sum of all pixels strictly above and left of
    (x, y). With squared=True the squares of the pixels are summed
    (needed for window variance).
    """
    g = np.asarray(gray, dtype=np.int64)
    if g.ndim != 2 or g.size == 0:
        raise ValueError("expected a non-empty 2-D grayscale frame")
    if squared:
        g = g * g
    ii = np.zeros((g.shape[0] + 1, g.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(g, axis=0), axis=1, out=ii[1:, 1:])
    return ii


def rect_sum(ii, r):
    """Pixel sum inside r via 4 table lookups."""
    if r.w <= 0 or r.h <= 0:
        raise ValueError(f"rect must have positive size: {r}")
    if r.x < 0 or r.y < 0 or r.y + r.h >= ii.shape[0] or r.x + r.w >= ii.shape[1]:
        raise ValueError(f"rect {r} out of bounds for image {ii.shape[1]-1}x{ii.shape[0]-1}")
    x0, y0, x1, y1 = r.x, r.y, r.x + r.w, r.y + r.h
    return int(ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0])


# ------------------------- cascade model -------------------------

@dataclass(frozen=True)
class Tree:
    rects: tuple          # ((Rect, weight), ...)
    threshold: float
    pass_value: float
    fail_value: float


@dataclass(frozen=True)
class Stage:
    threshold: float
    trees: tuple


@dataclass(frozen=True)
class Cascade:
    window_w: int
    window_h: int
    stages: tuple

    def __post_init__(self):
        if self.window_w <= 0 or self.window_h <= 0:
            raise CascadeFormatError("window dimensions must be positive")
        if not self.stages:
            raise CascadeFormatError("cascade has no stages")
        for si, stage in enumerate(self.stages):
            if not stage.trees:
                raise CascadeFormatError(f"stage {si} has no trees")
            for ti, tree in enumerate(stage.trees):
                if not tree.rects:
                    raise CascadeFormatError(f"stage {si} tree {ti} has no rects")
                for r, _w in tree.rects:
                    if r.w <= 0 or r.h <= 0 or not r.inside(self.window_w, self.window_h):
                        raise CascadeFormatError(
                            f"stage {si} tree {ti}: rect {tuple(r)} outside "
                            f"{self.window_w}x{self.window_h} base window")


def cascade_to_dict(c):
    return {
        "window": [c.window_w, c.window_h],
        "stages": [
            {
                "threshold": s.threshold,
                "trees": [
                    {
                        "rects": [[r.x, r.y, r.w, r.h, w] for r, w in t.rects],
                        "threshold": t.threshold,
                        "pass": t.pass_value,
                        "fail": t.fail_value,
                    }
                    for t in s.trees
                ],
            }
            for s in c.stages
        ],
    }


def cascade_from_dict(d):
    try:
        window = d["window"]
        stages_raw = d["stages"]
    except (KeyError, TypeError) as e:
        raise CascadeFormatError(f"missing cascade key: {e}") from None
    if not (isinstance(window, list) and len(window) == 2):
        raise CascadeFormatError(f"window must be [w, h], got {window!r}")
    stages = []
    try:
        for s in stages_raw:
            trees = []
            for t in s["trees"]:
                rects = tuple((Rect(int(r[0]), int(r[1]), int(r[2]), int(r[3])), float(r[4]))
                              for r in t["rects"])
                trees.append(Tree(rects=rects, threshold=float(t["threshold"]),
                                  pass_value=float(t["pass"]), fail_value=float(t["fail"])))
            stages.append(Stage(threshold=float(s["threshold"]), trees=tuple(trees)))
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise CascadeFormatError(f"malformed cascade structure: {e}") from None
    return Cascade(window_w=int(window[0]), window_h=int(window[1]), stages=tuple(stages))


def load_cascade(path):
    """Read and validate a cascade from its JSON file format."""
    try:
        d = json.loads(Path(path).read_text(encoding="ascii"))
    except json.JSONDecodeError as e:
        raise CascadeFormatError(f"{path}: invalid JSON: {e}") from None
    return cascade_from_dict(d)


def save_cascade(path, c):
    """Write a cascade as canonical JSON (sorted keys, 2-space indent)."""
    Path(path).write_text(canonical_cascade_json(c), encoding="ascii")


def canonical_cascade_json(c):
    return json.dumps(cascade_to_dict(c), sort_keys=True, indent=2) + "\n"


# ------------------------- window evaluation -------------------------

def evaluate_window(c, ii, ii_sq, win, scale):
    """Run the stage cascade on one window.

    Feature sums are divided by scale^2 (rect areas grow with the window)
    and by the window's pixel standard deviation (contrast normalization;
    sigma = 0 falls back to 1), then compared against tree thresholds.
    After rounding the scaled rects, the first rect's weight is rebalanced
    so the weighted areas still sum to zero; otherwise uniform regions
    would score nonzero at non-integer scales. A window passes when every
    stage's summed tree outputs reach that stage's threshold.
    """
    n = win.w * win.h
    s1 = rect_sum(ii, win)
    s2 = rect_sum(ii_sq, win)
    mean = s1 / n
    sigma = math.sqrt(max(0.0, s2 / n - mean * mean))
    if sigma == 0.0:
        sigma = 1.0
    inv_norm = 1.0 / (scale * scale * sigma)

    img_h = ii.shape[0] - 1
    img_w = ii.shape[1] - 1
    for stage in c.stages:
        total = 0.0
        for tree in stage.trees:
            scaled = []
            for r, weight in tree.rects:
                rx = win.x + int(round(r.x * scale))
                ry = win.y + int(round(r.y * scale))
                rw = min(int(round(r.w * scale)), img_w - rx)
                rh = min(int(round(r.h * scale)), img_h - ry)
                scaled.append((Rect(rx, ry, rw, rh), weight))
            first, rest = scaled[0], scaled[1:]
            if first[0].area > 0:
                w0 = -sum(w * r.area for r, w in rest) / first[0].area
                scaled[0] = (first[0], w0)
            raw = sum(w * rect_sum(ii, r) for r, w in scaled)
            if raw * inv_norm >= tree.threshold:
                total += tree.pass_value
            else:
                total += tree.fail_value
        if total < stage.threshold:
            return False
    return True


def detect_faces(c, gray, scale_factor=DEFAULT_SCALE_FACTOR,
                 min_neighbors=DEFAULT_MIN_NEIGHBORS, min_size=0,
                 eps=DEFAULT_GROUP_EPS):
    """Multiscale sliding-window detection over one grayscale frame.

    The window grows geometrically by scale_factor; the slide step is
    max(1, round(scale)). Raw hits are merged by group_rects and returned
    sorted by descending area (ties by x, then y).
    """
    gray = np.asarray(gray)
    if scale_factor <= 1:
        raise ValueError(f"scale_factor must be > 1, got {scale_factor}")
    img_h, img_w = gray.shape
    if img_w < c.window_w or img_h < c.window_h:
        raise ValueError(f"frame {img_w}x{img_h} smaller than base window "
                         f"{c.window_w}x{c.window_h}")
    ii = integral_image(gray)
    ii_sq = integral_image(gray, squared=True)

    candidates = []
    scale = 1.0
    while True:
        ww = int(round(c.window_w * scale))
        wh = int(round(c.window_h * scale))
        if ww > img_w or wh > img_h:
            break
        if ww >= min_size and wh >= min_size:
            step = max(1, int(round(scale)))
            for y in range(0, img_h - wh + 1, step):
                for x in range(0, img_w - ww + 1, step):
                    if evaluate_window(c, ii, ii_sq, Rect(x, y, ww, wh), scale):
                        candidates.append(Rect(x, y, ww, wh))
        scale *= scale_factor

    grouped = group_rects(candidates, min_neighbors, eps)
    return sorted(grouped, key=lambda r: (-r.area, r.x, r.y))


def _similar(a, b, eps):
    delta = eps * 0.5 * (min(a.w, b.w) + min(a.h, b.h))
    return (abs(a.x - b.x) <= delta and abs(a.y - b.y) <= delta
            and abs(a.w - b.w) <= delta and abs(a.h - b.h) <= delta)


def group_rects(candidates, min_neighbors, eps=DEFAULT_GROUP_EPS):
    """Cluster near-identical rectangles and average each cluster.

    Similarity (all four coordinates within eps * mean min-extent) is
    closed transitively; clusters smaller than min_neighbors + 1 are
    dropped; survivors are reduced to the coordinate-wise mean rectangle
    (rounded to integer pixels).
    """
    if not (0 < eps < 1):
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    n = len(candidates)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _similar(candidates[i], candidates[j], eps):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj

    clusters = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(candidates[i])

    out = []
    for members in clusters.values():
        if len(members) < min_neighbors + 1:
            continue
        xs = [r.x for r in members]
        ys = [r.y for r in members]
        ws = [r.w for r in members]
        hs = [r.h for r in members]
        out.append(Rect(int(round(sum(xs) / len(members))),
                        int(round(sum(ys) / len(members))),
                        int(round(sum(ws) / len(members))),
                        int(round(sum(hs) / len(members)))))
    return out


def track_roi(clip, cascade=None, manual_box=None, scale_factor=DEFAULT_SCALE_FACTOR,
              min_neighbors=DEFAULT_MIN_NEIGHBORS, min_size=0):
    """One face box per frame.

    Exactly one of cascade / manual_box selects the source. Manual mode
    repeats the given box. Cascade mode takes the largest detection per
    frame; frames with no detection reuse the last successful box, leading
    failures inherit the first success, and a clip with no detection on
    any frame raises DetectionError.
    """
    if (cascade is None) == (manual_box is None):
        raise ValueError("exactly one of cascade / manual_box must be given")
    if manual_box is not None:
        box = validate_rect(Rect(*manual_box), clip.width, clip.height, "manual ROI")
        return [box] * clip.n_frames

    grays = to_grayscale(clip)
    raw = []
    for t in range(clip.n_frames):
        boxes = detect_faces(cascade, grays[t], scale_factor=scale_factor,
                             min_neighbors=min_neighbors, min_size=min_size)
        raw.append(boxes[0] if boxes else None)

    first_hit = next((b for b in raw if b is not None), None)
    if first_hit is None:
        raise DetectionError("no face detected in any frame")
    out = []
    last = first_hit
    for b in raw:
        if b is not None:
            last = b
        out.append(last)
    return out


# ------------------------- OpenCV XML conversion -------------------------

def convert_opencv_xml(path):
    """Convert an OpenCV haarcascade XML file to this package's Cascade.

    Handles the stump-based HAAR layout (cascade/stages/weakClassifiers
    with a shared feature list). Structure and thresholds are carried over
    verbatim; tilted features are rejected. Engines normalize feature
    values differently, so converted models may need threshold
    recalibration before use here.
    """
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as e:
        raise CascadeFormatError(f"{path}: invalid XML: {e}") from None
    casc = root.find("cascade")
    if casc is None:
        raise CascadeFormatError(f"{path}: no <cascade> element")
    window_w = int(casc.findtext("width", "0"))
    window_h = int(casc.findtext("height", "0"))

    features = []
    feats_el = casc.find("features")
    if feats_el is None:
        raise CascadeFormatError(f"{path}: no <features> element")
    for feat in feats_el:
        if feat.findtext("tilted", "0").strip() == "1":
            raise CascadeFormatError(f"{path}: tilted features unsupported")
        rects = []
        rects_el = feat.find("rects")
        if rects_el is None:
            raise CascadeFormatError(f"{path}: feature without <rects>")
        for r_el in rects_el:
            parts = r_el.text.split()
            if len(parts) != 5:
                raise CascadeFormatError(f"{path}: rect needs 5 fields, got {r_el.text!r}")
            x, y, w, h = (int(p) for p in parts[:4])
            rects.append((Rect(x, y, w, h), float(parts[4])))
        features.append(tuple(rects))

    stages = []
    stages_el = casc.find("stages")
    if stages_el is None:
        raise CascadeFormatError(f"{path}: no <stages> element")
    for st in stages_el:
        threshold = float(st.findtext("stageThreshold"))
        trees = []
        for weak in st.find("weakClassifiers"):
            nodes = weak.findtext("internalNodes").split()
            leaves = weak.findtext("leafValues").split()
            if len(nodes) != 4 or len(leaves) != 2:
                raise CascadeFormatError(f"{path}: only stump classifiers supported")
            feat_idx = int(nodes[2])
            if not (0 <= feat_idx < len(features)):
                raise CascadeFormatError(f"{path}: feature index {feat_idx} out of range")
            # leaf order: value when the feature falls below the split, then above
            trees.append(Tree(rects=features[feat_idx], threshold=float(nodes[3]),
                              fail_value=float(leaves[0]), pass_value=float(leaves[1])))
        stages.append(Stage(threshold=threshold, trees=tuple(trees)))

    return Cascade(window_w=window_w, window_h=window_h, stages=tuple(stages))
