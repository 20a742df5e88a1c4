"""Evaluation protocols: ground-truth matching, repeatability and MMA."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .detector import CornerList, DetectorConfig, detect
from .formatting import fmt
from .imagecore import (
    AffineTransform,
    CodecUnavailableError,
    GrayImage,
    Homography,
    add_gaussian_noise,
    jpeg_roundtrip,
    warp,
)


class ProjectionError(ValueError):
    """A point maps to infinity under a homography."""


def _as_points(pts) -> np.ndarray:
    if isinstance(pts, CornerList):
        return pts.points()
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


def greedy_match(a, b, max_dist: float):
    """One-to-one matching in ascending distance order.

    Returns ``(i, j, distance)`` triples for pairs with distance
    ``<= max_dist``. Ties are broken by ``i`` then ``j``. The result is
    maximal: no two unmatched points lie within ``max_dist`` of each other.
    """
    a = _as_points(a)
    b = _as_points(b)
    if len(a) == 0 or len(b) == 0:
        return []
    D = cdist(a, b)
    ii, jj = np.nonzero(D <= max_dist)
    order = np.lexsort((jj, ii, D[ii, jj]))
    used_a = np.zeros(len(a), dtype=bool)
    used_b = np.zeros(len(b), dtype=bool)
    out = []
    for k in order:
        i, j = ii[k], jj[k]
        if used_a[i] or used_b[j]:
            continue
        used_a[i] = used_b[j] = True
        out.append((int(i), int(j), float(D[i, j])))
    return out


# ---------------------------------------------------------------------------
# ground truth


@dataclass(frozen=True)
class GroundTruth:
    points: np.ndarray
    width: int | None = None
    height: int | None = None
    source: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len({tuple(p) for p in pts}) != len(pts):
            raise ValueError("ground truth contains duplicate points")
        if self.width is not None and self.height is not None and len(pts):
            if pts[:, 0].min() < 0 or pts[:, 1].min() < 0:
                raise ValueError("ground truth point outside the image")
            if pts[:, 0].max() > self.width - 1 or pts[:, 1].max() > self.height - 1:
                raise ValueError("ground truth point outside the image")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


def load_gt_csv(path) -> GroundTruth:
    """Read a ``x,y`` CSV (header required)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise ValueError(f"{path}: expected header 'x,y'")
    pts = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
    return GroundTruth(np.array(pts).reshape(-1, 2), source=str(path))


@dataclass(frozen=True)
class MatchReport:
    pairs: tuple  # (detected index, gt index, distance)
    missed: int
    false: int
    Le: float

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    @property
    def no_matches(self) -> bool:
        return not self.pairs

    def to_csv(self) -> str:
        return f"missed,false,Le\n{self.missed},{self.false},{fmt(float(self.Le))}\n"


def localization_error(offsets) -> float:
    """RMS Euclidean distance of matched pairs (0 for no pairs)."""
    d = np.asarray(offsets, dtype=np.float64).reshape(-1, 2)
    if len(d) == 0:
        return 0.0
    return math.sqrt(float(np.sum(d * d)) / len(d))


def match_to_gt(detected, gt: GroundTruth, delta: float = 2.0) -> MatchReport:
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if len(gt) == 0:
        raise ValueError("ground truth is empty")
    det = _as_points(detected)
    pairs = greedy_match(det, gt.points, delta)
    offs = [det[i] - gt.points[j] for i, j, _ in pairs]
    return MatchReport(
        pairs=tuple(pairs),
        missed=len(gt) - len(pairs),
        false=len(det) - len(pairs),
        Le=localization_error(offs),
    )


# ---------------------------------------------------------------------------
# repeatability


def repeatability(Lb: int, Ld: int, Lr: int) -> float:
    """``(Lr/2) * (1/Lb + 1/Ld)``, or 0 when either count is zero."""
    if Lb <= 0 or Ld <= 0:
        return 0.0
    # one rounding step on the integer form keeps simple cases exact
    return Lr * (Lb + Ld) / (2 * Lb * Ld)


def _map_points(pts, fwd):
    if isinstance(fwd, Homography):
        return project_points(pts, fwd)
    if fwd is None:
        return pts
    return fwd.apply(pts)


@dataclass(frozen=True)
class RepeatabilityRow:
    suite: str
    param: str
    Lb: int
    Ld: int
    Lr: int
    Ravg: float
    note: str = ""


def repeatability_row(suite, param, ref, deformed, fwd, dist: float = 4.0) -> RepeatabilityRow:
    ref_pts = _as_points(ref)
    def_pts = _as_points(deformed)
    mapped = _map_points(ref_pts, fwd) if len(ref_pts) else ref_pts
    Lr = len(greedy_match(mapped, def_pts, dist))
    Lb, Ld = len(ref_pts), len(def_pts)
    note = ""
    if Lb == 0:
        note = "no corners in the reference image"
    elif Ld == 0:
        note = "no corners in the deformed image"
    return RepeatabilityRow(suite, str(param), Lb, Ld, Lr, repeatability(Lb, Ld, Lr), note)


def average_repeatability(ref, deformed, fwd, dist: float = 4.0) -> float:
    """Repeatability of ``ref`` corners mapped by ``fwd`` onto ``deformed``."""
    return repeatability_row("", "", ref, deformed, fwd, dist).Ravg


@dataclass(frozen=True)
class RepeatabilityReport:
    suite: str
    rows: tuple
    skipped: str | None = None

    @property
    def mean(self) -> float:
        if not self.rows:
            return 0.0
        return float(np.mean([r.Ravg for r in self.rows]))

    def to_csv(self) -> str:
        lines = ["suite,param,Lb,Ld,Lr,Ravg"]
        lines += [f"{r.suite},{r.param},{r.Lb},{r.Ld},{r.Lr},{fmt(r.Ravg)}" for r in self.rows]
        return "\n".join(lines) + "\n"


def _grid(lo, hi, step):
    n = int(round((hi - lo) / step))
    return [round(lo + k * step, 10) for k in range(n + 1)]


def suite_parameters(suite: str):
    """Parameter list for a transform suite, in evaluation order."""
    if suite == "rotation":
        return [float(a) for a in np.linspace(-math.pi / 2, math.pi / 2, 19) if abs(a) > 1e-12]
    if suite == "iso-scale":
        return [s for s in _grid(0.5, 2.0, 0.1) if s != 1.0]
    if suite == "aniso-scale":
        return [(sx, sy) for sx in _grid(0.7, 1.5, 0.1) for sy in _grid(0.5, 1.8, 0.1)]
    if suite == "shear":
        return [c for c in _grid(-1.0, 1.0, 0.1) if c != 0.0]
    if suite == "jpeg":
        return [int(q) for q in range(5, 101, 5)]
    if suite == "noise":
        return [float(s) for s in range(1, 16)]
    raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


SUITES = ("rotation", "iso-scale", "aniso-scale", "shear", "jpeg", "noise")


def _transform_for(suite, param):
    if suite == "rotation":
        return AffineTransform.rotation(param)
    if suite == "iso-scale":
        return AffineTransform.iso_scale(param)
    if suite == "aniso-scale":
        return AffineTransform.aniso_scale(*param)
    if suite == "shear":
        return AffineTransform.shear(param)
    return None


def _param_label(param):
    if isinstance(param, tuple):
        return ":".join(fmt(float(v)) for v in param)
    if isinstance(param, int):
        return str(param)
    return fmt(float(param))


def _row_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), index]).generate_state(1)[0])


def _detect_or_empty(img, cfg, backend):
    try:
        return detect(img, cfg, backend), ""
    except ValueError as exc:
        return CornerList(), str(exc)


def run_transform_suite(
    img: GrayImage,
    cfg: DetectorConfig | None = None,
    suite: str = "rotation",
    seed: int = 0,
    codec=None,
    dist: float = 4.0,
    backend=None,
) -> RepeatabilityReport:
    """Detect on ``img`` and on each transformed copy, one row per instance.

    Geometric suites use :func:`warp` and its exact forward transform;
    photometric suites keep the pixel grid (identity correspondence).
    The JPEG suite is skipped, with a reason, when no codec is supplied.
    """
    params = suite_parameters(suite)
    cfg = cfg or DetectorConfig()
    if suite == "jpeg" and codec is None:
        return RepeatabilityReport(suite, (), skipped="jpeg suite skipped: no image codec available")
    ref = detect(img, cfg, backend)
    rows = []
    for i, param in enumerate(params):
        t = _transform_for(suite, param)
        if t is not None:
            deformed, fwd = warp(img, t)
        elif suite == "jpeg":
            try:
                deformed = jpeg_roundtrip(img, param, codec)
            except CodecUnavailableError as exc:
                return RepeatabilityReport(suite, (), skipped=str(exc))
            fwd = AffineTransform.identity()
        else:
            deformed = add_gaussian_noise(img, param, _row_seed(seed, i))
            fwd = AffineTransform.identity()
        found, note = _detect_or_empty(deformed, cfg, backend)
        row = repeatability_row(suite, _param_label(param), ref, found, fwd, dist)
        if note:
            row = RepeatabilityRow(row.suite, row.param, row.Lb, row.Ld, row.Lr, row.Ravg, note)
        rows.append(row)
    return RepeatabilityReport(suite, tuple(rows))


# ---------------------------------------------------------------------------
# homography distance and MMA


def project_points(pts, H: Homography) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ H.H.T
    w = hom[:, 2]
    if np.any(np.abs(w) <= 1e-12):
        raise ProjectionError("point projects to infinity")
    return hom[:, :2] / w[:, None]


def homography_project(pt, H: Homography):
    x, y = project_points([pt], H)[0]
    return float(x), float(y)


@dataclass(frozen=True)
class MmaReport:
    rows: tuple  # (Pth, Npossible, Nmatch, MMA)
    empty: bool = False

    def to_csv(self) -> str:
        lines = ["Pth,Npossible,Nmatch,MMA"]
        lines += [f"{p},{n},{m},{fmt(v)}" for p, n, m, v in self.rows]
        return "\n".join(lines) + "\n"


def mma(pairs, H: Homography, thresholds=range(1, 11)) -> MmaReport:
    """Fraction of candidate matches with homography error below ``P_th``.

    ``pairs`` is ``(n, 4)``: ``(u, v)`` in the first image followed by the
    matched ``(x, y)`` in the second. The error is strict (``< P_th``).
    """
    pairs = np.asarray(pairs, dtype=np.float64).reshape(-1, 4)
    n = len(pairs)
    if n == 0:
        return MmaReport(tuple((int(p), 0, 0, 0.0) for p in thresholds), empty=True)
    err = np.linalg.norm(pairs[:, 2:] - project_points(pairs[:, :2], H), axis=1)
    rows = []
    for p in thresholds:
        m = int(np.count_nonzero(err < p))
        rows.append((int(p), n, m, m / n))
    return MmaReport(tuple(rows))


def patch_descriptors(img: GrayImage, points, size: int = 11):
    """Mean/variance normalised square patches around integer points.

    Points whose patch leaves the image are dropped; returns
    ``(descriptors, kept_indices)``. This is a simple plumbing descriptor,
    not a learned one.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError("patch size must be odd and positive")
    h = size // 2
    pts = _as_points(points)
    descs, kept = [], []
    for k, (x, y) in enumerate(np.rint(pts).astype(int)):
        if h <= x < img.width - h and h <= y < img.height - h:
            patch = img.data[y - h : y + h + 1, x - h : x + h + 1].ravel()
            patch = patch - patch.mean()
            sd = patch.std()
            descs.append(patch / sd if sd > 0 else patch)
            kept.append(k)
    return np.array(descs).reshape(-1, size * size), np.array(kept, dtype=int)


def mutual_nearest(desc_a, desc_b):
    """Index pairs that are each other's nearest neighbour under SSD."""
    if len(desc_a) == 0 or len(desc_b) == 0:
        return []
    D = cdist(desc_a, desc_b, "sqeuclidean")
    ab = np.argmin(D, axis=1)
    ba = np.argmin(D, axis=0)
    return [(i, int(j)) for i, j in enumerate(ab) if ba[j] == i]


def match_images(img_a: GrayImage, img_b: GrayImage, cfg: DetectorConfig | None = None, size: int = 11, backend=None):
    """Detect in both images and pair corners by mutual nearest patch."""
    cfg = cfg or DetectorConfig()
    ca = detect(img_a, cfg, backend).points()
    cb = detect(img_b, cfg, backend).points()
    da, ka = patch_descriptors(img_a, ca, size)
    db, kb = patch_descriptors(img_b, cb, size)
    pairs = [(*ca[ka[i]], *cb[kb[j]]) for i, j in mutual_nearest(da, db)]
    return np.array(pairs, dtype=np.float64).reshape(-1, 4)

