"""SOGDD corner detection: SODDC matrices, corner measure and extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels as _k
from .filterbank import ResponseStack, build_bank, convolve_bank, radius_for
from .formatting import fmt
from .imagecore import GrayImage

EPS = 2.22e-16


@dataclass(frozen=True)
class DetectorConfig:
    """Detector parameters.

    The SODDC block spans ``(p+1)`` columns by ``(q+1)`` rows. ``margin``
    defaults to the kernel radius plus half the block.
    """

    sigma2: float = 1.2
    K: int = 8
    p: int = 6
    q: int = 6
    threshold: float = 1e9
    nms_radius: int = 1
    margin: int | None = None
    eps: float = EPS
    measure: str = "det"

    def __post_init__(self):
        if not self.sigma2 > 1.0:
            raise ValueError("sigma2 must be > 1")
        if self.K < 2:
            raise ValueError("K must be >= 2")
        for name in ("p", "q"):
            v = getattr(self, name)
            if v < 2 or v % 2:
                raise ValueError(f"{name} must be even and >= 2")
        if not self.threshold >= 0:
            raise ValueError("threshold must be >= 0")
        if self.nms_radius < 1:
            raise ValueError("nms radius must be >= 1")
        if self.margin is not None and self.margin < self.min_margin:
            raise ValueError(f"margin must be >= {self.min_margin}")
        if self.measure not in ("det", "eigen"):
            raise ValueError("measure must be 'det' or 'eigen'")

    @classmethod
    def from_sigma(cls, sigma: float, **kw) -> "DetectorConfig":
        return cls(sigma2=sigma * sigma, **kw)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def radius(self) -> int:
        return radius_for(self.sigma)

    @property
    def min_margin(self) -> int:
        return max(self.p, self.q) // 2 + self.nms_radius

    @property
    def effective_margin(self) -> int:
        if self.margin is not None:
            return self.margin
        return max(self.radius + max(self.p, self.q) // 2, self.min_margin)


@dataclass(frozen=True, order=True)
class Corner:
    x: int
    y: int
    score: float


class CornerList:
    """Corners sorted by descending score, ties broken row-major."""

    def __init__(self, corners=()):
        self._items = tuple(sorted(corners, key=lambda c: (-c.score, c.y, c.x)))

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __eq__(self, other):
        return isinstance(other, CornerList) and self._items == other._items

    def __repr__(self):
        return f"CornerList({list(self._items)!r})"

    def points(self) -> np.ndarray:
        """``(n, 2)`` array of ``(x, y)``."""
        return np.array([(c.x, c.y) for c in self._items], dtype=np.float64).reshape(-1, 2)

    def locations(self) -> set:
        return {(c.x, c.y) for c in self._items}

    def to_csv(self) -> str:
        lines = ["x,y,score"]
        lines += [f"{c.x},{c.y},{fmt(c.score)}" for c in self._items]
        return "\n".join(lines) + "\n"


def soddc_matrix(stack: ResponseStack, center, p: int = 6, q: int = 6) -> np.ndarray:
    """K x K sum of outer products of response vectors over a block.

    ``center`` is ``(x, y)``; the block spans ``p+1`` columns and ``q+1``
    rows.
    """
    if not stack.abs_flag:
        raise ValueError("SODDC matrices are built from absolute responses")
    x, y = center
    hx, hy = p // 2, q // 2
    if not (hx <= x < stack.width - hx and hy <= y < stack.height - hy):
        raise ValueError("block does not fit inside the response stack")
    lam = np.empty((stack.K, stack.K))
    _k._accumulate(stack.responses, int(y), int(x), hy, hx, lam)
    return lam


def corner_measure(lam, eps: float = EPS, method: str = "eigen") -> float:
    """Product of eigenvalues over their sum plus ``eps``.

    Tiny negative eigenvalues from rounding are clamped to zero; anything
    below ``-1e-6 * trace`` means the input was not a Gram matrix.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise ValueError("expected a square matrix")
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    if np.max(np.abs(lam - lam.T), initial=0.0) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    tr = float(np.trace(lam))
    if method == "det":
        return float(_k.ldl_det(lam.copy())) / (tr + eps)
    if method != "eigen":
        raise ValueError("method must be 'det' or 'eigen'")
    ev = _k.jacobi_eigenvalues(lam.copy())
    if ev.min() < -1e-6 * max(tr, 0.0):
        raise ValueError("matrix has a significantly negative eigenvalue")
    ev = np.maximum(ev, 0.0)
    return float(np.prod(ev)) / (float(np.sum(ev)) + eps)


def response_stack(img: GrayImage, cfg: DetectorConfig, backend=None) -> ResponseStack:
    return convolve_bank(img, build_bank(cfg.sigma, cfg.K), take_abs=True, backend=backend)


def measure_map(img: GrayImage, cfg: DetectorConfig, backend=None) -> np.ndarray:
    """Corner measure at every pixel (0 where the block leaves the image)."""
    stack = response_stack(img, cfg, backend)
    return _k.measure_map(stack.responses, cfg.q // 2, cfg.p // 2, cfg.eps, cfg.measure, backend)


def corners_from_map(m: np.ndarray, cfg: DetectorConfig, backend=None) -> CornerList:
    keep = _k.local_maxima(m, cfg.nms_radius, cfg.effective_margin, cfg.threshold, backend)
    ys, xs = np.nonzero(keep)
    return CornerList(Corner(int(x), int(y), float(m[y, x])) for y, x in zip(ys, xs))


def detect(img: GrayImage, cfg: DetectorConfig | None = None, backend=None) -> CornerList:
    """Full pipeline: filter bank, SODDC measure, NMS and threshold."""
    cfg = cfg or DetectorConfig()
    need = 2 * cfg.effective_margin + 1
    if img.width < need or img.height < need:
        raise ValueError(f"image must be at least {need}x{need} for this configuration")
    return corners_from_map(measure_map(img, cfg, backend), cfg, backend)
