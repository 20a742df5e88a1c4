"""END-type and L-type high-resolution corner models.

Each model is a two-level image: gray value T1 inside a region bounded by
rays and a baseline segment, T2 elsewhere. The SOGDD representation of a
model at a point is the integral of the model against the SOGDD filter
centred there, as a function of filter orientation theta. Two routes are
provided:

* :func:`psi_closed_form` evaluates analytic expressions built from
  exponentials and the error function;
* :func:`psi_quadrature` integrates the piecewise-constant model directly
  with conforming Gauss-Legendre panels and serves as the oracle.

Model coordinates have y pointing up; the corner at u = 0 sits at the
origin and the second END corner at (d, 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, ndtr

from .imagecore import GrayImage
from .quadrature import convex_piece, polygon_nodes

END = "END"
L_TYPE = "L"
CORNER = "corner"
EDGE = "edge"

SQRT_2PI = math.sqrt(2.0 * math.pi)

# angle grid used when minimising admissibility roots over model shapes
DEFAULT_ANGLE_SWEEP = tuple(k * math.pi / 24 for k in (2, 3, 4, 6, 8, 10))


@dataclass(frozen=True)
class CornerModelParams:
    kind: str
    T1: float
    T2: float
    alpha: float
    beta: float | None = None
    d: float = 3.0

    def __post_init__(self):
        if self.kind not in (END, L_TYPE):
            raise ValueError(f"kind must be {END!r} or {L_TYPE!r}")
        if not 0.0 < self.alpha < math.pi / 2:
            raise ValueError("alpha must lie strictly inside (0, pi/2)")
        if self.kind == END:
            if self.beta is None or not 0.0 < self.beta < math.pi / 2:
                raise ValueError("beta must lie strictly inside (0, pi/2)")
        if not self.d > 0:
            raise ValueError("d must be > 0")

    @property
    def contrast(self) -> float:
        return float(self.T1) - float(self.T2)

    def swapped(self) -> "CornerModelParams":
        return CornerModelParams(self.kind, self.T2, self.T1, self.alpha, self.beta, self.d)

    def scaled(self, factor) -> "CornerModelParams":
        return CornerModelParams(self.kind, self.T1, self.T2, self.alpha, self.beta, self.d * factor)


def point_offset(p: CornerModelParams, at: str) -> float:
    """Baseline position u of the evaluation point (0 or d/2)."""
    if at == CORNER:
        return 0.0
    if at == EDGE:
        return 0.5 * p.d
    raise ValueError(f"point must be {CORNER!r} or {EDGE!r}")


# ---------------------------------------------------------------------------
# region tests


def t1_mask(p: CornerModelParams, x, y, at: str = CORNER):
    """Boolean mask of the T1 region, coordinates relative to point ``at``.

    Boundary points belong to T1 (``>=`` comparisons).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s0 = -point_offset(p, at)
    left = (x < s0) & (y >= math.tan(math.pi / 2 - p.alpha) * (x - s0))
    if p.kind == L_TYPE:
        return left | ((x >= s0) & (y >= 0))
    e = s0 + p.d
    mid = (x >= s0) & (x < e) & (y >= 0)
    right = (x >= e) & (y >= math.tan(math.pi / 2 + p.beta) * (x - e))
    return left | mid | right


def render_model(p: CornerModelParams, canvas, origin, at: str = CORNER) -> GrayImage:
    """Rasterise the model on a ``(width, height)`` canvas.

    ``origin`` is the ``(column, row)`` pixel holding the point ``at``.
    Image rows grow downwards, so model ``y = row_origin - row``.
    """
    width, height = (int(v) for v in canvas)
    ox, oy = origin
    if width < 1 or height < 1:
        raise ValueError("canvas must be at least 1x1")
    if not (0 <= ox < width and 0 <= oy < height):
        raise ValueError("origin lies outside the canvas")
    u0 = point_offset(p, at)
    c0 = ox - u0
    if p.kind == END and not (0 <= c0 and c0 + p.d < width):
        raise ValueError("model corners do not both fit on the canvas")
    cols = np.arange(width, dtype=np.float64) - ox
    rows = oy - np.arange(height, dtype=np.float64)
    X, Y = np.meshgrid(cols, rows)
    return GrayImage(np.where(t1_mask(p, X, Y, at), float(p.T1), float(p.T2)))


# ---------------------------------------------------------------------------
# closed forms


def _phi_fn(phi):
    if phi == "erf":
        return erf
    if phi == "normal_cdf":
        return ndtr
    raise ValueError("phi must be 'erf' or 'normal_cdf'")


def _trig(theta):
    theta = np.asarray(theta, dtype=np.float64)
    return np.cos(theta) ** 2, np.sin(theta) ** 2, np.sin(2.0 * theta)


def _end_corner(p, s, theta, Phi):
    c2, s2, sn = _trig(theta)
    a, b, d = p.alpha, p.beta, p.d
    ta, tb = math.tan(a), math.tan(b)
    g = 2.0 * math.pi * s * s
    far = math.exp(-d * d / (2.0 * s * s))
    eb = math.exp(-(d * math.cos(b)) ** 2 / (2.0 * s * s))
    pb = 1.0 - Phi(math.sqrt(2.0) * d * math.sin(b) / (2.0 * s))
    ray_a = c2 / ta - s2 / ta - sn
    ray_b = sn + c2 / tb - s2 / tb
    tail = SQRT_2PI * d / (4.0 * math.pi * s**3) * eb * pb
    return p.contrast * (
        math.sin(a) ** 2 / g * ray_a
        + math.sin(b) ** 2 / g * far * ray_b
        - tail * math.sin(b) ** 3 * ray_b
        + sn / g * (1.0 - far)
        + tail * math.sin(b) * (sn + c2 / tb)
    )


def _end_edge(p, s, theta, Phi):
    c2, s2, sn = _trig(theta)
    a, b, d = p.alpha, p.beta, p.d
    ta, tb = math.tan(a), math.tan(b)
    ea = math.exp(-(d * math.cos(a)) ** 2 / (8.0 * s * s))
    eb = math.exp(-(d * math.cos(b)) ** 2 / (8.0 * s * s))
    pa = 1.0 - Phi(math.sqrt(2.0) * d * math.sin(a) / (4.0 * s))
    pb = 1.0 - Phi(math.sqrt(2.0) * d * math.sin(b) / (4.0 * s))
    ray_a = c2 / ta - sn - s2 / ta
    ray_b = c2 / tb + sn - s2 / tb
    near = math.exp(-d * d / (8.0 * s * s))
    body = (
        -SQRT_2PI * math.sin(a) / 2.0 * ea * pa * (0.5 * d * sn - d * c2 / (2.0 * ta))
        - SQRT_2PI * d * math.sin(a) ** 3 / 4.0 * ea * pa * ray_a
        - SQRT_2PI * d * math.sin(b) ** 3 / 4.0 * eb * pb * ray_b
        + SQRT_2PI * math.sin(b) / 2.0 * eb * pb * (0.5 * d * sn + d * c2 / (2.0 * tb))
        + s * near * (math.sin(a) ** 2 * ray_a + math.sin(b) ** 2 * ray_b)
    )
    return p.contrast / (2.0 * math.pi * s**3) * body


def _l_corner(p, s, theta, Phi):
    c2, s2, sn = _trig(theta)
    a = p.alpha
    ta = math.tan(a)
    return -p.contrast / (2.0 * math.pi * s * s) * (-sn + math.sin(a) ** 2 * (-c2 / ta + sn + s2 / ta))


def _l_edge(p, s, theta, Phi):
    c2, s2, sn = _trig(theta)
    a, d = p.alpha, p.d
    ta = math.tan(a)
    ea = math.exp(-(d * math.cos(a)) ** 2 / (8.0 * s * s))
    pa = 1.0 - Phi(math.sqrt(2.0) * d * math.sin(a) / (4.0 * s))
    near = math.exp(-d * d / (8.0 * s * s))
    ray_a = -c2 / ta + sn + s2 / ta
    body = (
        s * math.sin(a) ** 2 * near * ray_a
        - s * sn * near
        - SQRT_2PI * d * math.sin(a) ** 3 / 4.0 * ea * pa * ray_a
        + SQRT_2PI * math.sin(a) / 2.0 * ea * pa * (0.5 * d * sn - d * c2 / (2.0 * ta))
    )
    return -p.contrast / (2.0 * math.pi * s**3) * body


_CLOSED = {
    (END, CORNER): _end_corner,
    (END, EDGE): _end_edge,
    (L_TYPE, CORNER): _l_corner,
    (L_TYPE, EDGE): _l_edge,
}


def psi_closed_form(p: CornerModelParams, at: str, sigma: float, theta, phi: str = "erf"):
    """Analytic SOGDD representation of model ``p`` at point ``at``.

    ``theta`` may be a scalar or an array. ``phi`` picks the convention for
    the tail function in the exponential-tail terms; ``"erf"`` is the one
    that agrees with direct integration (``"normal_cdf"`` is kept so the
    disagreement can be demonstrated).
    """
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    point_offset(p, at)
    out = _CLOSED[(p.kind, at)](p, float(sigma), theta, _phi_fn(phi))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# quadrature oracle


def region_pieces(p: CornerModelParams, at: str = CORNER):
    """Convex pieces of the model as ``(gray_value, half-planes)`` pairs.

    Half-planes are ``(a, b, c)`` meaning ``a*x + b*y + c >= 0`` in
    coordinates relative to the evaluation point. T1 and T2 pieces together
    tile the plane.
    """
    s0 = -point_offset(p, at)
    ka = math.tan(math.pi / 2 - p.alpha)
    pieces = [
        (p.T1, [(-1.0, 0.0, s0), (-ka, 1.0, ka * s0)]),
        (p.T2, [(-1.0, 0.0, s0), (ka, -1.0, -ka * s0)]),
    ]
    if p.kind == L_TYPE:
        pieces += [
            (p.T1, [(1.0, 0.0, -s0), (0.0, 1.0, 0.0)]),
            (p.T2, [(1.0, 0.0, -s0), (0.0, -1.0, 0.0)]),
        ]
        return pieces
    e = s0 + p.d
    kb = math.tan(math.pi / 2 + p.beta)
    pieces += [
        (p.T1, [(1.0, 0.0, -s0), (-1.0, 0.0, e), (0.0, 1.0, 0.0)]),
        (p.T2, [(1.0, 0.0, -s0), (-1.0, 0.0, e), (0.0, -1.0, 0.0)]),
        (p.T1, [(1.0, 0.0, -e), (-kb, 1.0, kb * e)]),
        (p.T2, [(1.0, 0.0, -e), (kb, -1.0, -kb * e)]),
    ]
    return pieces


def _moments(polys_by_value, sigma, order, levels):
    """Gray-value weighted Gaussian moments (m0, mxx, mxy, myy)."""
    total = np.zeros(4)
    for value, polys in polys_by_value:
        X, Y, W = polygon_nodes(polys, order, levels)
        if X.size == 0:
            continue
        g = W * np.exp(-(X * X + Y * Y) / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)
        total += value * np.array([g.sum(), (g * X * X).sum(), (g * X * Y).sum(), (g * Y * Y).sum()])
    return total


@dataclass(frozen=True)
class QuadratureResult:
    values: np.ndarray
    levels: int
    change: float


def psi_quadrature(
    p: CornerModelParams,
    at: str,
    sigma: float,
    theta,
    rel_tol: float = 1e-6,
    half_width: float = 8.0,
    order: int = 12,
    max_levels: int = 6,
    full_output: bool = False,
):
    """Directly integrate ``f(x, y) * psi(-x, -y)`` over ``[-8s, 8s]^2``.

    The filter is even, so the orientation enters only through the second
    moments of the Gaussian-weighted model; these are integrated once and
    combined for every requested ``theta``. Panels are refined until the
    worst-case change of Psi over all orientations falls below
    ``rel_tol * |T1 - T2|`` (or ``rel_tol * max(|T1|, |T2|, 1)`` for a flat
    model).
    """
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    L = half_width * sigma
    grouped = []
    for value, hps in region_pieces(p, at):
        poly = convex_piece(hps, L)
        if poly:
            grouped.append((float(value), [poly]))
    scale = abs(p.contrast) or max(abs(p.T1), abs(p.T2), 1.0)
    s2, s4 = sigma * sigma, sigma**4

    def bound(dm):
        return (abs(dm[1]) + 2.0 * abs(dm[2]) + abs(dm[3])) / s4 + abs(dm[0]) / s2

    prev = _moments(grouped, sigma, order, 1)
    change = math.inf
    level = 1
    while level < max_levels:
        level += 1
        cur = _moments(grouped, sigma, order, level)
        change = bound(cur - prev)
        prev = cur
        if change <= rel_tol * scale:
            break
    m0, mxx, mxy, myy = prev
    th = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(th), np.sin(th)
    vals = (c * c * mxx + 2.0 * c * s * mxy + s * s * myy) / s4 - m0 / s2
    if full_output:
        return QuadratureResult(np.atleast_1d(vals), level, change)
    return vals if np.ndim(vals) else float(vals)


# ---------------------------------------------------------------------------
# energies and scale admissibility


def angular_energy(fn, n: int = 512) -> float:
    """``integral_0^{2 pi} fn(theta)^2`` for a period-pi ``fn``.

    Uses the rectangle rule on ``[0, pi)`` doubled, which is exact for
    trigonometric polynomials of degree below ``n``.
    """
    if n < 256:
        raise ValueError("use at least 256 samples")
    theta = np.arange(n) * (math.pi / n)
    v = np.asarray(fn(theta), dtype=np.float64)
    return 2.0 * (math.pi / n) * float(np.sum(v * v))


def energy(p: CornerModelParams, at: str, sigma: float, n: int = 512) -> float:
    return angular_energy(lambda th: psi_closed_form(p, at, sigma, th), n)


def energy_difference(p: CornerModelParams, sigma: float, n: int = 512) -> float:
    """Corner energy minus edge-point energy."""
    return energy(p, CORNER, sigma, n) - energy(p, EDGE, sigma, n)


@dataclass(frozen=True)
class ScaleAdmissibility:
    """Sign structure of the corner-minus-edge energy over a scale grid.

    ``intervals`` lists the maximal sub-ranges of the grid where the
    difference is positive; an end that coincides with the grid boundary
    is reported as ``None`` (not bounded within the grid). ``A, B, C`` are
    least-squares coefficients of ``8*A*s^2 - 4*sqrt(2*pi)*d*C*s -
    pi*d^2*B`` fitted to ``s^4 * diff`` near the first root.
    """

    params: CornerModelParams
    sigmas: np.ndarray
    energy_corner: np.ndarray
    energy_edge: np.ndarray
    roots: tuple
    intervals: tuple
    A: float
    B: float
    C: float
    fit_residual: float
    fitted_roots: tuple
    diagnostic: str = ""

    @property
    def diff(self) -> np.ndarray:
        return self.energy_corner - self.energy_edge

    @property
    def first_root(self):
        return self.roots[0] if self.roots else None

    @property
    def lo(self):
        return self.intervals[0][0] if self.intervals else None

    @property
    def hi(self):
        return self.intervals[0][1] if self.intervals else None


def _bisect(fn, a, b, fa, tol):
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def default_sigma_grid(lo=0.5, hi=3.0, step=0.01):
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def admissible_interval(p: CornerModelParams, sigma_grid=None, tol: float = 1e-4, n_theta: int = 512):
    """Scales where the corner out-energises the edge point."""
    sig = default_sigma_grid() if sigma_grid is None else np.asarray(sigma_grid, dtype=np.float64)
    if sig.ndim != 1 or sig.size < 3 or np.any(np.diff(sig) <= 0) or sig[0] <= 0:
        raise ValueError("sigma grid must be positive, increasing, with >= 3 points")
    ec = np.array([energy(p, CORNER, s, n_theta) for s in sig])
    ee = np.array([energy(p, EDGE, s, n_theta) for s in sig])
    diff = ec - ee

    def fn(s):
        return energy_difference(p, s, n_theta)

    roots = []
    for i in range(sig.size - 1):
        if (diff[i] > 0) != (diff[i + 1] > 0):
            roots.append(_bisect(fn, sig[i], sig[i + 1], diff[i], tol))

    intervals = []
    edges = [None] + roots + [None]
    positive = diff[0] > 0
    for k in range(len(edges) - 1):
        if positive:
            intervals.append((edges[k], edges[k + 1]))
        positive = not positive

    diagnostic = ""
    if not roots:
        diagnostic = (
            "difference is positive over the whole grid" if diff[0] > 0 else "difference is never positive on the grid"
        )

    # quadratic fit of s^4 * diff, local to the first root if there is one
    if roots:
        window = np.abs(sig - roots[0]) <= 0.25
    else:
        window = np.ones_like(sig, dtype=bool)
    xs = sig[window]
    ys = (sig**4 * diff)[window]
    coef = np.polyfit(xs, ys, 2)
    resid = ys - np.polyval(coef, xs)
    span = float(np.max(np.abs(ys))) or 1.0
    fit_residual = float(np.sqrt(np.mean(resid * resid)) / span)
    qa, qb, qc = coef
    A = qa / 8.0
    C = -qb / (4.0 * SQRT_2PI * p.d)
    B = -qc / (math.pi * p.d * p.d)
    fitted = np.roots(coef)
    fitted_roots = tuple(sorted(float(r.real) for r in fitted if abs(r.imag) < 1e-12))

    return ScaleAdmissibility(
        params=p,
        sigmas=sig,
        energy_corner=ec,
        energy_edge=ee,
        roots=tuple(float(r) for r in roots),
        intervals=tuple(intervals),
        A=float(A),
        B=float(B),
        C=float(C),
        fit_residual=fit_residual,
        fitted_roots=fitted_roots,
        diagnostic=diagnostic,
    )


@dataclass(frozen=True)
class SweepResult:
    kind: str
    d: float
    rows: tuple  # (alpha, beta, first_root or None)
    minimum: float | None
    argmin: tuple | None


def sweep_first_root(kind: str, d: float, angles=DEFAULT_ANGLE_SWEEP, sigma_grid=None, T1=50.0, T2=100.0):
    """Smallest first root of the energy difference over a grid of shapes.

    For L-type models only ``alpha`` varies.
    """
    rows = []
    betas = angles if kind == END else (None,)
    for a in angles:
        for b in betas:
            p = CornerModelParams(kind, T1, T2, a, b, d)
            res = admissible_interval(p, sigma_grid)
            rows.append((a, b, res.first_root))
    found = [r for r in rows if r[2] is not None]
    if not found:
        return SweepResult(kind, d, tuple(rows), None, None)
    best = min(found, key=lambda r: r[2])
    return SweepResult(kind, d, tuple(rows), best[2], (best[0], best[1]))


# ---------------------------------------------------------------------------
# paired profiles


@dataclass(frozen=True)
class SogddProfile:
    at: str
    theta: np.ndarray
    closed_form: np.ndarray
    quadrature: np.ndarray = field(repr=False)

    @property
    def max_rel_deviation(self) -> float:
        """Sup-norm of the difference over ``max(1, sup|oracle|)``."""
        ref = max(1.0, float(np.max(np.abs(self.quadrature))))
        return float(np.max(np.abs(self.closed_form - self.quadrature))) / ref


def profile(p: CornerModelParams, at: str, sigma: float, n: int = 360) -> SogddProfile:
    theta = np.arange(n) * (2.0 * math.pi / n)
    closed = np.broadcast_to(psi_closed_form(p, at, sigma, theta), theta.shape).astype(np.float64)
    quad = np.broadcast_to(psi_quadrature(p, at, sigma, theta), theta.shape).astype(np.float64)
    return SogddProfile(at, theta, closed, quad)


def corner_edge_profiles(p: CornerModelParams, sigma: float, n: int = 360):
    """Corner and edge-point profiles, each with both provenances."""
    return profile(p, CORNER, sigma, n), profile(p, EDGE, sigma, n)
