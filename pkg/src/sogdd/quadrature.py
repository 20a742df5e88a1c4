"""Gauss-Legendre quadrature over convex polygons.

Regions are described as intersections of half-planes, clipped to a
bounding box, fan-triangulated and integrated with a collapsed tensor
Gauss-Legendre rule. Because panels conform to the region boundaries the
integrand is smooth on every panel and refinement converges spectrally.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def clip_halfplane(poly, a, b, c):
    """Sutherland-Hodgman clip of ``poly`` to ``a*x + b*y + c >= 0``."""
    out = []
    n = len(poly)
    for i in range(n):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % n]
        fp = a * px + b * py + c
        fq = a * qx + b * qy + c
        if fp >= 0:
            out.append((px, py))
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def convex_piece(halfplanes, half_width):
    """The square ``[-L, L]^2`` clipped by each half-plane in turn."""
    L = float(half_width)
    poly = [(-L, -L), (L, -L), (L, L), (-L, L)]
    for hp in halfplanes:
        poly = clip_halfplane(poly, *hp)
        if len(poly) < 3:
            return []
    return poly


@lru_cache(maxsize=16)
def triangle_rule(order):
    """Nodes ``(r, s)`` and weights on the reference triangle (area 1/2)."""
    x, w = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1.0 - U)
    return U.ravel(), (V * (1.0 - U)).ravel(), W.ravel()


def _subdivide(tris, levels):
    for _ in range(levels):
        A, B, C = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = 0.5 * (A + B), 0.5 * (B + C), 0.5 * (C + A)
        tris = np.concatenate(
            [np.stack(t, axis=1) for t in ((A, ab, ca), (ab, B, bc), (ca, bc, C), (ab, bc, ca))]
        )
    return tris


def polygon_nodes(polys, order, levels):
    """Quadrature nodes and weights covering a list of convex polygons.

    Each polygon is fan-triangulated, every triangle is split into
    ``4**levels`` congruent children, and each child gets an
    ``order x order`` collapsed Gauss-Legendre rule.
    """
    tris = []
    for poly in polys:
        p = np.asarray(poly, dtype=np.float64)
        for i in range(1, len(p) - 1):
            tris.append((p[0], p[i], p[i + 1]))
    if not tris:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    tris = _subdivide(np.array(tris), levels)
    r, s, w = triangle_rule(order)
    A, B, C = tris[:, 0], tris[:, 1], tris[:, 2]
    e1 = B - A
    e2 = C - A
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    X = A[:, 0:1] + r * e1[:, 0:1] + s * e2[:, 0:1]
    Y = A[:, 1:2] + r * e1[:, 1:2] + s * e2[:, 1:2]
    W = jac[:, None] * w
    return X.ravel(), Y.ravel(), W.ravel()
