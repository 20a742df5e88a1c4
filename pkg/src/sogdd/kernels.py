"""Hot numeric loops, each with a numba kernel and a numpy fallback.

Both paths perform the same floating-point operations in the same order,
so their outputs agree bit-for-bit on the same machine. Pixel-level work
in the numba kernels is distributed with ``prange`` but every output value
is produced by one serial accumulation, which keeps results independent of
the thread count.
"""
import math

import numpy as np

from ._accel import njit, prange, resolve_backend

# ---------------------------------------------------------------------------
# tap ordering


def symmetric_tap_order(radius):
    """Pairs of kernel taps ``(i1, j1, i2, j2)`` in a transpose-invariant order.

    Each unordered pair {(i, j), (j, i)} appears once, enumerated row-major
    over the upper triangle. Diagonal taps are stored with ``(i2, j2) ==
    (i1, j1)`` and flagged in the returned mask. Summing pair terms in this
    order makes convolution of a transposed image with a transposed kernel
    reproduce the transposed result exactly.
    """
    n = 2 * radius + 1
    pairs = []
    single = []
    for i in range(n):
        for j in range(i, n):
            pairs.append((i, j, j, i))
            single.append(i == j)
    return np.array(pairs, dtype=np.int64), np.array(single, dtype=np.bool_)


# ---------------------------------------------------------------------------
# convolution of an image with a stack of kernels


@njit(cache=True, parallel=True)
def _convolve_stack_nb(padded, kernels, pairs, single, take_abs):
    nk, n, _ = kernels.shape
    r = (n - 1) // 2
    h = padded.shape[0] - 2 * r
    w = padded.shape[1] - 2 * r
    out = np.empty((nk, h, w))
    npairs = pairs.shape[0]
    for y in prange(h):
        for k in range(nk):
            for x in range(w):
                acc = 0.0
                for t in range(npairs):
                    i1 = pairs[t, 0]
                    j1 = pairs[t, 1]
                    # I(n - m) psi(m): tap (i, j) meets offset (r - i, r - j)
                    a = kernels[k, i1, j1] * padded[y + 2 * r - i1, x + 2 * r - j1]
                    if single[t]:
                        acc += a
                    else:
                        i2 = pairs[t, 2]
                        j2 = pairs[t, 3]
                        acc += a + kernels[k, i2, j2] * padded[y + 2 * r - i2, x + 2 * r - j2]
                out[k, y, x] = abs(acc) if take_abs else acc
    return out


def _convolve_stack_np(padded, kernels, pairs, single, take_abs):
    nk, n, _ = kernels.shape
    r = (n - 1) // 2
    h = padded.shape[0] - 2 * r
    w = padded.shape[1] - 2 * r
    out = np.zeros((nk, h, w))

    def window(i, j):
        return padded[2 * r - i : 2 * r - i + h, 2 * r - j : 2 * r - j + w]

    for k in range(nk):
        acc = out[k]
        for t in range(pairs.shape[0]):
            i1, j1, i2, j2 = pairs[t]
            a = kernels[k, i1, j1] * window(i1, j1)
            if single[t]:
                acc += a
            else:
                acc += a + kernels[k, i2, j2] * window(i2, j2)
        if take_abs:
            np.abs(acc, out=acc)
    return out


def convolve_stack(padded, kernels, take_abs=False, backend=None):
    """Convolve a replicate-padded image with K square kernels.

    ``padded`` must carry a border equal to the kernel radius. Returns an
    array of shape ``(K, h, w)`` for the unpadded image size.
    """
    padded = np.ascontiguousarray(padded, dtype=np.float64)
    kernels = np.ascontiguousarray(kernels, dtype=np.float64)
    radius = (kernels.shape[1] - 1) // 2
    pairs, single = symmetric_tap_order(radius)
    if resolve_backend(backend) == "numba":
        return _convolve_stack_nb(padded, kernels, pairs, single, bool(take_abs))
    return _convolve_stack_np(padded, kernels, pairs, single, bool(take_abs))


# ---------------------------------------------------------------------------
# small symmetric matrices


@njit(cache=True)
def ldl_det(a):
    """Determinant of a symmetric PSD matrix by pivoted LDL^T.

    The largest remaining diagonal entry is chosen as pivot. Once it is
    not positive the remaining Schur complement is numerically zero and
    the determinant is 0. ``a`` is overwritten.
    """
    n = a.shape[0]
    det = 1.0
    for k in range(n):
        p = k
        best = a[k, k]
        for i in range(k + 1, n):
            if a[i, i] > best:
                best = a[i, i]
                p = i
        if not best > 0.0:
            return 0.0
        if p != k:
            for i in range(n):
                tmp = a[i, k]
                a[i, k] = a[i, p]
                a[i, p] = tmp
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
        piv = a[k, k]
        det *= piv
        for i in range(k + 1, n):
            l = a[i, k] / piv
            for j in range(k + 1, n):
                a[i, j] -= l * a[k, j]
    return det


@njit(cache=True)
def jacobi_eigenvalues(a, tol=1e-12, max_sweeps=64):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm is at most ``tol``
    times the Frobenius norm of the input. ``a`` is overwritten.
    """
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += a[i, j] * a[i, j]
    norm = math.sqrt(total)
    evals = np.empty(n)
    if norm == 0.0:
        for i in range(n):
            evals[i] = 0.0
        return evals
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * a[i, j] * a[i, j]
        if math.sqrt(off) <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    for i in range(n):
        evals[i] = a[i, i]
    return evals


def _ldl_det_np(mats):
    """Vectorised :func:`ldl_det` over a stack ``(N, K, K)`` (overwritten)."""
    n_mat, n, _ = mats.shape
    det = np.ones(n_mat)
    alive = np.ones(n_mat, dtype=bool)
    rows = np.arange(n_mat)
    for k in range(n):
        diag = np.diagonal(mats, axis1=1, axis2=2)[:, k:]
        p = k + np.argmax(diag, axis=1)
        best = mats[rows, p, p]
        dead = ~(best > 0.0)
        det[dead & alive] = 0.0
        alive &= ~dead
        swap = p != k
        if np.any(swap):
            r = rows[swap]
            pk = p[swap]
            colk = mats[r, :, k].copy()
            mats[r, :, k] = mats[r, :, pk]
            mats[r, :, pk] = colk
            rowk = mats[r, k, :].copy()
            mats[r, k, :] = mats[r, pk, :]
            mats[r, pk, :] = rowk
        piv = mats[:, k, k].copy()
        det = np.where(alive, det * piv, det)
        safe = np.where(alive, piv, 1.0)
        for i in range(k + 1, n):
            l = mats[:, i, k] / safe
            for j in range(k + 1, n):
                mats[:, i, j] -= l * mats[:, k, j]
    return np.where(alive, det, 0.0)


def _jacobi_eigenvalues_np(mats, tol=1e-12, max_sweeps=64):
    """Vectorised :func:`jacobi_eigenvalues` over ``(N, K, K)`` (overwritten)."""
    n_mat, n, _ = mats.shape
    norm = np.sqrt(np.sum(mats * mats, axis=(1, 2)))
    active = norm > 0.0
    for _ in range(max_sweeps):
        off = np.zeros(n_mat)
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * mats[:, i, j] * mats[:, i, j]
        active &= ~(np.sqrt(off) <= tol * norm)
        if not np.any(active):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = mats[:, p, q]
                rot = active & (apq != 0.0)
                if not np.any(rot):
                    continue
                sel = np.nonzero(rot)[0]
                a = mats[sel]
                apq = a[:, p, q]
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * apq)
                root = np.sqrt(1.0 + theta * theta)
                t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + root)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                c_ = c[:, None]
                s_ = s[:, None]
                akp = a[:, :, p].copy()
                akq = a[:, :, q].copy()
                a[:, :, p] = c_ * akp - s_ * akq
                a[:, :, q] = s_ * akp + c_ * akq
                apk = a[:, p, :].copy()
                aqk = a[:, q, :].copy()
                a[:, p, :] = c_ * apk - s_ * aqk
                a[:, q, :] = s_ * apk + c_ * aqk
                mats[sel] = a
    return np.diagonal(mats, axis1=1, axis2=2).copy()


# ---------------------------------------------------------------------------
# SODDC accumulation and corner measure map


@njit(cache=True)
def _accumulate(resp, y, x, hy, hx, lam):
    nk = resp.shape[0]
    for a in range(nk):
        for b in range(nk):
            lam[a, b] = 0.0
    for dy in range(-hy, hy + 1):
        for dx in range(-hx, hx + 1):
            for a in range(nk):
                la = resp[a, y + dy, x + dx]
                for b in range(a, nk):
                    lam[a, b] += la * resp[b, y + dy, x + dx]
    for a in range(nk):
        for b in range(a + 1, nk):
            lam[b, a] = lam[a, b]


@njit(cache=True, parallel=True)
def _measure_map_nb(resp, hy, hx, eps, use_eigen):
    nk, h, w = resp.shape
    out = np.zeros((h, w))
    for y in prange(hy, h - hy):
        lam = np.empty((nk, nk))
        for x in range(hx, w - hx):
            _accumulate(resp, y, x, hy, hx, lam)
            tr = 0.0
            for a in range(nk):
                tr += lam[a, a]
            if use_eigen:
                ev = jacobi_eigenvalues(lam)
                prod = 1.0
                tr = 0.0
                for a in range(nk):
                    v = ev[a] if ev[a] > 0.0 else 0.0
                    prod *= v
                    tr += v
                out[y, x] = prod / (tr + eps)
            else:
                out[y, x] = ldl_det(lam) / (tr + eps)
    return out


def _soddc_stack_np(resp, hy, hx):
    """All per-pixel SODDC matrices for interior pixels, shape (N, K, K)."""
    nk, h, w = resp.shape
    ih, iw = h - 2 * hy, w - 2 * hx
    lam = np.zeros((nk, nk, ih, iw))
    for dy in range(-hy, hy + 1):
        for dx in range(-hx, hx + 1):
            win = resp[:, hy + dy : hy + dy + ih, hx + dx : hx + dx + iw]
            for a in range(nk):
                la = win[a]
                for b in range(a, nk):
                    lam[a, b] += la * win[b]
    for a in range(nk):
        for b in range(a + 1, nk):
            lam[b, a] = lam[a, b]
    return np.ascontiguousarray(lam.transpose(2, 3, 0, 1).reshape(ih * iw, nk, nk))


def _measure_map_np(resp, hy, hx, eps, use_eigen, chunk=16384):
    nk, h, w = resp.shape
    out = np.zeros((h, w))
    ih, iw = h - 2 * hy, w - 2 * hx
    if ih <= 0 or iw <= 0:
        return out
    mats = _soddc_stack_np(resp, hy, hx)
    vals = np.empty(mats.shape[0])
    for start in range(0, mats.shape[0], chunk):
        block = mats[start : start + chunk].copy()
        tr = np.zeros(block.shape[0])
        for a in range(nk):
            tr += block[:, a, a]
        if use_eigen:
            ev = np.maximum(_jacobi_eigenvalues_np(block), 0.0)
            prod = np.ones(block.shape[0])
            tr = np.zeros(block.shape[0])
            for a in range(nk):
                prod *= ev[:, a]
                tr += ev[:, a]
            vals[start : start + chunk] = prod / (tr + eps)
        else:
            vals[start : start + chunk] = _ldl_det_np(block) / (tr + eps)
    out[hy : h - hy, hx : w - hx] = vals.reshape(ih, iw)
    return out


def measure_map(resp, half_y, half_x, eps, method="det", backend=None):
    """Corner measure at every pixel whose block fits inside ``resp``.

    Pixels closer than the block half-size to the border are left at 0.
    ``method`` selects the pivoted-LDL^T determinant (``"det"``) or the
    product of Jacobi eigenvalues (``"eigen"``).
    """
    if method not in ("det", "eigen"):
        raise ValueError("method must be 'det' or 'eigen'")
    resp = np.ascontiguousarray(resp, dtype=np.float64)
    use_eigen = method == "eigen"
    if resolve_backend(backend) == "numba":
        return _measure_map_nb(resp, int(half_y), int(half_x), float(eps), use_eigen)
    return _measure_map_np(resp, int(half_y), int(half_x), float(eps), use_eigen)


# ---------------------------------------------------------------------------
# non-maximum suppression


@njit(cache=True, parallel=True)
def _local_maxima_nb(m, radius, margin, thresh):
    h, w = m.shape
    keep = np.zeros((h, w), dtype=np.bool_)
    for y in prange(margin, h - margin):
        for x in range(margin, w - margin):
            v = m[y, x]
            if not (v > thresh and v > 0.0):
                continue
            ok = True
            for dy in range(-radius, radius + 1):
                if not ok:
                    break
                for dx in range(-radius, radius + 1):
                    if dy == 0 and dx == 0:
                        continue
                    u = m[y + dy, x + dx]
                    earlier = dy < 0 or (dy == 0 and dx < 0)
                    if u > v or (earlier and u == v):
                        ok = False
                        break
            keep[y, x] = ok
    return keep


def _local_maxima_np(m, radius, margin, thresh):
    h, w = m.shape
    keep = np.zeros((h, w), dtype=bool)
    ih, iw = h - 2 * margin, w - 2 * margin
    if ih <= 0 or iw <= 0:
        return keep
    core = m[margin : h - margin, margin : w - margin]
    ok = (core > thresh) & (core > 0.0)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            nb = m[margin + dy : margin + dy + ih, margin + dx : margin + dx + iw]
            earlier = dy < 0 or (dy == 0 and dx < 0)
            ok &= ~(nb > core)
            if earlier:
                ok &= ~(nb == core)
    keep[margin : h - margin, margin : w - margin] = ok
    return keep


def local_maxima(m, radius, margin, thresh, backend=None):
    """Boolean mask of strict local maxima above ``thresh``.

    A pixel survives if no neighbour in the ``(2*radius+1)^2`` window is
    larger, and no neighbour earlier in row-major order is equal (so a
    plateau keeps only its row-major-first pixel). Pixels within
    ``margin`` of the border are never kept; ``margin`` must be at least
    ``radius``.
    """
    if margin < radius:
        raise ValueError("margin must be >= nms radius")
    m = np.ascontiguousarray(m, dtype=np.float64)
    if resolve_backend(backend) == "numba":
        return _local_maxima_nb(m, int(radius), int(margin), float(thresh))
    return _local_maxima_np(m, int(radius), int(margin), float(thresh))
