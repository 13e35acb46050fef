"""Small-scale convex hull helpers: membership weights and projections.

Everything here is deterministic. Supports are searched in order of
(size, lexicographic index tuple), so the reported weight vector for a
feasible target is always the one with the lexicographically smallest
support of Caratheodory size (at most dimension + 1).

Two arithmetic backends coexist: plain floats (numpy) and exact
``fractions.Fraction`` rows for oracle-grade computations.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def solve_exact(rows, rhs):
    """Solve a linear system with Fraction arithmetic.

    ``rows`` is a list of equation rows, ``rhs`` the right-hand sides.
    Returns the unique solution as a list of Fractions, or None when the
    system is inconsistent or does not pin down a unique solution.
    """
    m = len(rows)
    n = len(rows[0]) if m else 0
    a = [[Fraction(v) for v in row] + [Fraction(rhs[i])] for i, row in enumerate(rows)]
    pivots = []
    r = 0
    for col in range(n):
        pivot = next((i for i in range(r, m) if a[i][col] != 0), None)
        if pivot is None:
            continue
        a[r], a[pivot] = a[pivot], a[r]
        inv = a[r][col]
        a[r] = [v / inv for v in a[r]]
        for i in range(m):
            if i != r and a[i][col] != 0:
                f = a[i][col]
                a[i] = [vi - f * vr for vi, vr in zip(a[i], a[r])]
        pivots.append(col)
        r += 1
        if r == m:
            break
    for i in range(r, m):
        if a[i][n] != 0:
            return None  # inconsistent
    if len(pivots) < n:
        return None  # underdetermined
    x = [Fraction(0)] * n
    for i, col in enumerate(pivots):
        x[col] = a[i][n]
    return x


def _supports(n_points, max_size):
    for size in range(1, max_size + 1):
        yield from itertools.combinations(range(n_points), size)


def convex_weights_exact(target, points):
    """Exact convex-combination weights of ``target`` over ``points``.

    ``points`` is a sequence of Fraction coordinate tuples. Returns a list
    of Fractions over all points (zeros off the support) or None when the
    target is outside the convex hull.
    """
    pts = [tuple(Fraction(v) for v in p) for p in points]
    tgt = tuple(Fraction(v) for v in target)
    d = len(tgt)
    for support in _supports(len(pts), min(len(pts), d + 1)):
        rows = [[pts[j][coord] for j in support] for coord in range(d)]
        rows.append([Fraction(1)] * len(support))
        sol = solve_exact(rows, list(tgt) + [Fraction(1)])
        if sol is None or any(w < 0 for w in sol):
            continue
        weights = [Fraction(0)] * len(pts)
        for j, w in zip(support, sol):
            weights[j] = w
        return weights
    return None


def convex_weights(target, points, tol=1e-9):
    """Float convex-combination weights, or None if outside the hull.

    The first support (in lexicographic order) that reconstructs the
    target to machine precision wins; when none does, the support with
    the smallest residual within ``tol`` (scaled by the data magnitude)
    is returned instead, so targets that sit exactly in the hull are
    matched exactly while nearby ones are still admitted.
    """
    pts = np.asarray(points, dtype=float)
    tgt = np.asarray(target, dtype=float)
    n, d = pts.shape
    scale = max(1.0, float(np.max(np.abs(tgt))), float(np.max(np.abs(pts))))
    strict = 1e-12 * scale
    b = np.concatenate([tgt, [1.0]])
    best = None  # (residual, weights)
    for support in _supports(n, min(n, d + 1)):
        a = np.vstack([pts[list(support)].T, np.ones(len(support))])
        w, *_ = np.linalg.lstsq(a, b, rcond=None)
        if np.min(w) < -1e-9:
            continue
        w = np.clip(w, 0.0, None)
        s = w.sum()
        if s <= 0.0:
            continue
        w /= s
        residual = float(np.max(np.abs(a @ w - b)))
        if residual > tol * scale:
            continue
        weights = np.zeros(n)
        weights[list(support)] = w
        if residual <= strict:
            return weights
        if best is None or residual < best[0] - 1e-18:
            best = (residual, weights)
    return None if best is None else best[1]


def project_to_hull(target, points):
    """Euclidean projection of ``target`` onto the convex hull of ``points``.

    Returns ``(point, weights)`` where ``weights`` has Caratheodory-size
    support (at most dimension + 1); ties between equally close faces are
    broken toward the lexicographically earliest support.
    """
    pts = np.asarray(points, dtype=float)
    tgt = np.asarray(target, dtype=float)
    n, d = pts.shape
    if n == 1:
        w = np.ones(1)
        return pts[0].copy(), w
    best = None  # (dist, point, weights)
    for support in _supports(n, min(n, d + 1)):
        sub = pts[list(support)]
        base = sub[-1]
        if len(support) == 1:
            cand, w_sub = base, np.ones(1)
        else:
            span = (sub[:-1] - base).T  # (d, size-1)
            z, *_ = np.linalg.lstsq(span, tgt - base, rcond=None)
            w_sub = np.concatenate([z, [1.0 - z.sum()]])
            if np.min(w_sub) < -1e-12:
                continue
            w_sub = np.clip(w_sub, 0.0, None)
            w_sub /= w_sub.sum()
            cand = w_sub @ sub
        dist = float(np.linalg.norm(cand - tgt))
        if best is None or dist < best[0] - 1e-15:
            weights = np.zeros(n)
            weights[list(support)] = w_sub
            best = (dist, cand, weights)
            if dist <= 1e-15:
                break
    return best[1], best[2]
