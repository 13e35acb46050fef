"""Independent brute-force oracles, kept apart from the library's code paths.

Everything here uses exact rational arithmetic and exhaustive
enumeration so that library results can be checked against a second,
structurally different computation.
"""

import itertools
from fractions import Fraction

import numpy as np


def rational_solve(rows, rhs):
    """Gaussian elimination without pivoting heuristics, Fraction-exact.

    Returns the unique solution or None on inconsistency/underdetermination.
    Written independently of the library's solver (column-major sweep,
    last-nonzero pivot choice).
    """
    m, n = len(rows), len(rows[0]) if rows else 0
    a = [[Fraction(x) for x in row] + [Fraction(rhs[i])] for i, row in enumerate(rows)]
    where = []
    used = set()
    for col in range(n):
        pivot = None
        for i in range(m - 1, -1, -1):
            if i not in used and a[i][col] != 0:
                pivot = i
                break
        if pivot is None:
            continue
        used.add(pivot)
        where.append((pivot, col))
        inv = a[pivot][col]
        a[pivot] = [x / inv for x in a[pivot]]
        for i in range(m):
            if i != pivot and a[i][col] != 0:
                f = a[i][col]
                a[i] = [x - f * y for x, y in zip(a[i], a[pivot])]
    for i in range(m):
        if i not in used and a[i][n] != 0:
            return None
    if len(where) < n:
        return None
    x = [Fraction(0)] * n
    for row, col in where:
        x[col] = a[row][n]
    return x


def hull_member_exact(target, points):
    """Exact convex-hull membership by exhaustive support enumeration."""
    target = [Fraction(t) for t in target]
    points = [[Fraction(v) for v in p] for p in points]
    d = len(target)
    for size in range(1, min(len(points), d + 1) + 1):
        for support in itertools.combinations(range(len(points)), size):
            rows = [[points[j][coord] for j in support] for coord in range(d)]
            rows.append([Fraction(1)] * size)
            sol = rational_solve(rows, target + [Fraction(1)])
            if sol is not None and all(w >= 0 for w in sol):
                return True
    return False


def percell_feasible(divisible, candidates, targets):
    """Exact per-cell classification: divisible targets must lie in the
    candidate hull (interval bounds when scalar), atomic targets must be
    candidates themselves."""
    for k, div in enumerate(divisible):
        cands = [[Fraction(v) for v in c] for c in candidates[k]]
        target = [Fraction(v) for v in targets[k]]
        if div:
            if len(target) == 1:
                lo = min(c[0] for c in cands)
                hi = max(c[0] for c in cands)
                if not (lo <= target[0] <= hi):
                    return False
            elif not hull_member_exact(target, cands):
                return False
        else:
            if not any(all(c[i] == target[i] for i in range(len(target))) for c in cands):
                return False
    return True


def aggregate_assignment_exists(masses, coarse, candidates, targets, moments):
    """Exhaustive pure-assignment search against the aggregate moment sums.

    Each cell picks exactly one candidate; the mass-weighted moment sums
    must match the targets' on every coarse cell, exactly. Exact
    rationals throughout.
    """
    masses = [Fraction(v) for v in masses]
    n_cells = len(masses)
    n_coarse = max(coarse) + 1
    moments = [[Fraction(v) for v in row] for row in moments]
    targets = [[Fraction(v) for v in t] for t in targets]
    d = len(targets[0])
    goal = {}
    for j, row in enumerate(moments):
        for e in range(n_coarse):
            for dim in range(d):
                goal[(j, e, dim)] = sum(
                    masses[k] * row[k] * targets[k][dim]
                    for k in range(n_cells)
                    if coarse[k] == e
                )
    cand_lists = [[[Fraction(v) for v in c] for c in candidates[k]] for k in range(n_cells)]
    for assignment in itertools.product(*(range(len(c)) for c in cand_lists)):
        ok = True
        for j, row in enumerate(moments):
            for e in range(n_coarse):
                for dim in range(d):
                    total = sum(
                        masses[k] * row[k] * cand_lists[k][assignment[k]][dim]
                        for k in range(n_cells)
                        if coarse[k] == e
                    )
                    if total != goal[(j, e, dim)]:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            return assignment
    return None


def elimination_rank_exact(matrix):
    """Exact rank over the rationals by row reduction."""
    rows = [[Fraction(v) for v in row] for row in np.asarray(matrix).tolist()]
    rank = 0
    n_cols = len(rows[0]) if rows else 0
    r = 0
    for col in range(n_cols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = rows[r][col]
        rows[r] = [v / inv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        rank += 1
        r += 1
        if r == len(rows):
            break
    return rank


def pure_equilibria_bruteforce(payoffs):
    """All pure-profile equilibria of a finite game by direct inspection.

    ``payoffs`` is a list of m tensors. Returns a list of index tuples.
    """
    tensors = [np.asarray(p, dtype=float) for p in payoffs]
    shape = tensors[0].shape
    out = []
    for profile in itertools.product(*(range(s) for s in shape)):
        ok = True
        for i, tensor in enumerate(tensors):
            value = tensor[profile]
            for alt in range(shape[i]):
                trial = list(profile)
                trial[i] = alt
                if tensor[tuple(trial)] > value + 1e-12:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(profile)
    return out
