"""Independent reference implementations used only by the tests.

Written in plain Python loops without sharing code with the package, so an
agreement between the two is evidence rather than tautology.
"""
import math


def tri(x, a, m, b, left_edge=False, right_edge=False):
    """Triangle membership by explicit cases.

    ``left_edge``/``right_edge`` saturate the edge terms at 1 outside their
    peak, the convention the package uses for Low and High.
    """
    if x < m:
        if left_edge:
            return 1.0
        if x <= a:
            return 1.0 if (a == m and x == a) else 0.0
        return (x - a) / (m - a)
    if x > m:
        if right_edge:
            return 1.0
        if x >= b:
            return 0.0
        return (b - x) / (b - m)
    return 1.0


def degrees(terms, universe, x):
    lo, hi = universe
    x = min(max(x, lo), hi)
    return [tri(x, *terms[t], left_edge=(t == 0), right_edge=(t == 2)) for t in range(3)]


def brute_singleton(terms1, u1, terms2, u2, table, x1, x2, tnorm=min):
    """Rule-by-rule weighted average of crisp consequents."""
    d1 = degrees(terms1, u1, x1)
    d2 = degrees(terms2, u2, x2)
    num = 0.0
    den = 0.0
    for i in range(3):
        for j in range(3):
            s = tnorm(d1[i], d2[j])
            num += s * table[i][j]
            den += s
    return num / den


def naive_grid_argmin(nx, ny, s, anchors, w_hat, weights):
    """Triple loop over cells and anchors; ties keep the first (i, j) seen."""
    best = None
    best_cell = None
    for i in range(1, nx + 1):
        for j in range(1, ny + 1):
            cx = i * s - s / 2
            cy = j * s - s / 2
            total = 0.0
            for (px, py), w, wt in zip(anchors, w_hat, weights):
                dx = cx - px
                dy = cy - py
                r = w - math.sqrt(dx * dx + dy * dy)
                total = total + wt * (r * r)
            if best is None or total < best:
                best = total
                best_cell = (i, j)
    return best_cell, best


def naive_stats(values):
    n = len(values)
    mean = sum(values) / n
    ordered = sorted(values)
    med = ordered[(n + 1) // 2 - 1]
    if n == 1:
        sd = 0.0
    else:
        sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    return mean, med, sd


def nearest_rank(values, p):
    """Smallest value v with at least p*n of the data <= v."""
    n = len(values)
    for v in sorted(values):
        if sum(1 for u in values if u <= v) >= p * n - 1e-9:
            return v
    return max(values)


def ols(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    slope = sxy / sxx
    return slope, my - slope * mx
