"""Patterns in permutations and permutons.

Permutations are plain tuples in one-line notation with values ``1..n``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import (
    GridPermuton,
    Permuton,
    PermutonError,
    SegmentPermuton,
    canonical,
)

K_MAX = 4


class PatternError(ValueError):
    pass


Permutation = tuple


def as_permutation(values: Sequence[int]) -> tuple[int, ...]:
    """Validate one-line notation and return it as a tuple."""
    perm = tuple(int(v) for v in values)
    if sorted(perm) != list(range(1, len(perm) + 1)):
        raise PatternError(f"{values!r} is not a permutation of 1..n")
    return perm


def parse_permutation(text: str) -> tuple[int, ...]:
    """Parse ``"132"`` or ``"1,3,2"``."""
    text = text.strip()
    if "," in text or " " in text:
        parts = [p for p in text.replace(",", " ").split() if p]
    else:
        parts = list(text)
    return as_permutation(parts)


def parse_pattern(text: str | Sequence[int], k_max: int = K_MAX) -> tuple[int, ...]:
    sigma = parse_permutation(text) if isinstance(text, str) else as_permutation(text)
    if len(sigma) > k_max:
        raise PatternError(f"pattern size {len(sigma)} exceeds {k_max}")
    return sigma


def format_permutation(perm: Sequence[int]) -> str:
    return ",".join(str(v) for v in perm)


def identity(n: int) -> tuple[int, ...]:
    return tuple(range(1, n + 1))


def _rank_pattern(values: np.ndarray) -> np.ndarray:
    """Rank (1-based) of each entry along the last axis."""
    return np.argsort(np.argsort(values, axis=-1, kind="stable"), axis=-1) + 1


# ---------------------------------------------------------------- permutations


def induced_permutation(points) -> tuple[int, ...]:
    """Permutation induced by a point configuration (sort by x, rank the y's)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(np.unique(pts[:, 0])) != len(pts) or len(np.unique(pts[:, 1])) != len(pts):
        raise PatternError("tied coordinates: induced permutation undefined")
    ys = pts[np.argsort(pts[:, 0], kind="stable"), 1]
    return tuple(int(v) for v in _rank_pattern(ys))


def induced_permutations(points: np.ndarray) -> np.ndarray:
    """Batched version for an array of shape ``(batch, n, 2)``; no tie check."""
    order = np.argsort(points[..., 0], axis=-1, kind="stable")
    ys = np.take_along_axis(points[..., 1], order, axis=-1)
    return _rank_pattern(ys)


def h_sigma(sigma: Sequence[int], points) -> int:
    """Indicator that ``points`` (exactly k of them) induce ``sigma``; ties give 0."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) != len(sigma):
        raise PatternError("h_sigma needs exactly k points")
    try:
        return int(induced_permutation(pts) == tuple(sigma))
    except PatternError:
        return 0


class FenwickTree:
    """Binary indexed tree over positions ``1..n`` holding counts."""

    def __init__(self, n: int):
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, i: int, delta: int = 1) -> None:
        while i <= self.n:
            self.tree[i] += delta
            i += i & -i

    def prefix(self, i: int) -> int:
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s


def inversion_count(perm: Sequence[int]) -> int:
    """Number of pairs ``i < j`` with ``perm[i] > perm[j]`` in O(n log n)."""
    n = len(perm)
    tree = FenwickTree(n)
    inv = 0
    for seen, v in enumerate(perm):
        inv += seen - tree.prefix(v)
        tree.add(v)
    return inv


def inversion_counts(perms: np.ndarray) -> np.ndarray:
    """Inversion counts of each row of an integer array of permutations.

    A Fenwick tree per row, advanced in lockstep across the batch.
    """
    perms = np.asarray(perms, dtype=np.int64)
    batch, n = perms.shape
    tree = np.zeros((batch, n + 1), dtype=np.int64)
    rows = np.arange(batch)
    inv = np.zeros(batch, dtype=np.int64)
    for pos in range(n):
        v = perms[:, pos].copy()
        # prefix sums: number of earlier values <= v
        s = np.zeros(batch, dtype=np.int64)
        i = v.copy()
        while np.any(i > 0):
            live = i > 0
            s[live] += tree[rows[live], i[live]]
            i[live] -= i[live] & -i[live]
        inv += pos - s
        i = v.copy()
        while np.any(i <= n):
            live = i <= n
            tree[rows[live], i[live]] += 1
            i[live] += i[live] & -i[live]
    return inv


def occurrences(sigma: Sequence[int], perm: Sequence[int], chunk: int = 200_000) -> int:
    """Number of k-subsets of positions of ``perm`` whose pattern is ``sigma``."""
    sigma = tuple(sigma)
    k, n = len(sigma), len(perm)
    if k > n:
        return 0
    if k == 1:
        return n
    if k == 2:
        inv = inversion_count(perm)
        return inv if sigma == (2, 1) else math.comb(n, 2) - inv
    if k > K_MAX:
        raise PatternError(f"occurrence counting is limited to k <= {K_MAX}")
    arr = np.asarray(perm)
    target = np.asarray(sigma)
    total = 0
    combos = itertools.combinations(range(n), k)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        pats = _rank_pattern(arr[block.reshape(-1, k)])
        total += int(np.all(pats == target, axis=1).sum())
    return total


def t_sigma_perm(sigma: Sequence[int], perm: Sequence[int]) -> float:
    """Pattern density of ``sigma`` in the empirical measure of ``perm``."""
    k, n = len(sigma), len(perm)
    return math.factorial(k) * occurrences(sigma, perm) / n**k


def t_sigma_perms(sigma: Sequence[int], perms: np.ndarray) -> np.ndarray:
    """:func:`t_sigma_perm` for every row of a ``(batch, n)`` array."""
    sigma = tuple(sigma)
    perms = np.asarray(perms, dtype=np.int64)
    batch, n = perms.shape
    k = len(sigma)
    if k > n:
        return np.zeros(batch)
    if k == 2:
        inv = inversion_counts(perms)
        occ = inv if sigma == (2, 1) else math.comb(n, 2) - inv
    else:
        combos = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
        pats = _rank_pattern(perms[:, combos])
        occ = np.all(pats == np.asarray(sigma), axis=-1).sum(axis=1)
    return math.factorial(k) * occ / n**k


# ---------------------------------------------------------------- measures


def pair_weight_21(nu: Permuton, points) -> np.ndarray | float:
    """``nu([0,x] x [y,1]) + nu([x,1] x [0,y])`` at each point ``(x, y)``.

    The conditional probability that a second ``nu``-point forms an inversion
    with the given one.
    """
    pts = np.asarray(points, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    f = nu.cdf(x, y)
    out = nu.x_cdf(x) + nu.y_cdf(y) - 2.0 * f
    return float(out) if np.ndim(out) == 0 else out


def grid_dominance(masses: np.ndarray) -> np.ndarray:
    """Cell-averaged inversion weight against a grid measure with given cell masses.

    Entry ``[i, j]`` is the probability that a point uniform in cell ``(i, j)``
    and an independent point of the measure form an inversion.  Points sharing
    a column (or row) are ordered in x (or y) with probability one half.
    """
    mass = np.asarray(masses, dtype=float)
    m = mass.shape[0]
    p = np.zeros((m + 1, m + 1))
    p[1:, 1:] = mass.cumsum(0).cumsum(1)
    col = mass.sum(axis=1)  # total in column i
    row = mass.sum(axis=0)  # total in row j
    rows_below = p[m, :m]  # sum over all columns of rows < j
    cols_left = p[:m, m]  # sum over all rows of columns < i
    right_below = rows_below[None, :] - p[1:, :m]
    left_above = cols_left[:, None] - p[:m, 1:]
    return right_below + left_above + 0.5 * (col[:, None] + row[None, :] - mass)


def _clip_halfplane(poly: list[tuple[float, float]], a: float, b: float, c: float):
    """Keep the part of a convex polygon where ``a*u + b*v + c >= 0``."""
    out = []
    n = len(poly)
    for idx in range(n):
        p, q = poly[idx], poly[(idx + 1) % n]
        fp = a * p[0] + b * p[1] + c
        fq = a * q[0] + b * q[1] + c
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    s = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        s += x0 * y1 - x1 * y0
    return abs(s) / 2.0


_UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


def segment_inversion_probability(sa, sb) -> float:
    """P(inversion) for independent uniform points on segments ``sa`` and ``sb``.

    Segments are ``(x0, y0, x1, y1)``.  Exact: the inversion region in
    parameter space is cut out of the unit square by two lines.
    """
    ax0, ay0, ax1, ay1 = sa[:4]
    bx0, by0, bx1, by1 = sb[:4]
    # overlap-free boxes decide the answer directly
    if ax1 < bx0 or bx1 < ax0:
        left, right = (sa, sb) if ax1 < bx0 else (sb, sa)
        lmin, lmax = sorted((left[1], left[3]))
        rmin, rmax = sorted((right[1], right[3]))
        if lmax < rmin:
            return 0.0
        if rmax < lmin:
            return 1.0
    # L1 = xa - xb, L2 = ya - yb as affine functions of (u, v)
    l1 = (ax1 - ax0, -(bx1 - bx0), ax0 - bx0)
    l2 = (ay1 - ay0, -(by1 - by0), ay0 - by0)
    area = 0.0
    for s1, s2 in ((1.0, -1.0), (-1.0, 1.0)):
        poly = _clip_halfplane(_UNIT_SQUARE, s1 * l1[0], s1 * l1[1], s1 * l1[2])
        poly = _clip_halfplane(poly, s2 * l2[0], s2 * l2[1], s2 * l2[2])
        area += _area(poly)
    return min(max(area, 0.0), 1.0)


def segment_inversion_matrix(segs: np.ndarray) -> np.ndarray:
    """Symmetric matrix of pairwise inversion probabilities between segments."""
    n = len(segs)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = segment_inversion_probability(segs[i], segs[j])
    return out


def _grid_segment_cross(grid: GridPermuton, seg: SegmentPermuton) -> float:
    """``E[pair_weight_21(grid, Z)]`` for Z drawn from the segment measure.

    Along each piece of a segment inside one grid cell the integrand is a
    quadratic polynomial, so 3-point Gauss-Legendre on every piece is exact.
    """
    m = grid.m
    nodes, gw = np.polynomial.legendre.leggauss(3)
    nodes, gw = 0.5 * (nodes + 1.0), 0.5 * gw
    total = 0.0
    for x0, y0, x1, y1, w in seg.segments:
        dx, dy = x1 - x0, y1 - y0
        ts = [0.0, 1.0]
        for c in np.arange(1, m) / m:
            for a0, d in ((x0, dx), (y0, dy)):
                if d != 0:
                    t = (c - a0) / d
                    if 0.0 < t < 1.0:
                        ts.append(t)
        ts = np.unique(ts)
        lo, hi = ts[:-1], ts[1:]
        tq = (lo[:, None] + (hi - lo)[:, None] * nodes[None, :]).ravel()
        wq = ((hi - lo)[:, None] * gw[None, :]).ravel()
        pts = np.column_stack([x0 + tq * dx, y0 + tq * dy])
        total += w * float((pair_weight_21(grid, pts) * wq).sum())
    return total


def t21_exact(nu: Permuton) -> float:
    can = canonical(nu)
    total = 0.0
    if can.grid is not None:
        mass = can.grid.masses
        total += can.grid_weight**2 * float((mass * grid_dominance(mass)).sum())
    if can.segments is not None:
        s = can.segments.segments
        w = s[:, 4]
        total += can.segment_weight**2 * float(w @ segment_inversion_matrix(s) @ w)
    if can.grid is not None and can.segments is not None:
        total += 2.0 * can.grid_weight * can.segment_weight * _grid_segment_cross(can.grid, can.segments)
    return min(max(total, 0.0), 1.0)


def _order_tensor(m: int) -> np.ndarray:
    """``P[a, b, c]``: probability that uniform coordinates in cells a, b, c are increasing."""
    idx = np.arange(m)
    a, b, c = np.meshgrid(idx, idx, idx, indexing="ij")
    out = np.zeros((m, m, m))
    out[(a < b) & (b < c)] = 1.0
    out[(a == b) & (b < c)] = 0.5
    out[(a < b) & (b == c)] = 0.5
    out[(a == b) & (b == c)] = 1.0 / 6.0
    return out


def t3_grid_exact(sigma: Sequence[int], grid: GridPermuton) -> float:
    """Exact density of a size-3 pattern in a grid permuton, O(m^5).

    By exchangeability ``t_sigma = 3! * P(x1 < x2 < x3, y-ranks equal sigma)``;
    x and y orders factorise given the cells.
    """
    m = grid.m
    order = _order_tensor(m)
    inv = np.argsort(sigma)  # labels listed by increasing y
    # py[r1, r2, r3] = P(y_{inv[0]} < y_{inv[1]} < y_{inv[2]} | rows)
    py = np.transpose(order, axes=np.argsort(inv))
    mass = grid.masses
    val = np.einsum("ar,bs,ct,abc,rst->", mass, mass, mass, order, py, optimize=True)
    return float(6.0 * val)


def t_sigma_measure_exact(sigma: Sequence[int], nu: Permuton) -> float:
    """Exact pattern density ``t_sigma(nu)``.

    Supported: any ``sigma`` of size 2 on every representation; size 3 on
    grid permutons.  Other combinations must use :func:`t_sigma_measure_mc`.
    """
    sigma = tuple(sigma)
    k = len(sigma)
    if k == 1:
        return 1.0
    if k == 2:
        t = t21_exact(nu)
        return t if sigma == (2, 1) else 1.0 - t
    if k == 3:
        can = canonical(nu)
        if can.segments is None:
            return t3_grid_exact(sigma, can.grid)
    raise PatternError(
        f"no exact evaluation for pattern of size {k} on {type(nu).__name__}; "
        "use t_sigma_measure_mc"
    )


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n: int
    seed: int | None

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.value - target) <= n_se * self.stderr + 1e-15


def t_sigma_measure_mc(sigma: Sequence[int], nu: Permuton, N: int, seed=None, batch: int = 100_000) -> McEstimate:
    """Monte Carlo pattern density from ``N`` i.i.d. k-tuples of ``nu``-points."""
    sigma = np.asarray(tuple(sigma))
    k = len(sigma)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < N:
        b = min(batch, N - done)
        pts = nu.sample(b * k, rng).reshape(b, k, 2)
        pats = induced_permutations(pts)
        ok = np.all(pats == sigma, axis=1)
        # ties have probability zero for continuous marginals but are excluded anyway
        tie = (np.diff(np.sort(pts[..., 0], axis=1), axis=1) == 0).any(1) | (
            np.diff(np.sort(pts[..., 1], axis=1), axis=1) == 0
        ).any(1)
        hits += int((ok & ~tie).sum())
        done += b
    p = hits / N
    se = math.sqrt(p * (1 - p) / (N - 1)) if N > 1 else 0.0
    return McEstimate(p, se, N, seed)


__all__ = [
    "FenwickTree",
    "K_MAX",
    "McEstimate",
    "PatternError",
    "PermutonError",
    "as_permutation",
    "format_permutation",
    "grid_dominance",
    "h_sigma",
    "identity",
    "induced_permutation",
    "induced_permutations",
    "inversion_count",
    "inversion_counts",
    "occurrences",
    "pair_weight_21",
    "parse_pattern",
    "parse_permutation",
    "segment_inversion_matrix",
    "segment_inversion_probability",
    "t21_exact",
    "t_sigma_measure_exact",
    "t_sigma_measure_mc",
    "t_sigma_perm",
    "t_sigma_perms",
]
