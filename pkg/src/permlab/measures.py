"""Permutons and measure-theoretic primitives.

Three concrete representations are supported:

* :class:`GridPermuton` -- piecewise-constant density on an ``m x m`` grid,
  ``density[i, j]`` being the value on column ``i`` (x) and row ``j`` (y);
* :class:`SegmentPermuton` -- mass spread uniformly (in x-projection) along
  finitely many segments of slope +1 or -1;
* :class:`MixturePermuton` -- a convex combination of the above.

All objects are immutable after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

MASS_TOL = 1e-12
MAX_COMMON_RESOLUTION = 4096


class PermutonError(ValueError):
    """Invalid permuton construction or incompatible operation."""


@dataclass(frozen=True)
class Rect:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo <= self.x_hi and self.y_lo <= self.y_hi):
            raise PermutonError(f"badly ordered rectangle {self}")


D11 = Rect(0.0, 0.5, 0.0, 0.5)
D12 = Rect(0.0, 0.5, 0.5, 1.0)
D21 = Rect(0.5, 1.0, 0.0, 0.5)
D22 = Rect(0.5, 1.0, 0.5, 1.0)
UNIT = Rect(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class MarginalCdf:
    """Piecewise-linear nondecreasing CDF on [0, 1] given by breakpoints."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.knots, self.values)

    def is_identity(self, tol: float = MASS_TOL) -> bool:
        grid = np.union1d(self.knots, np.linspace(0.0, 1.0, 65))
        return bool(np.max(np.abs(self(grid) - grid)) <= tol)


def _cdf_from_pieces(knots, values) -> MarginalCdf:
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(knots, kind="stable")
    knots, values = knots[order], values[order]
    values = np.maximum.accumulate(np.clip(values, 0.0, 1.0))
    values[0], values[-1] = 0.0, 1.0
    return MarginalCdf(knots, values)


def _interval_fractions(lo, hi, m: int) -> np.ndarray:
    """Fraction of each of the ``m`` unit cells covered by ``[lo, hi]``.

    Broadcasts over leading dimensions of ``lo``/``hi``; the last axis of the
    result has length ``m``.
    """
    edges = np.arange(m, dtype=float)
    lo = np.asarray(lo, dtype=float)[..., None] * m
    hi = np.asarray(hi, dtype=float)[..., None] * m
    return np.clip(np.minimum(hi, edges + 1) - np.maximum(lo, edges), 0.0, 1.0)


class Permuton:
    """Base class: a probability measure on the unit square with continuous marginals."""

    kind = "abstract"

    def cdf(self, x, y):
        """Joint CDF ``F(x, y) = mu([0, x] x [0, y])`` (vectorised)."""
        raise NotImplementedError

    def box_masses(self, x_lo, x_hi, y_lo, y_hi):
        raise NotImplementedError

    def marginal_cdfs(self) -> tuple[MarginalCdf, MarginalCdf]:
        raise NotImplementedError

    def reflect(self) -> "Permuton":
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def box_mass(self, r: Rect) -> float:
        return float(self.box_masses(r.x_lo, r.x_hi, r.y_lo, r.y_hi))

    def x_cdf(self, x):
        return self.cdf(x, np.ones_like(np.asarray(x, dtype=float)))

    def y_cdf(self, y):
        return self.cdf(np.ones_like(np.asarray(y, dtype=float)), y)

    def __repr__(self):
        return f"<{type(self).__name__}>"


class GridPermuton(Permuton):
    kind = "grid"

    def __init__(self, density, *, normalize: bool = False):
        d = np.array(density, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise PermutonError("grid density must be a non-empty square array")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise PermutonError("grid density must be finite and nonnegative")
        m = d.shape[0]
        total = d.sum() / m**2
        if normalize:
            if total <= 0:
                raise PermutonError("grid density has zero mass")
            d = d / total
        elif abs(total - 1.0) > 1e-9:
            raise PermutonError(f"grid density integrates to {total}, not 1")
        d.setflags(write=False)
        self.density = d
        self.m = m

    @property
    def masses(self) -> np.ndarray:
        return self.density / self.m**2

    def cdf(self, x, y):
        fx = _interval_fractions(0.0, x, self.m)
        fy = _interval_fractions(0.0, y, self.m)
        return np.einsum("...i,ij,...j->...", fx, self.masses, fy)

    def box_masses(self, x_lo, x_hi, y_lo, y_hi):
        fx = _interval_fractions(x_lo, x_hi, self.m)
        fy = _interval_fractions(y_lo, y_hi, self.m)
        return np.einsum("...i,ij,...j->...", fx, self.masses, fy)

    def marginal_cdfs(self):
        knots = np.linspace(0.0, 1.0, self.m + 1)
        cx = np.concatenate([[0.0], np.cumsum(self.masses.sum(axis=1))])
        cy = np.concatenate([[0.0], np.cumsum(self.masses.sum(axis=0))])
        return _cdf_from_pieces(knots, cx), _cdf_from_pieces(knots, cy)

    def reflect(self):
        return GridPermuton(self.density[::-1, ::-1])

    def refine(self, m_new: int) -> "GridPermuton":
        if m_new % self.m:
            raise PermutonError(f"cannot refine resolution {self.m} to {m_new}")
        r = m_new // self.m
        return GridPermuton(np.repeat(np.repeat(self.density, r, axis=0), r, axis=1))

    def sample(self, n, rng):
        flat = self.masses.ravel()
        idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
        i, j = np.divmod(idx, self.m)
        u = rng.random((n, 2))
        return np.column_stack([(i + u[:, 0]) / self.m, (j + u[:, 1]) / self.m])

    def __repr__(self):
        return f"GridPermuton(m={self.m})"


class SegmentPermuton(Permuton):
    """Mass ``w`` spread along each slope-(+/-1) segment, uniform in x-projection."""

    kind = "segments"

    def __init__(self, segments, *, drop_degenerate: bool = True):
        rows = []
        for seg in segments:
            (x0, y0), (x1, y1), w = seg
            rows.append((float(x0), float(y0), float(x1), float(y1), float(w)))
        arr = np.array(rows, dtype=float).reshape(-1, 5)
        if arr.size == 0:
            raise PermutonError("no segments")
        if np.any(arr[:, :4] < -MASS_TOL) or np.any(arr[:, :4] > 1 + MASS_TOL):
            raise PermutonError("segment coordinates must lie in [0, 1]")
        if np.any(arr[:, 4] < 0):
            raise PermutonError("segment weights must be nonnegative")
        dx = arr[:, 2] - arr[:, 0]
        dy = arr[:, 3] - arr[:, 1]
        degenerate = (np.abs(dx) <= MASS_TOL) & (np.abs(dy) <= MASS_TOL)
        if np.any(degenerate & (arr[:, 4] > MASS_TOL)):
            raise PermutonError("a point segment carries an atom")
        if drop_degenerate:
            arr = arr[~degenerate]
            dx, dy = dx[~degenerate], dy[~degenerate]
        if np.any(np.abs(np.abs(dx) - np.abs(dy)) > 1e-9):
            raise PermutonError("segments must have slope +1 or -1")
        if abs(arr[:, 4].sum() - 1.0) > 1e-9:
            raise PermutonError(f"segment weights sum to {arr[:, 4].sum()}, not 1")
        # orient every segment left to right
        flip = dx < 0
        arr[flip] = arr[flip][:, [2, 3, 0, 1, 4]]
        arr[:, :4] = np.clip(arr[:, :4], 0.0, 1.0)
        arr.setflags(write=False)
        self.segments = arr

    @property
    def weights(self) -> np.ndarray:
        return self.segments[:, 4]

    def _param_interval(self, x_lo, x_hi, y_lo, y_hi):
        """Parameter sub-interval of each segment inside the box (broadcast)."""
        s = self.segments
        x0, y0, x1, y1 = s[:, 0], s[:, 1], s[:, 2], s[:, 3]
        dx, dy = x1 - x0, y1 - y0
        x_lo, x_hi, y_lo, y_hi = (np.asarray(a, dtype=float)[..., None] for a in (x_lo, x_hi, y_lo, y_hi))
        tx0, tx1 = (x_lo - x0) / dx, (x_hi - x0) / dx
        with np.errstate(divide="ignore", invalid="ignore"):
            ty0, ty1 = (y_lo - y0) / dy, (y_hi - y0) / dy
        ty_lo, ty_hi = np.minimum(ty0, ty1), np.maximum(ty0, ty1)
        lo = np.maximum(np.maximum(tx0, ty_lo), 0.0)
        hi = np.minimum(np.minimum(tx1, ty_hi), 1.0)
        return lo, hi

    def box_masses(self, x_lo, x_hi, y_lo, y_hi):
        lo, hi = self._param_interval(x_lo, x_hi, y_lo, y_hi)
        return (np.clip(hi - lo, 0.0, None) * self.weights).sum(axis=-1)

    def cdf(self, x, y):
        x = np.asarray(x, dtype=float)
        return self.box_masses(np.zeros_like(x), x, np.zeros_like(x), y)

    def marginal_cdfs(self):
        s = self.segments
        knots = np.union1d(np.concatenate([[0.0, 1.0], s[:, 0], s[:, 2]]), [])
        cx = self.cdf(knots, np.ones_like(knots))
        yk = np.union1d(np.concatenate([[0.0, 1.0], s[:, 1], s[:, 3]]), [])
        cy = self.cdf(np.ones_like(yk), yk)
        return _cdf_from_pieces(knots, cx), _cdf_from_pieces(yk, cy)

    def reflect(self):
        s = self.segments
        return SegmentPermuton([((1 - a, 1 - b), (1 - c, 1 - d), w) for a, b, c, d, w in s])

    def sample(self, n, rng):
        s = self.segments
        idx = rng.choice(len(s), size=n, p=self.weights / self.weights.sum())
        t = rng.random(n)
        x = s[idx, 0] + t * (s[idx, 2] - s[idx, 0])
        y = s[idx, 1] + t * (s[idx, 3] - s[idx, 1])
        return np.column_stack([x, y])

    def split(self, bins: int) -> "SegmentPermuton":
        """Same measure, each segment cut into ``bins`` equal pieces."""
        t = np.linspace(0.0, 1.0, bins + 1)
        out = []
        for x0, y0, x1, y1, w in self.segments:
            xs = x0 + t * (x1 - x0)
            ys = y0 + t * (y1 - y0)
            out.extend(((xs[b], ys[b]), (xs[b + 1], ys[b + 1]), w / bins) for b in range(bins))
        return SegmentPermuton(out)

    def __repr__(self):
        return f"SegmentPermuton({len(self.segments)} segments)"


class MixturePermuton(Permuton):
    kind = "mixture"

    def __init__(self, components: Sequence[Permuton], weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if len(components) != len(w) or len(w) == 0:
            raise PermutonError("components and weights must be non-empty and aligned")
        if np.any(w < 0):
            raise PermutonError("mixture weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise PermutonError(f"mixture weights sum to {w.sum()}, not 1")
        w = w.copy()
        w.setflags(write=False)
        self.components = tuple(components)
        self.weights = w

    def cdf(self, x, y):
        return sum(w * c.cdf(x, y) for c, w in zip(self.components, self.weights))

    def box_masses(self, x_lo, x_hi, y_lo, y_hi):
        return sum(w * c.box_masses(x_lo, x_hi, y_lo, y_hi) for c, w in zip(self.components, self.weights))

    def marginal_cdfs(self):
        parts = [c.marginal_cdfs() for c in self.components]
        xk = reduce(np.union1d, [p[0].knots for p in parts])
        yk = reduce(np.union1d, [p[1].knots for p in parts])
        cx = sum(w * p[0](xk) for p, w in zip(parts, self.weights))
        cy = sum(w * p[1](yk) for p, w in zip(parts, self.weights))
        return _cdf_from_pieces(xk, cx), _cdf_from_pieces(yk, cy)

    def reflect(self):
        return MixturePermuton([c.reflect() for c in self.components], self.weights)

    def sample(self, n, rng):
        counts = rng.multinomial(n, self.weights)
        pts = np.concatenate([c.sample(k, rng) for c, k in zip(self.components, counts)])
        return pts[rng.permutation(n)]

    def __repr__(self):
        return f"MixturePermuton({list(self.components)}, {self.weights.tolist()})"


# ---------------------------------------------------------------- operations


def box_mass(mu: Permuton, r: Rect) -> float:
    """Exact ``mu``-mass of the closed rectangle ``r``."""
    return mu.box_mass(r)


def marginal_cdfs(mu: Permuton) -> tuple[MarginalCdf, MarginalCdf]:
    return mu.marginal_cdfs()


def reflect(nu: Permuton) -> Permuton:
    """Push-forward under ``(x, y) -> (1 - x, 1 - y)``."""
    return nu.reflect()


def mix(components: Sequence[Permuton], weights: Sequence[float]) -> Permuton:
    w = np.asarray(weights, dtype=float)
    if len(components) != len(w) or len(w) == 0:
        raise PermutonError("components and weights must be non-empty and aligned")
    if np.any(w < 0):
        raise PermutonError("mixture weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise PermutonError(f"mixture weights sum to {w.sum()}, not 1")
    keep = [i for i in range(len(w)) if w[i] > 0]
    if len(keep) == 1:
        return components[keep[0]]
    return MixturePermuton([components[i] for i in keep], w[keep] / w[keep].sum())


def lebesgue() -> GridPermuton:
    return GridPermuton(np.ones((1, 1)))


def has_uniform_marginals(mu: Permuton, tol: float = MASS_TOL) -> bool:
    fx, fy = mu.marginal_cdfs()
    return fx.is_identity(tol) and fy.is_identity(tol)


# ------------------------------------------------------ canonical decomposition


@dataclass(frozen=True)
class Canonical:
    """Lebesgue-absolutely-continuous part plus singular (segment) part.

    ``grid`` is a probability grid (or ``None``) carrying total weight
    ``grid_weight``; ``segments`` likewise with ``segment_weight``.
    """

    grid: GridPermuton | None
    grid_weight: float
    segments: SegmentPermuton | None
    segment_weight: float


def _lcm(values) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), values, 1)


def common_resolution(*ms: int) -> int:
    m = _lcm(ms)
    if m > MAX_COMMON_RESOLUTION:
        raise PermutonError(f"common grid resolution {m} exceeds cap {MAX_COMMON_RESOLUTION}")
    return m


def canonical(mu: Permuton) -> Canonical:
    grids: list[tuple[GridPermuton, float]] = []
    segs: list[tuple[SegmentPermuton, float]] = []

    def walk(p, w):
        if w <= 0:
            return
        if isinstance(p, GridPermuton):
            grids.append((p, w))
        elif isinstance(p, SegmentPermuton):
            segs.append((p, w))
        elif isinstance(p, MixturePermuton):
            for c, cw in zip(p.components, p.weights):
                walk(c, w * cw)
        else:
            raise PermutonError(f"unsupported permuton {p!r}")

    walk(mu, 1.0)
    grid = seg = None
    gw = sum(w for _, w in grids)
    sw = sum(w for _, w in segs)
    if grids:
        m = common_resolution(*(g.m for g, _ in grids))
        dens = sum(w * g.refine(m).density for g, w in grids) / gw
        grid = GridPermuton(dens, normalize=True)
    if segs:
        rows = [((a, b), (c, d), w * sw_ / sw) for s, sw_ in segs for a, b, c, d, w in s.segments]
        seg = SegmentPermuton(rows)
    return Canonical(grid, gw, seg, sw)


def to_grid(mu: Permuton, m: int | None = None) -> GridPermuton:
    """Grid representation; exact for grid-only measures, rasterised otherwise."""
    can = canonical(mu)
    if can.segments is None and (m is None or m % can.grid.m == 0):
        return can.grid if m is None else can.grid.refine(m)
    if m is None:
        raise PermutonError("rasterising a singular measure needs an explicit resolution")
    return rasterize(mu, m)


def rasterize(mu: Permuton, m: int) -> GridPermuton:
    """Exact cell masses of ``mu`` on an ``m x m`` grid, as a grid permuton."""
    edges = np.linspace(0.0, 1.0, m + 1)
    xl, yl = np.meshgrid(edges[:-1], edges[:-1], indexing="ij")
    xh, yh = np.meshgrid(edges[1:], edges[1:], indexing="ij")
    masses = np.asarray(mu.box_masses(xl, xh, yl, yh), dtype=float)
    masses = np.clip(masses, 0.0, None)
    return GridPermuton(masses * m**2, normalize=True)


# ------------------------------------------------------ line densities


def _line_pieces(seg: SegmentPermuton):
    """Group segments by supporting line; return {key: (knots, density per x)}."""
    lines: dict[tuple[int, float], list[tuple[float, float, float]]] = {}
    for x0, y0, x1, y1, w in seg.segments:
        if w <= 0:
            continue
        slope = 1 if (y1 - y0) > 0 else -1
        icpt = round(y0 - slope * x0, 11)
        lines.setdefault((slope, icpt), []).append((x0, x1, w / (x1 - x0)))
    out = {}
    for key, parts in lines.items():
        knots = np.unique(np.array([p[0] for p in parts] + [p[1] for p in parts]))
        mids = 0.5 * (knots[:-1] + knots[1:])
        dens = np.zeros(len(mids))
        for a, b, rho in parts:
            dens[(mids > a) & (mids < b)] += rho
        out[key] = (knots, dens)
    return out


def _line_pair_terms(nu_seg, mu_seg):
    """Yield (length, rho_nu, rho_mu) over a common refinement of both skeletons."""
    a = _line_pieces(nu_seg) if nu_seg is not None else {}
    b = _line_pieces(mu_seg) if mu_seg is not None else {}
    for key in set(a) | set(b):
        ka, da = a.get(key, (np.array([0.0, 1.0]), np.zeros(1)))
        kb, db = b.get(key, (np.array([0.0, 1.0]), np.zeros(1)))
        knots = np.union1d(ka, kb)
        mids = 0.5 * (knots[:-1] + knots[1:])
        ra = np.where((mids >= ka[0]) & (mids <= ka[-1]), da[np.clip(np.searchsorted(ka, mids) - 1, 0, len(da) - 1)], 0.0)
        rb = np.where((mids >= kb[0]) & (mids <= kb[-1]), db[np.clip(np.searchsorted(kb, mids) - 1, 0, len(db) - 1)], 0.0)
        yield np.diff(knots), ra, rb


def _xlogy_ratio(p, q):
    """Elementwise ``p * log(p / q)`` with the conventions 0 log 0 = 0, p>0=q -> inf."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    pos = p > 0
    bad = pos & (q <= 0)
    ok = pos & (q > 0)
    out[ok] = (p * np.log(np.where(ok, p, 1.0) / np.where(ok, q, 1.0)))[ok]
    out[bad] = np.inf
    return out


def kl_divergence(nu: Permuton, mu: Permuton) -> float:
    """Kullback-Leibler divergence ``D(nu | mu)``; ``inf`` when nu is not << mu."""
    cn, cm = canonical(nu), canonical(mu)
    total = 0.0
    if cn.grid is not None:
        if cm.grid is None:
            return math.inf
        m = common_resolution(cn.grid.m, cm.grid.m)
        pn = cn.grid_weight * cn.grid.refine(m).density
        pm = cm.grid_weight * cm.grid.refine(m).density
        total += float(_xlogy_ratio(pn, pm).sum() / m**2)
    if cn.segments is not None:
        if cm.segments is None:
            return math.inf
        for length, ra, rb in _line_pair_terms(cn.segments, cm.segments):
            total += float((_xlogy_ratio(cn.segment_weight * ra, cm.segment_weight * rb) * length).sum())
    return max(total, 0.0) if math.isfinite(total) else math.inf


def tv_distance(nu: Permuton, mu: Permuton) -> float:
    """Total variation distance (half the L1 distance of densities)."""
    cn, cm = canonical(nu), canonical(mu)
    total = 0.0
    if cn.grid is not None or cm.grid is not None:
        ms = [c.grid.m for c in (cn, cm) if c.grid is not None]
        m = common_resolution(*ms)
        pn = cn.grid_weight * cn.grid.refine(m).density if cn.grid is not None else np.zeros((m, m))
        pm = cm.grid_weight * cm.grid.refine(m).density if cm.grid is not None else np.zeros((m, m))
        total += float(np.abs(pn - pm).sum() / m**2)
    if cn.segments is not None or cm.segments is not None:
        for length, ra, rb in _line_pair_terms(cn.segments, cm.segments):
            total += float((np.abs(cn.segment_weight * ra - cm.segment_weight * rb) * length).sum())
    return min(0.5 * total, 1.0)


# ------------------------------------------------------ projection to permutons


def _cdf_rect_map(cdf: MarginalCdf, m_src: int, m_out: int) -> np.ndarray:
    """Overlap fractions: source column -> output column after applying ``cdf``."""
    edges = np.linspace(0.0, 1.0, m_src + 1)
    img = cdf(edges)
    lo, hi = img[:-1], img[1:]
    width = hi - lo
    frac = _interval_fractions(lo, hi, m_out) / m_out
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(width[:, None] > 0, frac / np.where(width > 0, width, 1.0)[:, None], 0.0)
    return out


def project_uniform(nu: Permuton, m_out: int = 64) -> Permuton:
    """Push-forward of ``nu`` under its marginal CDFs (the map onto permutons).

    Returns ``nu`` itself when its marginals are already uniform.  Grid
    inputs are transported exactly onto an ``m_out`` grid; singular inputs are
    rasterised at ``m_out`` first.
    """
    if has_uniform_marginals(nu):
        return nu
    can = canonical(nu)
    if can.segments is None:
        grid = can.grid
    else:
        grid = rasterize(nu, m_out)
    fx, fy = grid.marginal_cdfs()
    ax = _cdf_rect_map(fx, grid.m, m_out)
    ay = _cdf_rect_map(fy, grid.m, m_out)
    out = ax.T @ grid.masses @ ay
    return GridPermuton(out * m_out**2, normalize=True)


def permutons_close(a: Permuton, b: Permuton, tol: float = 1e-12) -> bool:
    return tv_distance(a, b) <= tol
