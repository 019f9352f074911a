"""Reference families and diagnostics for inversion-tilted permutons."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect, brentq

from .measures import (
    D11,
    D22,
    GridPermuton,
    Permuton,
    PermutonError,
    Rect,
    SegmentPermuton,
    canonical,
    kl_divergence,
    mix,
    project_uniform,
)
from .patterns import as_permutation, pair_weight_21, t21_exact

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- Curie-Weiss reduction

def curie_weiss_root(theta: float, xtol: float = 1e-13) -> float:
    """Nonnegative root of ``x = tanh(theta x)``; zero for ``theta <= 1``."""
    if theta <= 1:
        return 0.0
    f = lambda x: x - math.tanh(theta * x)
    lo = 1e-9
    while f(lo) >= 0:
        lo /= 10
        if lo < 1e-300:
            return 0.0
    return bisect(f, lo, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def xi11() -> SegmentPermuton:
    """Uniform mass on the anti-diagonal of the lower-left quarter."""
    return SegmentPermuton([((0.0, 0.5), (0.5, 0.0), 1.0)])


def xi22() -> SegmentPermuton:
    return SegmentPermuton([((0.5, 1.0), (1.0, 0.5), 1.0)])


def xi_mixture(p: float) -> Permuton:
    """``p xi11 + (1 - p) xi22``."""
    return mix([xi11(), xi22()], [p, 1.0 - p])


def xi() -> Permuton:
    return xi_mixture(0.5)


def xi_free_energy(theta: float) -> float:
    """Free energy of the tilted problem over the two-block family at its optimum."""
    x = curie_weiss_root(theta)
    return theta * (1 + x * x) / 2 - _xi_divergence(x)


def _xi_divergence(x: float) -> float:
    # D(p xi11 + q xi22 | xi) with p = (1 + x) / 2
    out = 0.0
    for s in (1 + x, 1 - x):
        if s > 0:
            out += s / 2 * math.log(s)
    return out


def xi_gibbs_optimizers(theta: float) -> list[Permuton]:
    """Maximisers over the ``xi`` family: ``xi`` itself up to ``theta = 1``, two tilted mixtures above."""
    m = curie_weiss_root(theta)
    if m == 0.0:
        return [xi()]
    return [xi_mixture((1 + m) / 2), xi_mixture((1 - m) / 2)]


@dataclass(frozen=True)
class XiConditional:
    weights: tuple[float, float]
    G: float
    optimizers: tuple[Permuton, Permuton]


def xi_conditional_optimizers(delta: float) -> XiConditional:
    """Two minimisers of ``D(. | xi)`` subject to ``t21 = delta`` over the ``xi`` family."""
    if not 0.5 < delta < 1:
        raise ValueError("delta must lie in (1/2, 1)")
    x = math.sqrt(2 * delta - 1)
    p, q = (1 + x) / 2, (1 - x) / 2
    G = p * math.log(p) + q * math.log(q) + math.log(2)
    return XiConditional((p, q), G, (xi_mixture(p), xi_mixture(q)))


# ---------------------------------------------------------------- Mallows limit density

def mallows_density(theta: float, x, y):
    """Closed-form limit density of the Mallows permuton.

    With the inversion tilt ``exp(n t t21)`` used elsewhere in this package
    this is the optimiser at ``t = theta / 2``.  Returns 1 at ``theta = 0``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if theta == 0:
        out = np.ones(np.broadcast(x, y).shape)
    else:
        # factored so that nothing overflows at large |theta|; negative
        # theta is the same density with the roles of the two cosh terms swapped
        t = abs(theta)
        a = np.abs(t * (x - y) / 2)
        b = np.abs(t * (x + y - 1) / 2)
        if theta < 0:
            a, b = b, a
        bracket = np.exp(-t / 2 + a - b) * (1 + np.exp(-2 * a)) / 2 - (1 + np.exp(-2 * b)) / 2
        out = t / 4 * (-math.expm1(-t)) * np.exp(-2 * b) / bracket**2
    return float(out) if out.ndim == 0 else out


def mallows_grid(theta: float, m: int) -> GridPermuton:
    """Cell-centre samples of :func:`mallows_density`, renormalised to mass one."""
    c = (np.arange(m) + 0.5) / m
    x, y = np.meshgrid(c, c, indexing="ij")
    return GridPermuton(mallows_density(theta, x, y), normalize=True)


def mallows_el_residual(theta: float, m: int = 64, h: float = 1e-3, coefficient: float = -2.0, relative: bool = True) -> float:
    """Largest gap between the mixed log-derivative of the density and ``coefficient * theta * density``.

    The mixed derivative uses the four-point cross difference with step ``h``
    at the interior nodes ``i / m``.  With ``relative`` the gap at each node is
    divided by ``max(|theta| * density, 1)``.
    """
    nodes = np.arange(1, m) / m
    x, y = np.meshgrid(nodes, nodes, indexing="ij")

    def lf(a, b):
        return np.log(mallows_density(theta, a, b))

    mixed = (lf(x + h, y + h) - lf(x + h, y - h) - lf(x - h, y + h) + lf(x - h, y - h)) / (4 * h * h)
    dens = mallows_density(theta, x, y)
    gap = np.abs(mixed - coefficient * theta * dens)
    if relative:
        gap = gap / np.maximum(abs(theta) * dens, 1.0)
    return float(gap.max())


# ---------------------------------------------------------------- block family

def mu_ell(ell: float) -> GridPermuton:
    """Two-level grid: density ``1 + ell`` on the diagonal quarters, ``1 - ell`` off them."""
    if not 0 <= ell <= 1:
        raise PermutonError("ell must lie in [0, 1]")
    return GridPermuton(np.array([[1 + ell, 1 - ell], [1 - ell, 1 + ell]]))


def _merge_segments(rows):
    merged: dict[tuple, float] = {}
    for a, b, w in rows:
        if w <= 0:
            continue
        a, b = (a, b) if a[0] <= b[0] else (b, a)
        key = tuple(round(v, 14) for v in (*a, *b))
        merged[key] = merged.get(key, 0.0) + w
    return [((k[0], k[1]), (k[2], k[3]), w) for k, w in merged.items() if abs(k[0] - k[2]) > 1e-14]


def rect_permuton(z: float) -> SegmentPermuton:
    """Four segments forming a rectangle inscribed in the square, touching each side.

    Every support point sees the same inversion weight ``z``.
    """
    if not 0 <= z <= 1:
        raise PermutonError("z must lie in [0, 1]")
    rows = [
        ((0.0, z), (z, 0.0), z / 2),
        ((z, 0.0), (1.0, 1 - z), (1 - z) / 2),
        ((1 - z, 1.0), (1.0, 1 - z), z / 2),
        ((0.0, z), (1 - z, 1.0), (1 - z) / 2),
    ]
    return SegmentPermuton(_merge_segments(rows))


def inversion_degrees(eta: Sequence[int]) -> np.ndarray:
    """Number of inversions each position takes part in."""
    p = np.asarray(as_permutation(eta))
    i = np.arange(len(p))
    inv = ((i[:, None] - i[None, :]) * (p[:, None] - p[None, :])) < 0
    return inv.sum(axis=1)


def sstar_check(eta: Sequence[int]) -> bool:
    """True when every point of ``eta`` lies in the same number of inversions."""
    deg = inversion_degrees(eta)
    return bool(np.all(deg == deg[0]))


def substitution_square(eta: Sequence[int]) -> tuple[int, ...]:
    """``eta[eta, ..., eta]``: every point of ``eta`` replaced by a copy of ``eta``."""
    p = as_permutation(eta)
    n = len(p)
    return tuple((p[i] - 1) * n + p[j] for i in range(n) for j in range(n))


def sstar_inflate(eta: Sequence[int], z: float) -> SegmentPermuton:
    """Scaled copies of :func:`rect_permuton` placed in the cells of ``eta``."""
    p = as_permutation(eta)
    if not sstar_check(p):
        raise PermutonError(f"{p} does not have constant inversion degree")
    n = len(p)
    base = rect_permuton(z).segments
    rows = []
    for i, v in enumerate(p):
        for x0, y0, x1, y1, w in base:
            rows.append((((i + x0) / n, (v - 1 + y0) / n), ((i + x1) / n, (v - 1 + y1) / n), w / n))
    return SegmentPermuton(rows)


def sstar_constant(eta: Sequence[int], z: float) -> float:
    """Inversion weight of every support point of :func:`sstar_inflate`."""
    deg = inversion_degrees(eta)
    return (float(deg[0]) + z) / len(deg)


# ---------------------------------------------------------------- CC diagnostics

def support_points(mu: Permuton, resolution: int = 64) -> np.ndarray:
    """Representative support points: centres of charged cells, bin midpoints along segments."""
    can = canonical(mu)
    pts = []
    if can.grid is not None:
        g = can.grid
        i, j = np.nonzero(g.masses > 0)
        pts.append(np.column_stack([(i + 0.5) / g.m, (j + 0.5) / g.m]))
    if can.segments is not None:
        t = (np.arange(resolution) + 0.5) / resolution
        for x0, y0, x1, y1, w in can.segments.segments:
            if w > 0:
                pts.append(np.column_stack([x0 + t * (x1 - x0), y0 + t * (y1 - y0)]))
    return np.concatenate(pts)


@dataclass
class CcReport:
    verdict: str  # "CC" or "CNC"
    constant: float
    deviation: float
    witnesses: list = field(default_factory=list)
    resolution: int = 0
    tol: float = 0.0
    points: int = 0

    @property
    def is_cc(self) -> bool:
        return self.verdict == "CC"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "constant": self.constant,
            "deviation": self.deviation,
            "witnesses": [list(map(float, w)) for w in self.witnesses],
            "resolution": self.resolution,
            "tol": self.tol,
            "points": self.points,
        }


def cc_test_21(mu: Permuton, tol: float = 1e-9, resolution: int = 64) -> CcReport:
    """Test whether the inversion weight is constant over the support of ``mu``.

    Grid parts are probed at the centres of positive cells after refining to
    ``resolution``; segments at ``resolution`` midpoints each.
    """
    can = canonical(mu)
    if can.grid is not None and can.grid.m < resolution and resolution % can.grid.m == 0:
        # finer probe points on the absolutely continuous part
        pts = support_points(can.grid.refine(resolution), resolution)
        if can.segments is not None:
            pts = np.concatenate([pts, support_points(can.segments, resolution)])
    else:
        pts = support_points(mu, resolution)
    w = np.atleast_1d(pair_weight_21(mu, pts))
    mean = float(w.mean())
    dev = np.abs(w - mean)
    worst = float(dev.max())
    if worst <= tol:
        return CcReport("CC", mean, worst, [], resolution, tol, len(pts))
    hi, lo = int(np.argmax(w)), int(np.argmin(w))
    wit = [(*pts[hi], w[hi]), (*pts[lo], w[lo])]
    return CcReport("CNC", mean, float(w.max() - w.min()), wit, resolution, tol, len(pts))


@dataclass
class SupportDiagnostics:
    interior: bool
    b: float | None
    b_residual: float | None
    triangle_mass: float
    frontier_points: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _mass_below_line(mu: Permuton, b: float, margin: float = 1e-12) -> float:
    """Mass of ``{x + y < b - margin}``."""
    can = canonical(mu)
    total = 0.0
    cut = b - margin
    if can.grid is not None:
        g = can.grid
        lo = np.arange(g.m) / g.m
        x0, y0 = np.meshgrid(lo, lo, indexing="ij")
        frac = _triangle_fraction(x0, y0, 1.0 / g.m, cut)
        total += can.grid_weight * float((frac * g.masses).sum())
    if can.segments is not None:
        s = can.segments.segments
        a0 = s[:, 0] + s[:, 1]
        a1 = s[:, 2] + s[:, 3]
        flat = np.abs(a1 - a0) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(flat, np.where(a0 < cut, 1.0, 0.0), (cut - a0) / (a1 - a0))
        frac = np.where(flat, t, np.where(a1 > a0, np.clip(t, 0, 1), 1 - np.clip(t, 0, 1)))
        total += can.segment_weight * float((frac * s[:, 4]).sum())
    return total


def _triangle_fraction(x0, y0, h, b):
    """Area fraction of the square ``[x0, x0+h] x [y0, y0+h]`` with ``x + y < b``."""
    u = (b - x0 - y0) / h  # in cell units, line u' + v' = u
    u = np.clip(u, 0.0, 2.0)
    return np.where(u <= 1, u * u / 2, 1 - (2 - u) ** 2 / 2)


def support_diagnostics_21(mu: Permuton, resolution: int = 64, eps: float = 1e-6) -> SupportDiagnostics:
    """Interior evidence, lower-left frontier line fit and the mass below that line."""
    can = canonical(mu)
    interior = False
    if can.grid is not None:
        g = can.grid
        if g.m < resolution and resolution % g.m == 0:
            g = g.refine(resolution)
        pos = g.masses > 0
        interior = bool(np.any(pos[:-1, :-1] & pos[1:, :-1] & pos[:-1, 1:] & pos[1:, 1:])) if g.m > 1 else bool(pos.all())
    pts = support_points(mu, resolution)
    low = pts[np.atleast_1d(mu.cdf(pts[:, 0], pts[:, 1])) <= eps]
    if len(low) == 0:
        return SupportDiagnostics(interior, None, None, 0.0, 0)
    s = low.sum(axis=1)
    b = float(s.mean())
    resid = float(np.abs(s - b).max())
    return SupportDiagnostics(interior, b, resid, _mass_below_line(mu, b), len(low))


# ---------------------------------------------------------------- reflection identity

@dataclass
class ReflectIdentity:
    lhs: float
    rhs: float
    gap: float
    t21: float
    t21_compressed: float


def compress_to_d11(nu: GridPermuton) -> GridPermuton:
    """Copy of ``nu`` squeezed into the lower-left quarter (density ``4 g(2x, 2y)``)."""
    m = nu.m
    d = np.zeros((2 * m, 2 * m))
    d[:m, :m] = 4 * nu.density
    return GridPermuton(d)


def reflect_identity_check(nu: GridPermuton, ell: float) -> ReflectIdentity:
    """Compare the divergence drop from compressing ``nu`` with its closed form."""
    if not 0 <= ell < 1:
        raise PermutonError("ell must lie in [0, 1)")
    if not isinstance(nu, GridPermuton):
        nu = canonical(nu).grid
        if nu is None:
            raise PermutonError("reflect_identity_check needs a grid measure")
    base = mu_ell(ell)
    tilde = compress_to_d11(nu)
    lhs = kl_divergence(nu, base) - kl_divergence(tilde, base)
    off = nu.box_mass(Rect(0, 0.5, 0.5, 1)) + nu.box_mass(Rect(0.5, 1, 0, 0.5))
    rhs = off * (math.log1p(ell) - math.log1p(-ell)) - math.log(4)
    return ReflectIdentity(lhs, rhs, abs(lhs - rhs), t21_exact(nu), t21_exact(tilde))


# ---------------------------------------------------------------- separation test

@dataclass
class DmatReport:
    band_ok: bool
    separated: bool
    band_mass: float
    band_bound: float
    d11: float
    d22: float
    offdiag: float
    reflected: bool


def quarter_masses(nu: Permuton) -> tuple[float, float, float]:
    d11 = float(nu.box_mass(D11))
    d22 = float(nu.box_mass(D22))
    return d11, d22, max(0.0, 1.0 - d11 - d22)


def dmat_check(nu: Permuton, m_out: int = 64) -> DmatReport:
    """Band bound and separation certificate for the projection of ``nu``.

    The heavier diagonal quarter is taken as the lower-left one (``nu`` is
    reflected first otherwise).  The band bound allows ``4 / m_out`` slack for
    the discretised projection.
    """
    d11, d22, off = quarter_masses(nu)
    reflected = d22 > d11
    if reflected:
        nu = nu.reflect()
        d11, d22 = d22, d11
    gamma = project_uniform(nu, m_out)
    c = d11
    band = float(gamma.box_mass(Rect(0, c, c, 1)) + gamma.box_mass(Rect(c, 1, 0, c)))
    bound = 4 * off
    return DmatReport(
        band_ok=band <= bound + 4.0 / m_out,
        separated=(d11 - d22) > 8 * off,
        band_mass=band,
        band_bound=bound,
        d11=d11,
        d22=d22,
        offdiag=off,
        reflected=reflected,
    )


def phase_bounds(ell: float, delta: float) -> tuple[float, float]:
    """Upper bounds on off-diagonal mass and on the lighter diagonal quarter."""
    off = math.log(4) / (math.log1p(ell) - math.log1p(-ell)) if 0 < ell < 1 else (math.inf if ell == 0 else 0.0)
    return off, math.sqrt((1 - delta) / 2)


# ---------------------------------------------------------------- phase scan

@dataclass
class PhaseScanRow:
    ell: float
    delta: float
    clusters: int
    G: float
    separated: bool
    d11: float
    d22: float
    offdiag: float
    attainable: bool = True
    theta: float = float("nan")
    m: int = 0
    bounds_ok: bool = True
    all_clusters: int = 0
    representatives: list = field(default_factory=list)

    CSV_COLUMNS = ("ell", "delta", "clusters", "G", "separated", "d11", "d22", "offdiag")

    def csv_row(self) -> list:
        return [self.ell, self.delta, self.clusters, self.G, int(self.separated), self.d11, self.d22, self.offdiag]

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "delta": self.delta,
            "clusters": self.clusters,
            "G": self.G,
            "separated": self.separated,
            "d11": self.d11,
            "d22": self.d22,
            "offdiag": self.offdiag,
            "attainable": self.attainable,
            "theta": self.theta,
            "m": self.m,
            "bounds_ok": self.bounds_ok,
            "all_clusters": self.all_clusters,
            "representatives": self.representatives,
        }


def grid_t21_ceiling(m: int) -> float:
    """Largest inversion density of any measure that is constant on the cells of an ``m`` grid."""
    return 1.0 - 1.0 / (2 * m)


def phase_inits(skeleton, strength: float = 0.9) -> list:
    """Symmetric start plus a lower-left-heavy start and its reflection."""
    from .variational import DensityField, atom_midpoints

    x, y = atom_midpoints(skeleton)
    lo = (x < 0.5) & (y < 0.5)
    hi = (x >= 0.5) & (y >= 0.5)
    anti = np.exp(-8 * (x + y - np.where(lo, 0.5, np.where(hi, 1.5, 1.0))) ** 2)
    asym = DensityField(skeleton, (1 + strength * (lo.astype(float) - hi.astype(float))) * anti)
    return [DensityField.uniform(skeleton), asym, asym.reflect()]


def mallows_tilt_for(delta: float, m: int, theta_cap: float = 1e4) -> float:
    """Parameter of the ``m``-cell Mallows grid whose inversion density is ``delta``.

    Falls back to the nearest end of ``[-theta_cap, theta_cap]`` when ``delta``
    is beyond what such a grid reaches.
    """
    from .patterns import t21_exact

    def gap(a):
        return t21_exact(mallows_grid(a, m)) - delta

    hi = 1.0 if delta >= 0.5 else -1.0
    while abs(hi) < theta_cap and gap(hi) * np.sign(hi) < 0:
        hi *= 2
    if gap(hi) * np.sign(hi) < 0:
        return float(hi)
    return float(brentq(gap, 0.0, hi) if hi > 0 else brentq(gap, hi, 0.0))


def mallows_seeds(skeleton, delta: float) -> list:
    """Starting fields for a conditioned scan over a grid skeleton of even size.

    A Mallows grid with inversion density ``delta`` (symmetric under the
    swap of the two diagonal quarters), and a half-resolution one squeezed
    into the lower-left quarter together with its reflection.
    """
    from .variational import DensityField

    m = skeleton.m
    w = skeleton.weights.reshape(m, m)

    def field_of(mass):
        g = np.divide(mass, w, out=np.zeros_like(mass), where=w > 0)
        return DensityField(skeleton, g.ravel())

    sym = mallows_grid(mallows_tilt_for(delta, m), m).masses
    seeds = [field_of(sym)]
    if m % 2 == 0 and m >= 4:
        half = mallows_grid(mallows_tilt_for(delta, m // 2), m // 2).masses
        squeezed = np.zeros((m, m))
        squeezed[: m // 2, : m // 2] = half
        asym = field_of(squeezed)
        seeds += [asym, asym.reflect()]
    return seeds


def compressed_field(field):
    """Field whose measure is the lower-left squeeze of ``field``'s measure (grid skeletons, even ``m``)."""
    from .variational import DensityField

    sk = field.skeleton
    if sk.kind != "grid" or sk.m % 2:
        raise PermutonError("compression needs a grid skeleton of even resolution")
    m = sk.m
    mass = field.masses.reshape(m, m)
    small = mass.reshape(m // 2, 2, m // 2, 2).sum(axis=(1, 3))
    out = np.zeros((m, m))
    out[: m // 2, : m // 2] = small
    w = sk.weights.reshape(m, m)
    g = np.divide(out, w, out=np.zeros_like(out), where=w > 0)
    return DensityField(sk, g.ravel())


def phase_scan_config():
    """Solver settings used by :func:`phase_scan` unless overridden.

    Log-space mixing at half step with Newton finishing, a tilt cap of 512
    since conditioned optimizers near ``delta = 1`` need tilts past 100, and
    an iteration cap so that branches the iteration cannot hold fail fast.
    """
    from .variational import SolveConfig

    return SolveConfig(tol=1e-9, delta_tol=1e-7, damping=0.5, mix="geometric", theta_max=512, max_iter=200)


def phase_scan(
    ells: Sequence[float],
    deltas: Sequence[float],
    cfg=None,
    *,
    m: int = 32,
    refine: bool = True,
    m_max: int = 512,
) -> list[PhaseScanRow]:
    """Multi-start conditioned solves over a grid of ``(ell, delta)``.

    When ``delta`` is above what an ``m`` grid can represent and ``refine`` is
    set, the resolution is doubled (up to ``m_max``) for that row.  Rows that
    stay out of reach are marked ``attainable=False``.
    """
    from dataclasses import replace

    from .variational import SolverError, estimate_tilt, make_skeleton, multi_start_optimize

    cfg = phase_scan_config() if cfg is None else cfg
    rows = []
    for ell in ells:
        base = mu_ell(ell)
        for delta in deltas:
            mm = m
            if refine:
                while grid_t21_ceiling(mm) - delta < 1.0 / mm and mm < m_max:
                    mm *= 2
            if mm != m:
                log.info("ell=%g delta=%g: resolution raised to %d", ell, delta, mm)
            run_cfg = replace(cfg, m=mm)
            sk = make_skeleton(base, mm)
            try:
                inits = mallows_seeds(sk, delta)
                starts = [abs(t) if math.isfinite(t) and t != 0 else None for t in (estimate_tilt((2, 1), f) for f in inits)]
                clusters = multi_start_optimize((2, 1), base, inits, run_cfg, delta=delta, theta_starts=starts)
            except SolverError as exc:
                log.warning("ell=%g delta=%g unattainable: %s", ell, delta, exc)
                nan = float("nan")
                rows.append(PhaseScanRow(ell, delta, 0, nan, False, nan, nan, nan, attainable=False, m=mm))
                continue
            optimal = [c for c in clusters if c.optimal]
            best = optimal[0]
            off_bound, d22_bound = phase_bounds(ell, delta)
            reps = []
            bounds_ok = True
            for c in optimal:
                b = c.blocks
                off = b["d12"] + b["d21"]
                light = min(b["d11"], b["d22"])
                ok = off <= off_bound + 1e-9 and light <= d22_bound + 1e-9
                bounds_ok = bounds_ok and ok
                reps.append({"d11": b["d11"], "d22": b["d22"], "offdiag": off, "G": c.objective, "theta": c.theta, "t21": c.t_sigma, "separated": bool(c.separated), "bounds_ok": ok})
            b = best.blocks
            rows.append(
                PhaseScanRow(
                    ell=ell,
                    delta=delta,
                    clusters=len(optimal),
                    G=best.objective,
                    separated=all(bool(c.separated) for c in optimal) if len(optimal) > 1 else False,
                    d11=b["d11"],
                    d22=b["d22"],
                    offdiag=b["d12"] + b["d21"],
                    theta=best.theta,
                    m=mm,
                    bounds_ok=bounds_ok,
                    all_clusters=len(clusters),
                    representatives=reps,
                )
            )
    return rows


__all__ = [
    "curie_weiss_root",
    "xi",
    "xi11",
    "xi22",
    "xi_mixture",
    "xi_free_energy",
    "xi_gibbs_optimizers",
    "XiConditional",
    "xi_conditional_optimizers",
    "mallows_density",
    "mallows_grid",
    "mallows_el_residual",
    "mu_ell",
    "rect_permuton",
    "inversion_degrees",
    "sstar_check",
    "substitution_square",
    "sstar_inflate",
    "sstar_constant",
    "support_points",
    "CcReport",
    "cc_test_21",
    "SupportDiagnostics",
    "support_diagnostics_21",
    "ReflectIdentity",
    "compress_to_d11",
    "reflect_identity_check",
    "DmatReport",
    "quarter_masses",
    "dmat_check",
    "phase_bounds",
    "PhaseScanRow",
    "grid_t21_ceiling",
    "phase_inits",
    "compressed_field",
    "phase_scan",
    "phase_scan_config",
    "mallows_seeds",
    "mallows_tilt_for",
]
