"""Tilted free-energy problem: Euler-Lagrange fixed points, conditioning and multi-start.

The density ``g = d nu / d mu`` is discretised on a fixed skeleton of the
base measure (grid cells, or equal bins along each segment).  On that
skeleton the inversion weight of a cell against ``nu_g`` is evaluated
exactly, so the iteration map below is the exact Euler-Lagrange operator of
the discretised problem and ``dF/dtheta = t_sigma`` holds without bias.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, xlogy

from .measures import GridPermuton, Permuton, PermutonError, SegmentPermuton, canonical, common_resolution
from .patterns import PatternError, grid_dominance, parse_pattern, segment_inversion_matrix

log = logging.getLogger(__name__)

DEFAULT_M = 64
DEFAULT_BINS = 64
THETA_BRACKET_MAX = 64.0
MIN_DAMPING = 1.0 / 64


class SolverError(RuntimeError):
    pass


def theta_c(k: int) -> float:
    """Certified contraction threshold ``min(1, 4k^2 / (exp(4k^2) - 1))``."""
    if k < 2:
        raise ValueError("k must be at least 2")
    x = 4.0 * k * k
    return min(1.0, x / math.expm1(x))


# ---------------------------------------------------------------- skeletons

class Skeleton:
    """Discretisation of a base permuton into atoms with fixed base masses.

    Attributes
    ----------
    kind : {"grid", "segments"}
    weights : ndarray
        Base mass of every atom, flattened.
    """

    kind: str
    weights: np.ndarray

    def dominance(self, nu_mass: np.ndarray) -> np.ndarray:
        """Atom-averaged inversion weight against the measure with atom masses ``nu_mass``."""
        raise NotImplementedError

    def measure(self, g: np.ndarray) -> Permuton:
        raise NotImplementedError

    def reflect_index(self) -> np.ndarray:
        """Permutation of atoms induced by the point reflection, or None if not closed."""
        raise NotImplementedError


class GridSkeleton(Skeleton):
    kind = "grid"

    def __init__(self, base: GridPermuton, m: int):
        m = common_resolution(base.m, m)
        self.base = base.refine(m) if m != base.m else base
        self.m = m
        self.weights = self.base.masses.ravel().copy()

    def dominance(self, nu_mass):
        return grid_dominance(nu_mass.reshape(self.m, self.m)).ravel()

    def measure(self, g):
        dens = (g.reshape(self.m, self.m) * self.base.density)
        return GridPermuton(dens, normalize=True)

    def reflect_index(self):
        return np.arange(self.m * self.m).reshape(self.m, self.m)[::-1, ::-1].ravel()

    def describe(self):
        return f"grid m={self.m}"


_KERNEL_CACHE: dict[bytes, np.ndarray] = {}


class SegmentSkeleton(Skeleton):
    kind = "segments"

    def __init__(self, base: SegmentPermuton, bins: int):
        self.base = base
        self.bins = bins
        self.split = base.split(bins)
        segs = self.split.segments
        self.weights = segs[:, 4].copy()
        key = np.ascontiguousarray(segs[:, :4]).tobytes()
        kern = _KERNEL_CACHE.get(key)
        if kern is None:
            kern = segment_inversion_matrix(segs)
            if len(_KERNEL_CACHE) > 32:
                _KERNEL_CACHE.clear()
            _KERNEL_CACHE[key] = kern
        self.kernel = kern

    def dominance(self, nu_mass):
        return self.kernel @ nu_mass

    def measure(self, g):
        segs = self.split.segments
        w = g * self.weights
        w = w / w.sum()
        return SegmentPermuton([((a, b), (c, d), wi) for (a, b, c, d, _), wi in zip(segs, w) if wi > 0])

    def reflect_index(self):
        s = self.split.segments[:, :4]
        refl = 1.0 - s[:, [2, 3, 0, 1]]
        out = np.empty(len(s), dtype=int)
        for i, r in enumerate(refl):
            hit = np.flatnonzero(np.all(np.abs(s - r) < 1e-12, axis=1))
            if len(hit) != 1:
                return None
            out[i] = hit[0]
        return out

    def describe(self):
        return f"segments bins={self.bins}"


def make_skeleton(mu: Permuton, m: int = DEFAULT_M, bins: int = DEFAULT_BINS) -> Skeleton:
    can = canonical(mu)
    if can.grid is not None and can.segments is not None:
        raise PermutonError("variational solves need a purely grid or purely segment base")
    if can.grid is not None:
        return GridSkeleton(can.grid, m)
    return SegmentSkeleton(can.segments, bins)


# ---------------------------------------------------------------- fields

@dataclass
class DensityField:
    """Density ``g`` of a measure with respect to the base, one value per skeleton atom."""

    skeleton: Skeleton
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.shape != self.skeleton.weights.shape:
            raise ValueError("field does not match its skeleton")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        total = float(v @ self.skeleton.weights)
        if total <= 0:
            raise ValueError("density field has zero mass")
        self.values = v / total

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.skeleton.weights

    def measure(self) -> Permuton:
        return self.skeleton.measure(self.values)

    def l1(self, other: "DensityField") -> float:
        return float(np.abs(self.values - other.values) @ self.skeleton.weights)

    def reflect(self) -> "DensityField":
        idx = self.skeleton.reflect_index()
        if idx is None:
            raise PermutonError("skeleton is not closed under reflection")
        return DensityField(self.skeleton, self.values[idx])

    def kl(self) -> float:
        return float((xlogy(self.values, self.values) * self.skeleton.weights).sum())

    def integral(self) -> float:
        return float(self.values @ self.skeleton.weights)

    @classmethod
    def uniform(cls, skeleton: Skeleton) -> "DensityField":
        return cls(skeleton, np.ones_like(skeleton.weights))

    @classmethod
    def random(cls, skeleton: Skeleton, seed=None, spread: float = 1.0) -> "DensityField":
        rng = np.random.default_rng(seed)
        return cls(skeleton, np.exp(spread * rng.standard_normal(skeleton.weights.shape)))

    @classmethod
    def from_function(cls, skeleton: Skeleton, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "DensityField":
        """Field from ``fn(x, y)`` evaluated at atom midpoints."""
        return cls(skeleton, fn(*atom_midpoints(skeleton)))


def atom_midpoints(skeleton: Skeleton) -> tuple[np.ndarray, np.ndarray]:
    if skeleton.kind == "grid":
        c = (np.arange(skeleton.m) + 0.5) / skeleton.m
        x, y = np.meshgrid(c, c, indexing="ij")
        return x.ravel(), y.ravel()
    s = skeleton.split.segments
    return 0.5 * (s[:, 0] + s[:, 2]), 0.5 * (s[:, 1] + s[:, 3])


def block_masses(field: DensityField) -> dict[str, float]:
    """Masses of the four half-square blocks (atoms assigned by midpoint)."""
    x, y = atom_midpoints(field.skeleton)
    mass = field.masses
    lo_x, lo_y = x < 0.5, y < 0.5
    return {
        "d11": float(mass[lo_x & lo_y].sum()),
        "d12": float(mass[lo_x & ~lo_y].sum()),
        "d21": float(mass[~lo_x & lo_y].sum()),
        "d22": float(mass[~lo_x & ~lo_y].sum()),
    }


# ---------------------------------------------------------------- config / reports

@dataclass(frozen=True)
class SolveConfig:
    """Fixed-point solver settings.

    ``init`` is ``"uniform"``, ``("random", seed)`` or a :class:`DensityField`.
    ``mix="linear"`` averages ``g`` with ``T(g)``; ``mix="geometric"``
    averages their logarithms, which is far more stable at large tilts.
    ``accel="newton"`` hands over to Newton's method once the damped
    iteration converges slowly.
    """

    tol: float = 1e-10
    max_iter: int = 100_000
    damping: float = 1.0
    init: object = "uniform"
    m: int = DEFAULT_M
    bins: int = DEFAULT_BINS
    accel: str = "newton"
    theta_max: float = THETA_BRACKET_MAX
    delta_tol: float = 1e-8
    mix: str = "linear"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.accel not in ("none", "newton"):
            raise ValueError(f"unknown acceleration {self.accel!r}")
        if self.mix not in ("linear", "geometric"):
            raise ValueError(f"unknown mixing rule {self.mix!r}")


@dataclass
class SolveReport:
    theta: float
    iterations: int
    residual: float
    free_energy: float
    t_sigma: float
    converged: bool
    certified_unique: bool
    damping: float
    skeleton: str = ""

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "iterations": self.iterations,
            "residual": self.residual,
            "free_energy": self.free_energy,
            "t_sigma": self.t_sigma,
            "converged": self.converged,
            "certified_unique": self.certified_unique,
            "damping": self.damping,
            "skeleton": self.skeleton,
        }


def _pattern_sign(sigma) -> int:
    sigma = parse_pattern(sigma)
    if sigma == (2, 1):
        return 1
    if sigma == (1, 2):
        return -1
    raise PatternError(f"the Euler-Lagrange operator is implemented for patterns of size 2, not {sigma}")


def _t_sigma(sign: int, field: DensityField) -> float:
    nu = field.masses
    t21 = float(nu @ field.skeleton.dominance(nu))
    return t21 if sign > 0 else 1.0 - t21


def _objective(sign: int, theta: float, field: DensityField) -> tuple[float, float]:
    t = _t_sigma(sign, field)
    return theta * t - field.kl(), t


def _operator_values(sign: int, theta: float, field: DensityField) -> np.ndarray:
    sk = field.skeleton
    expo = 2.0 * sign * theta * sk.dominance(field.masses)
    expo -= expo.max()
    out = np.exp(expo)
    return out / (out @ sk.weights)


def el_operator(sigma, mu: Permuton | None, theta: float, g: DensityField) -> DensityField:
    """One application of the Euler-Lagrange map ``g -> exp(k theta W_g) / Z``.

    ``mu`` is only used for a consistency check; the skeleton carried by
    ``g`` fixes the base.
    """
    sign = _pattern_sign(sigma)
    if mu is not None and g.skeleton.base is not mu:
        sk_w = make_skeleton(mu, getattr(g.skeleton, "m", DEFAULT_M), getattr(g.skeleton, "bins", DEFAULT_BINS)).weights
        if sk_w.shape != g.skeleton.weights.shape or not np.allclose(sk_w, g.skeleton.weights, atol=1e-13):
            raise PermutonError("density field is not defined over this base permuton")
    return DensityField(g.skeleton, _operator_values(sign, theta, g))


def initial_field(skeleton: Skeleton, init) -> DensityField:
    if isinstance(init, DensityField):
        if init.skeleton is skeleton:
            return init
        if init.skeleton.weights.shape != skeleton.weights.shape:
            raise ValueError("initial field lives on a different skeleton")
        return DensityField(skeleton, init.values)
    if init == "uniform" or init is None:
        return DensityField.uniform(skeleton)
    if isinstance(init, tuple) and init[0] == "random":
        return DensityField.random(skeleton, init[1])
    raise ValueError(f"unrecognised initialisation {init!r}")


def _log_parts(sign, theta, skeleton: Skeleton, u):
    """Masses ``nu`` of ``exp(u)``, ``log T(g)`` and the masses of ``T(g)``."""
    lw = np.log(skeleton.weights)
    nu = np.exp(u + lw - logsumexp(u + lw))
    e = 2.0 * sign * theta * skeleton.dominance(nu)
    lt = e - logsumexp(e + lw)
    return nu, lt, np.exp(lt + lw)


def _newton_polish(sign, theta, field: DensityField, cfg: SolveConfig, max_steps: int = 40) -> DensityField | None:
    """Newton's method on ``log T(g) - log g`` with an exact Jacobian.

    Each linear system gets a few restarted GMRES cycles with the analytic
    Jacobian-vector product (inexact Newton); steps are backtracked on a
    mass-weighted residual norm.
    Returns the improved field, or None when Newton did not lower the residual.
    """
    from scipy.sparse.linalg import LinearOperator, gmres

    sk = field.skeleton
    if np.any(sk.weights <= 0):
        return None
    u = np.log(np.maximum(field.values, np.finfo(float).tiny))
    nu, lt, q = _log_parts(sign, theta, sk, u)
    start = float(np.abs(q - nu).sum())
    best, best_res = None, start
    history: list[float] = []
    size = len(u)
    for _ in range(max_steps):
        r = lt - u
        scale = np.sqrt(nu + q)

        def matvec(v, nu=nu, q=q):
            de = 2.0 * sign * theta * sk.dominance(nu * (v - nu @ v))
            return de - q @ de - v

        jac = LinearOperator((size, size), matvec=matvec, dtype=float)
        du, _info = gmres(jac, -r, rtol=1e-8, restart=30, maxiter=3)
        if not np.all(np.isfinite(du)):
            break
        norm0 = float(np.linalg.norm(r * scale))
        step = 1.0
        while step > 1e-4:
            un = u + step * du
            nu_n, lt_n, q_n = _log_parts(sign, theta, sk, un)
            if np.linalg.norm((lt_n - un) * np.sqrt(nu_n + q_n)) < norm0 * (1 - 1e-4 * step):
                break
            step /= 2
        else:
            break
        u, nu, lt, q = un, nu_n, lt_n, q_n
        res = float(np.abs(q - nu).sum())
        history.append(res)
        if res < best_res:
            best, best_res = u.copy(), res
        if res <= cfg.tol * 1e-2:
            break
        if len(history) > 10 and res > 0.95 * history[-11]:
            break  # stagnating
    if best is None:
        return None
    return DensityField(sk, np.exp(best - best.max()))


def solve_on(sigma, skeleton: Skeleton, theta: float, cfg: SolveConfig, init=None) -> tuple[DensityField, SolveReport]:
    """Damped fixed-point iteration on a prepared skeleton."""
    sign = _pattern_sign(sigma)
    k = 2
    g = initial_field(skeleton, cfg.init if init is None else init)
    alpha = cfg.damping
    w = skeleton.weights
    residual = math.inf
    rises = 0
    it = 0
    converged = False
    if theta == 0:
        g = DensityField.uniform(skeleton)
        it, residual, converged = 1, 0.0, True
    newton_tries = 0
    next_newton = 50
    if cfg.accel == "newton" and theta != 0 and isinstance(init, DensityField):
        # a warm start is usually inside Newton's basin already
        polished = _newton_polish(sign, theta, g, cfg)
        # Newton also finds saddles; a local maximiser reached from g
        # cannot have a lower objective than g itself
        if polished is not None and _objective(sign, theta, polished)[0] >= _objective(sign, theta, g)[0] - 1e-12:
            g = polished
    while not converged and it < cfg.max_iter:
        it += 1
        tg = _operator_values(sign, theta, g)
        new_res = float(np.abs(tg - g.values) @ w)
        rate = new_res / residual if residual > 0 and math.isfinite(residual) else 0.0
        if new_res > residual:
            rises += 1
            if rises >= 2 and alpha > MIN_DAMPING:
                alpha = max(alpha / 2, MIN_DAMPING)
                rises = 0
                log.debug("oscillation detected at iteration %d; damping -> %g", it, alpha)
        else:
            rises = 0
        residual = new_res
        if residual <= cfg.tol:
            converged = True
            break
        if cfg.mix == "geometric":
            tiny = np.finfo(float).tiny
            lg = (1 - alpha) * np.log(np.maximum(g.values, tiny)) + alpha * np.log(np.maximum(tg, tiny))
            g = DensityField(skeleton, np.exp(lg - lg.max()))
        else:
            g = DensityField(skeleton, (1 - alpha) * g.values + alpha * tg)
        if cfg.accel == "newton" and it >= next_newton and rate > 0.9 and newton_tries < 8:
            # slow linear convergence: hand over to Newton-Krylov
            newton_tries += 1
            next_newton = it + 50 * 2**newton_tries
            polished = _newton_polish(sign, theta, g, cfg)
            if polished is not None:
                g = polished
                residual = math.inf
    F, t = _objective(sign, theta, g)
    rep = SolveReport(
        theta=float(theta),
        iterations=it,
        residual=float(residual),
        free_energy=float(F),
        t_sigma=float(t),
        converged=converged,
        certified_unique=abs(theta) < theta_c(k),
        damping=alpha,
        skeleton=skeleton.describe(),
    )
    if not converged:
        log.info("solve at theta=%g stopped after %d iterations, residual %.3e", theta, it, residual)
    return g, rep


def solve_el(sigma, mu: Permuton, theta: float, cfg: SolveConfig = SolveConfig()) -> tuple[DensityField, SolveReport]:
    """Solve the Euler-Lagrange fixed point ``g = T_theta(g)`` for the base ``mu``.

    Parameters
    ----------
    sigma : pattern of size 2
    mu : Permuton
        Grid or segment base measure.
    theta : float
    cfg : SolveConfig

    Returns
    -------
    field : DensityField
    report : SolveReport
        ``certified_unique`` is set only when ``|theta| < theta_c(2)``;
        elsewhere the fixed point need not be the global maximiser.
    """
    if isinstance(cfg.init, DensityField):
        skeleton = cfg.init.skeleton
    else:
        skeleton = make_skeleton(mu, cfg.m, cfg.bins)
    return solve_on(sigma, skeleton, theta, cfg)


def free_energy(sigma, mu: Permuton, theta: float, cfg: SolveConfig = SolveConfig(), inits: Sequence | None = None) -> float:
    """``theta t_sigma(nu) - D(nu | mu)`` at the fixed point; maximum over ``inits`` if given."""
    if not inits:
        return solve_el(sigma, mu, theta, cfg)[1].free_energy
    best = -math.inf
    for init in inits:
        best = max(best, solve_el(sigma, mu, theta, replace(cfg, init=init))[1].free_energy)
    return best


@dataclass
class DerivativeCheck:
    centered: float
    t_sigma: float
    gap: float


def free_energy_derivative_check(sigma, mu: Permuton, theta: float, h: float = 1e-3, cfg: SolveConfig = SolveConfig()) -> DerivativeCheck:
    """Compare a centred difference of the free energy with the pattern density at ``theta``."""
    field, rep = solve_el(sigma, mu, theta, cfg)
    sk = field.skeleton
    # warm starts keep the side solves on the same branch
    _, up = solve_on(sigma, sk, theta + h, cfg, init=field)
    _, down = solve_on(sigma, sk, theta - h, cfg, init=field)
    centered = (up.free_energy - down.free_energy) / (2 * h)
    return DerivativeCheck(centered, rep.t_sigma, abs(centered - rep.t_sigma))


def estimate_tilt(sigma, field: DensityField, min_mass: float = 1e-12) -> float:
    """Tilt that best explains ``field`` as a fixed point, by weighted least squares of ``log g`` on ``2 W``."""
    sign = _pattern_sign(sigma)
    mass = field.masses
    keep = mass > min_mass
    if keep.sum() < 2:
        return 0.0
    x = 2.0 * sign * field.skeleton.dominance(mass)[keep]
    y = np.log(field.values[keep])
    wt = mass[keep]
    xm, ym = np.average(x, weights=wt), np.average(y, weights=wt)
    var = np.average((x - xm) ** 2, weights=wt)
    if var <= 0:
        return 0.0
    return float(np.average((x - xm) * (y - ym), weights=wt) / var)


# ---------------------------------------------------------------- conditioning

@dataclass
class ThetaHatResult:
    theta: float
    field: DensityField
    report: SolveReport
    probes: int


class _RootFound(Exception):
    pass


def _theta_hat_on(sigma, skeleton: Skeleton, delta: float, cfg: SolveConfig, init=None, theta_start: float | None = None) -> ThetaHatResult:
    sign = _pattern_sign(sigma)
    start = initial_field(skeleton, cfg.init if init is None else init)
    base_t = _t_sigma(sign, DensityField.uniform(skeleton))
    probes = 0

    def solve(theta, warm, warm_theta=None, depth=0):
        nonlocal probes
        probes += 1
        g, rep = solve_on(sigma, skeleton, theta, cfg, init=warm)
        if rep.converged or warm_theta is None or depth >= 2:
            return g, rep
        # continuation: walk from the warm start's tilt in smaller steps
        log.debug("probe at theta=%g failed; subdividing from %g", theta, warm_theta)
        for k in range(1, 5):
            th = warm_theta + (theta - warm_theta) * k / 4
            g_k, rep_k = solve(th, warm, warm_theta, depth + 1)
            if not rep_k.converged:
                return g, rep
            warm, warm_theta = g_k, th
        return g_k, rep_k

    if abs(delta - base_t) <= cfg.delta_tol:
        g, rep = solve(0.0, start)
        return ThetaHatResult(0.0, g, rep, probes)
    direction = 1.0 if delta > base_t else -1.0
    lo, t_lo = 0.0, base_t
    hi = direction if theta_start is None else direction * max(abs(theta_start), 1e-3)
    g_hi, rep_hi = solve(hi, start)
    if theta_start is not None and (rep_hi.t_sigma - delta) * direction >= 0:
        # started above the target: shrink towards zero along the same branch
        lo = hi / 2
        while abs(lo) > 1e-3:
            g_lo, rep_lo = solve(lo, g_hi, hi)
            if (rep_lo.t_sigma - delta) * direction < 0:
                t_lo = rep_lo.t_sigma
                break
            hi, g_hi, rep_hi = lo, g_lo, rep_lo
            lo /= 2
        else:
            lo = 0.0
    # from a good starting tilt the bracket grows gently so warm starts stay close
    growth = 2.0 if theta_start is None else 1.25
    while (rep_hi.t_sigma - delta) * direction < 0:
        lo, t_lo = hi, rep_hi.t_sigma
        hi *= growth
        if abs(hi) > cfg.theta_max:
            raise SolverError(
                f"delta={delta} not attained for |theta| <= {cfg.theta_max}: "
                f"bracket theta in [0, {lo}] reaches t in [{base_t:.6g}, {t_lo:.6g}]"
            )
        g_hi, rep_hi = solve(hi, g_hi, lo)
        if abs(rep_hi.t_sigma - base_t) <= cfg.delta_tol and g_hi is not start:
            # warm start stuck on the base fixed point (e.g. a symmetric
            # critical probe); the caller's asymmetric start may escape it
            g_alt, rep_alt = solve(hi, start)
            if rep_alt.converged and abs(rep_alt.t_sigma - base_t) > cfg.delta_tol:
                g_hi, rep_hi = g_alt, rep_alt
    if abs(rep_hi.t_sigma - delta) <= cfg.delta_tol:
        return ThetaHatResult(hi, g_hi, rep_hi, probes)

    state = {"warm": (g_hi, hi), "best": (abs(rep_hi.t_sigma - delta), hi, g_hi, rep_hi)}

    def f(theta):
        warm, warm_theta = state["warm"]
        g, rep = solve(theta, warm, warm_theta)
        gap = rep.t_sigma - delta
        if gap * direction >= 0 and rep.converged:
            # stay on the branch reached from the far end of the bracket
            state["warm"] = (g, theta)
        if abs(gap) < state["best"][0]:
            state["best"] = (abs(gap), theta, g, rep)
        if abs(gap) <= cfg.delta_tol * 1e-3:
            raise _RootFound
        return gap

    a, b = (lo, hi) if lo < hi else (hi, lo)
    try:
        brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    except _RootFound:
        pass
    except (RuntimeError, ValueError) as exc:
        log.debug("root search ended early: %s", exc)
    gap, theta, g, rep = state["best"]
    if gap > cfg.delta_tol:
        log.warning("theta_hat: |t - delta| = %.3e exceeds tolerance %.1e", gap, cfg.delta_tol)
    return ThetaHatResult(float(theta), g, rep, probes)


def theta_hat(sigma, mu: Permuton, delta: float, tol: float = 1e-8, cfg: SolveConfig = SolveConfig()) -> float:
    """Tilt whose fixed point has pattern density ``delta``.

    Raises
    ------
    SolverError
        If ``delta`` is not reached within ``|theta| <= cfg.theta_max``.
    """
    return theta_hat_full(sigma, mu, delta, replace(cfg, delta_tol=tol)).theta


def theta_hat_full(sigma, mu: Permuton, delta: float, cfg: SolveConfig = SolveConfig()) -> ThetaHatResult:
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    if isinstance(cfg.init, DensityField):
        skeleton = cfg.init.skeleton
    else:
        skeleton = make_skeleton(mu, cfg.m, cfg.bins)
    return _theta_hat_on(sigma, skeleton, delta, cfg)


@dataclass
class ConditionalResult:
    field: DensityField
    G: float
    theta: float
    report: SolveReport
    el_residual: float


def conditional_optimizer(sigma, mu: Permuton, delta: float, cfg: SolveConfig = SolveConfig()) -> ConditionalResult:
    """Optimizer of the problem conditioned on ``t_sigma = delta`` and its divergence ``G``."""
    res = theta_hat_full(sigma, mu, delta, cfg)
    g = res.field
    return ConditionalResult(g, g.kl(), res.theta, res.report, res.report.residual)


# ---------------------------------------------------------------- multi-start

@dataclass
class Cluster:
    field: DensityField
    objective: float
    t_sigma: float
    theta: float
    members: int
    converged: bool
    blocks: dict = field(default_factory=dict)
    separated: bool | None = None
    optimal: bool = True


def multi_start_optimize(
    sigma,
    mu: Permuton,
    inits: Sequence,
    cfg: SolveConfig = SolveConfig(),
    *,
    theta: float | None = None,
    delta: float | None = None,
    radius: float | None = None,
    optimal_gap: float = 1e-7,
    theta_starts: Sequence | None = None,
) -> list[Cluster]:
    """Solve from every initialisation and merge fixed points that coincide.

    Exactly one of ``theta`` (tilted problem, objective is the free energy,
    larger is better) or ``delta`` (conditioned problem, objective is the
    divergence ``G``, smaller is better) must be given.  In the conditioned
    case ``theta_starts`` optionally gives a first tilt to probe per start.  Clusters are sorted
    best first; ``optimal`` marks those within ``optimal_gap`` of the best.
    """
    from .models import dmat_check

    if (theta is None) == (delta is None):
        raise ValueError("give exactly one of theta or delta")
    if not inits:
        raise ValueError("need at least one initialisation")
    if radius is None:
        radius = 10 * cfg.tol if delta is None else max(10 * cfg.delta_tol, 1e-3)
    first = inits[0]
    skeleton = first.skeleton if isinstance(first, DensityField) else make_skeleton(mu, cfg.m, cfg.bins)
    runs = []
    starts = list(theta_starts) if theta_starts is not None else [None] * len(inits)
    failures: list[str] = []
    for init, th0 in zip(inits, starts):
        if delta is None:
            g, rep = solve_on(sigma, skeleton, theta, cfg, init=init)
            runs.append((g, rep.free_energy, rep.t_sigma, theta, rep.converged))
        else:
            try:
                res = _theta_hat_on(sigma, skeleton, delta, cfg, init=init, theta_start=th0)
            except SolverError as exc:
                log.info("start discarded: %s", exc)
                failures.append(str(exc))
                continue
            off = abs(res.report.t_sigma - delta)
            if not res.report.converged or off > max(100 * cfg.delta_tol, 1e-6):
                msg = f"start from tilt {th0} stalled (converged={res.report.converged}, |t - delta|={off:.2e})"
                log.info("start discarded: %s", msg)
                failures.append(msg)
                continue
            runs.append((res.field, res.field.kl(), res.report.t_sigma, res.theta, res.report.converged))
    if not runs:
        raise SolverError("; ".join(failures))
    clusters: list[Cluster] = []
    for g, obj, t, th, conv in runs:
        for c in clusters:
            if c.field.l1(g) <= radius:
                c.members += 1
                better = obj > c.objective if delta is None else obj < c.objective
                if better:
                    c.field, c.objective, c.t_sigma, c.theta = g, obj, t, th
                c.converged = c.converged and conv
                break
        else:
            clusters.append(Cluster(g, obj, t, th, 1, conv))
    clusters.sort(key=lambda c: -c.objective if delta is None else c.objective)
    best = clusters[0].objective
    is21 = parse_pattern(sigma) == (2, 1)
    for c in clusters:
        c.optimal = abs(c.objective - best) <= optimal_gap * max(1.0, abs(best))
        c.blocks = block_masses(c.field)
        if is21:
            c.separated = dmat_check(c.field.measure()).separated
    return clusters


__all__ = [
    "SolverError",
    "theta_c",
    "Skeleton",
    "GridSkeleton",
    "SegmentSkeleton",
    "make_skeleton",
    "DensityField",
    "atom_midpoints",
    "block_masses",
    "SolveConfig",
    "SolveReport",
    "el_operator",
    "initial_field",
    "solve_on",
    "solve_el",
    "free_energy",
    "DerivativeCheck",
    "free_energy_derivative_check",
    "estimate_tilt",
    "ThetaHatResult",
    "theta_hat",
    "theta_hat_full",
    "ConditionalResult",
    "conditional_optimizer",
    "Cluster",
    "multi_start_optimize",
]
