"""Random permutations: mu-random sampling, Gibbs MCMC and exact enumeration."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .measures import Permuton, canonical
from .patterns import (
    McEstimate,
    induced_permutations,
    parse_pattern,
    t_sigma_perms,
)

log = logging.getLogger(__name__)

MAX_TIE_RETRIES = 16
MAX_EXACT_N = 8


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GibbsParams:
    sigma: tuple[int, ...]
    mu: Permuton
    theta: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "sigma", parse_pattern(self.sigma))
        if self.n < 1:
            raise ValueError("n must be positive")
        if len(self.sigma) > self.n:
            raise ValueError("pattern longer than the permutation")


@dataclass(frozen=True)
class ChainConfig:
    """Metropolis chain settings.

    ``burn_in`` and ``thin`` default to ``100 n`` proposals and ``n``
    proposals when left as ``None``.
    """

    steps: int
    burn_in: int | None = None
    thin: int | None = None
    seed: int | None = None
    proposal: str = "point-resample"
    chains: int = 1

    def resolved(self, n: int) -> "ChainConfig":
        burn = 100 * n if self.burn_in is None else self.burn_in
        thin = n if self.thin is None else self.thin
        if not (self.steps >= burn >= 0):
            raise ValueError("need steps >= burn_in >= 0")
        if thin < 1:
            raise ValueError("thinning must be at least 1")
        if self.proposal not in ("point-resample", "adjacent-transposition"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if self.chains < 1:
            raise ValueError("need at least one chain")
        return ChainConfig(self.steps, burn, thin, self.seed, self.proposal, self.chains)


@dataclass
class GibbsRun:
    samples: np.ndarray  # (num_samples, n), one-line notation, chains concatenated
    acceptance_rate: float
    t_values: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class PmfTable:
    perms: np.ndarray  # (n!, n)
    probs: np.ndarray
    log_partition: float  # Z_n(sigma, theta) = log n! + F_n

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in p): float(q) for p, q in zip(self.perms, self.probs)}

    def prob(self, perm: Sequence[int]) -> float:
        return self.as_dict()[tuple(perm)]

    @property
    def free_energy(self) -> float:
        n = self.perms.shape[1]
        return self.log_partition - math.lgamma(n + 1)


def _has_ties(pts: np.ndarray) -> bool:
    return len(np.unique(pts[:, 0])) < len(pts) or len(np.unique(pts[:, 1])) < len(pts)


def sample_points(mu: Permuton, n: int, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """``n`` i.i.d. points of ``mu`` as an ``(n, 2)`` array, free of coordinate ties."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed) if rng is None else rng
    for _ in range(MAX_TIE_RETRIES):
        pts = mu.sample(n, rng)
        if not _has_ties(pts):
            return pts
    raise SamplingError(f"coordinate ties persisted after {MAX_TIE_RETRIES} redraws")


def sample_mu_random_perm(mu: Permuton, n: int, seed=None, rng=None) -> tuple[int, ...]:
    pts = sample_points(mu, n, seed=seed, rng=rng)
    return tuple(int(v) for v in induced_permutations(pts[None])[0])


def sample_mu_random_perms(mu: Permuton, n: int, count: int, seed=None, batch: int = 10_000) -> np.ndarray:
    """``count`` independent mu-random permutations, shape ``(count, n)``."""
    rng = np.random.default_rng(seed)
    out = np.empty((count, n), dtype=np.int64)
    done = 0
    while done < count:
        b = min(batch, count - done)
        pts = mu.sample(b * n, rng).reshape(b, n, 2)
        out[done : done + b] = induced_permutations(pts)
        done += b
    return out


def _is_lebesgue(mu: Permuton) -> bool:
    can = canonical(mu)
    return can.segments is None and bool(np.allclose(can.grid.density, 1.0, atol=1e-12))


def _count_dominance(xs, ys, px, py):
    """Inversions formed by point (px, py) with each row of (xs, ys)."""
    return (((xs - px[:, None]) * (ys - py[:, None])) < 0).sum(axis=1)


def gibbs_mcmc(p: GibbsParams, c: ChainConfig) -> GibbsRun:
    """Metropolis sampler for the Gibbs permutation model.

    ``point-resample`` moves one of the ``n`` points to a fresh draw from the
    base measure and accepts with ``min(1, exp(n theta dt))``; it targets the
    Gibbs law on point configurations for any base.  ``adjacent-transposition``
    walks on permutations directly and needs the uniform base.
    Independent chains run in lockstep, vectorised over ``c.chains``.
    """
    c = c.resolved(p.n)
    n, theta, sigma = p.n, p.theta, p.sigma
    rng = np.random.default_rng(c.seed)
    C = c.chains
    rows = np.arange(C)
    fast = sigma in ((2, 1), (1, 2))
    sign = 1.0 if sigma == (2, 1) else -1.0
    scale = 2.0 / n**2  # t21 = 2 inv / n^2

    if c.proposal == "adjacent-transposition":
        if not _is_lebesgue(p.mu):
            raise SamplingError("adjacent transpositions require the uniform base measure")
        if n < 2:
            raise SamplingError("adjacent transpositions need n >= 2")
        perms = np.stack([rng.permutation(n) + 1 for _ in range(C)])
    else:
        pts = p.mu.sample(C * n, rng).reshape(C, n, 2)
        xs, ys = pts[..., 0].copy(), pts[..., 1].copy()
        perms = induced_permutations(pts)
    t_cur = t_sigma_perms(sigma, perms)

    samples, tvals = [], []
    accepted = 0
    proposed = 0
    for step in range(1, c.steps + 1):
        if c.proposal == "adjacent-transposition":
            i = rng.integers(0, n - 1, size=C)
            a, b = perms[rows, i], perms[rows, i + 1]
            new = perms.copy()
            new[rows, i], new[rows, i + 1] = b, a
            if fast:
                t_new = t_cur + sign * scale * np.where(a < b, 1.0, -1.0)
            else:
                t_new = t_sigma_perms(sigma, new)
        else:
            i = rng.integers(0, n, size=C)
            q = p.mu.sample(C, rng)
            ox, oy = xs[rows, i], ys[rows, i]
            if fast:
                old_cnt = _count_dominance(xs, ys, ox, oy)
                nx, ny = xs.copy(), ys.copy()
                nx[rows, i], ny[rows, i] = q[:, 0], q[:, 1]
                new_cnt = _count_dominance(nx, ny, q[:, 0], q[:, 1])
                t_new = t_cur + sign * scale * (new_cnt - old_cnt)
            else:
                nx, ny = xs.copy(), ys.copy()
                nx[rows, i], ny[rows, i] = q[:, 0], q[:, 1]
                new = induced_permutations(np.stack([nx, ny], axis=-1))
                t_new = t_sigma_perms(sigma, new)
        log_u = np.log(rng.random(C))
        accept = log_u < n * theta * (t_new - t_cur)
        proposed += C
        accepted += int(accept.sum())
        if c.proposal == "adjacent-transposition":
            perms[accept] = new[accept]
        else:
            xs[accept], ys[accept] = nx[accept], ny[accept]
        t_cur = np.where(accept, t_new, t_cur)
        if step > c.burn_in and (step - c.burn_in) % c.thin == 0:
            if c.proposal == "adjacent-transposition":
                samples.append(perms.copy())
            else:
                samples.append(induced_permutations(np.stack([xs, ys], axis=-1)))
            tvals.append(t_cur.copy())
    if samples:
        # chain-major order: all samples of chain 0, then chain 1, ...
        samp = np.stack(samples, axis=1).reshape(-1, n)
        tv = np.stack(tvals, axis=1).ravel()
    else:
        samp = np.empty((0, n), dtype=np.int64)
        tv = np.empty(0)
    rate = accepted / proposed if proposed else float("nan")
    log.debug("gibbs_mcmc: %d samples, acceptance %.3f", len(samp), rate)
    return GibbsRun(samp.astype(np.int64), rate, tv)


def exact_gibbs_pmf(sigma, theta: float, n: int) -> PmfTable:
    """Exact Gibbs law on ``S_n`` with uniform base (n <= 8) by enumeration."""
    sigma = parse_pattern(sigma)
    if n > MAX_EXACT_N:
        raise SamplingError(f"exact enumeration is limited to n <= {MAX_EXACT_N}")
    if n < 1:
        raise ValueError("n must be positive")
    perms = np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.int64)
    logw = n * theta * t_sigma_perms(sigma, perms)
    log_z = float(logsumexp(logw))
    return PmfTable(perms, np.exp(logw - log_z), log_z)


def empirical_pmf(samples: np.ndarray, n: int) -> dict[tuple[int, ...], float]:
    keys, counts = np.unique(np.asarray(samples), axis=0, return_counts=True)
    total = counts.sum()
    return {tuple(int(v) for v in k): c / total for k, c in zip(keys, counts)}


def tv_pmf(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def estimate_Fn(p: GibbsParams, N: int, seed=None, batch: int = 5_000) -> McEstimate:
    """Monte Carlo estimate of ``F_n(sigma, mu, theta) / n``.

    Log-mean-exp of ``n theta t_sigma`` over ``N`` i.i.d. mu-random
    permutations, with a jackknife standard error.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if p.theta == 0:
        return McEstimate(0.0, 0.0, N, seed)
    rng = np.random.default_rng(seed)
    energies = np.empty(N)
    done = 0
    while done < N:
        b = min(batch, N - done)
        pts = p.mu.sample(b * p.n, rng).reshape(b, p.n, 2)
        energies[done : done + b] = p.n * p.theta * t_sigma_perms(p.sigma, induced_permutations(pts))
        done += b
    shift = energies.max()
    w = np.exp(energies - shift)
    s = w.sum()
    value = (shift + math.log(s / N)) / p.n
    if N > 1:
        loo = (shift + np.log((s - w) / (N - 1))) / p.n
        se = math.sqrt((N - 1) / N * np.sum((loo - loo.mean()) ** 2))
    else:
        se = 0.0
    return McEstimate(value, se, N, seed)


def chi_square_uniform_pvalue(samples: np.ndarray, n: int) -> float:
    """Chi-square goodness-of-fit p-value of samples against uniform on ``S_n``."""
    from scipy.stats import chisquare

    pmf = empirical_pmf(samples, n)
    counts = np.array([pmf.get(tuple(pp), 0.0) for pp in itertools.permutations(range(1, n + 1))])
    counts = counts * len(samples)
    return float(chisquare(counts).pvalue)
