"""Command-line interface: ``permlab <subcommand> [options]``.

Data goes to ``--output`` (or standard output); diagnostics go to standard
error.  Exit status is 0 on success, 2 on invalid input and 3 when
``--strict`` is set and a numerical solve did not converge.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Any

import numpy as np

from . import __version__
from .measures import PermutonError, marginal_cdfs
from .patterns import (
    PatternError,
    format_permutation,
    parse_pattern,
    parse_permutation,
    t_sigma_measure_exact,
    t_sigma_measure_mc,
    t_sigma_perm,
)
from .specs import resolve, spec_hash

log = logging.getLogger("permlab")

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 2, 3


class UsageError(Exception):
    pass


class NonConvergence(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _default_seed() -> int:
    raw = os.environ.get("PERMLAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"PERMLAB_SEED must be an integer, got {raw!r}") from exc


def _permuton(args):
    params = {"ell": args.ell, "z": args.z, "eta": args.eta}
    return resolve(args.mu, params)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _solve_cfg(args):
    from .variational import SolveConfig

    init = "uniform" if args.init == "uniform" else ("random", args.seed)
    return SolveConfig(
        tol=args.tol,
        max_iter=args.max_iter,
        damping=args.damping,
        init=init,
        m=args.m,
        bins=args.bins,
        theta_max=args.theta_max,
        delta_tol=args.delta_tol,
    )


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command} needs --{', --'.join(m.replace('_', '-') for m in missing)}")


def _clean(value):
    """JSON-safe copy (numpy scalars, tuples, non-finite floats)."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class Output:
    """Collects a result table and renders it as CSV or JSON."""

    def __init__(self, args, spec: dict | None):
        self.args = args
        self.spec = spec
        self.columns: list[str] = []
        self.rows: list[list] = []
        self.extra: dict[str, Any] = {}

    def table(self, columns, rows):
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]

    def render(self) -> str:
        if self.args.format == "json":
            doc = {
                "tool": "permlab",
                "version": __version__,
                "command": self.args.command,
                "spec_hash": spec_hash(self.spec) if self.spec is not None else None,
                "spec": self.spec,
                "columns": self.columns,
                "rows": self.rows,
                "result": self.extra,
            }
            return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ---------------------------------------------------------------- subcommands

def cmd_sample(args, out: Output):
    from .sampling import sample_mu_random_perms

    _require(args, "n")
    mu, spec = _permuton(args)
    out.spec = spec
    perms = sample_mu_random_perms(mu, args.n, args.count, seed=args.seed)
    out.table(["permutation"], [[format_permutation(p)] for p in perms])
    out.extra = {"n": args.n, "count": args.count, "seed": args.seed}


def cmd_tsigma(args, out: Output):
    sigma = parse_pattern(args.sigma)
    if args.perm is not None:
        perm = parse_permutation(args.perm)
        value = t_sigma_perm(sigma, perm)
        out.table(["value"], [[value]])
        out.extra = {"sigma": list(sigma), "perm": list(perm), "value": value}
        return
    mu, spec = _permuton(args)
    out.spec = spec
    if args.mc is not None:
        est = t_sigma_measure_mc(sigma, mu, args.mc, seed=args.seed)
        out.table(["value", "stderr", "N", "seed"], [[est.value, est.stderr, est.n, est.seed]])
        out.extra = {"sigma": list(sigma), "value": est.value, "stderr": est.stderr, "N": est.n, "seed": est.seed}
        return
    value = t_sigma_measure_exact(sigma, mu)
    out.table(["value"], [[value]])
    out.extra = {"sigma": list(sigma), "value": value, "method": "exact"}


def cmd_gibbs(args, out: Output):
    from .sampling import ChainConfig, GibbsParams, gibbs_mcmc

    _require(args, "n", "theta")
    mu, spec = _permuton(args)
    out.spec = spec
    p = GibbsParams(parse_pattern(args.sigma), mu, args.theta, args.n)
    steps = args.steps if args.steps is not None else 100 * args.n + args.n * 1000
    c = ChainConfig(steps, args.burn_in, args.thin, args.seed, args.proposal, args.chains)
    run = gibbs_mcmc(p, c)
    mean_t = float(run.t_values.mean()) if len(run) else float("nan")
    se = float(run.t_values.std(ddof=1) / math.sqrt(len(run))) if len(run) > 1 else float("nan")
    out.table(
        ["samples", "acceptance", "mean_t", "naive_stderr"],
        [[len(run), run.acceptance_rate, mean_t, se]],
    )
    out.extra = {"samples": len(run), "acceptance": run.acceptance_rate, "mean_t": mean_t, "naive_stderr": se}
    if args.dump:
        with open(args.dump, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["permutation"])
            for perm in run.samples:
                w.writerow([format_permutation(perm)])


def cmd_pmf(args, out: Output):
    from .sampling import exact_gibbs_pmf

    _require(args, "n", "theta")
    table = exact_gibbs_pmf(parse_pattern(args.sigma), args.theta, args.n)
    out.table(["permutation", "probability"], [[format_permutation(p), q] for p, q in zip(table.perms, table.probs)])
    out.extra = {"log_partition": table.log_partition, "free_energy_rate": table.free_energy / args.n}


def _check(args, report):
    if not report.converged:
        msg = f"solve at theta={report.theta} did not converge (residual {report.residual:.3e})"
        log.warning(msg)
        if args.strict:
            raise NonConvergence(msg)


def cmd_solve(args, out: Output):
    from .variational import solve_el

    _require(args, "theta")
    mu, spec = _permuton(args)
    out.spec = spec
    field, rep = solve_el(parse_pattern(args.sigma), mu, args.theta, _solve_cfg(args))
    d = rep.to_dict()
    out.table(list(d), [list(d.values())])
    out.extra = d
    if args.field_out:
        _write_field(args.field_out, field, spec)
    _check(args, rep)


def _write_field(path, field, spec):
    from .variational import atom_midpoints

    x, y = atom_midpoints(field.skeleton)
    with open(path, "w", newline="") as fh:
        fh.write(f"# base_spec_hash={spec_hash(spec)} skeleton={field.skeleton.describe()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_mid", "y_mid", "base_mass", "g"])
        for row in zip(x, y, field.skeleton.weights, field.values):
            w.writerow([repr(float(v)) for v in row])


def cmd_free_energy(args, out: Output):
    from .variational import solve_el

    _require(args, "theta")
    mu, spec = _permuton(args)
    out.spec = spec
    rows = []
    cfg = _solve_cfg(args)
    for theta in _floats(args.theta):
        _, rep = solve_el(parse_pattern(args.sigma), mu, theta, cfg)
        rows.append([theta, rep.free_energy, rep.t_sigma, rep.converged])
        _check(args, rep)
    out.table(["theta", "F", "t_sigma", "converged"], rows)
    out.extra = {"values": [dict(zip(out.columns, r)) for r in rows]}


def cmd_condition(args, out: Output):
    from .variational import conditional_optimizer

    _require(args, "delta")
    mu, spec = _permuton(args)
    out.spec = spec
    res = conditional_optimizer(parse_pattern(args.sigma), mu, args.delta, _solve_cfg(args))
    row = [args.delta, res.theta, res.G, res.report.t_sigma, res.report.converged]
    out.table(["delta", "theta_hat", "G", "t_sigma", "converged"], [row])
    out.extra = dict(zip(out.columns, row))
    if args.field_out:
        _write_field(args.field_out, res.field, spec)
    _check(args, res.report)


def _scan_task(payload):
    from .models import phase_scan

    ell, delta, cfg, m, refine = payload
    return phase_scan([ell], [delta], cfg, m=m, refine=refine)[0]


def cmd_phase_scan(args, out: Output):
    from .models import PhaseScanRow, phase_scan

    _require(args, "ells", "deltas")
    cfg = replace(_solve_cfg(args), tol=args.tol)
    tasks = [(ell, d, cfg, args.m, not args.no_refine) for ell in _floats(args.ells) for d in _floats(args.deltas)]
    if args.jobs > 1 and len(tasks) > 1:
        with cf.ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_scan_task, tasks))
    else:
        rows = [phase_scan([t[0]], [t[1]], cfg, m=t[3], refine=t[4])[0] for t in tasks]
    out.table(PhaseScanRow.CSV_COLUMNS, [r.csv_row() for r in rows])
    out.extra = {"rows": [r.to_dict() for r in rows]}


def cmd_cc_check(args, out: Output):
    from .models import cc_test_21

    mu, spec = _permuton(args)
    out.spec = spec
    rep = cc_test_21(mu, tol=args.cc_tol, resolution=args.resolution)
    out.table(["verdict", "constant", "deviation"], [[rep.verdict, rep.constant, rep.deviation]])
    out.extra = rep.to_dict()


def cmd_support_diag(args, out: Output):
    from .models import support_diagnostics_21

    mu, spec = _permuton(args)
    out.spec = spec
    d = support_diagnostics_21(mu, resolution=args.resolution)
    out.table(["interior", "b", "b_residual", "triangle_mass"], [[d.interior, d.b, d.b_residual, d.triangle_mass]])
    out.extra = d.to_dict()


def cmd_mallows(args, out: Output):
    from .models import mallows_el_residual, mallows_grid

    _require(args, "theta")
    theta = float(args.theta)
    grid = mallows_grid(theta, args.m)
    fx, fy = marginal_cdfs(grid)
    knots = np.linspace(0, 1, args.m + 1)
    marg = max(float(np.abs(fx(knots) - knots).max()), float(np.abs(fy(knots) - knots).max()))
    resid = mallows_el_residual(theta, args.m, args.h)
    out.table(["theta", "m", "h", "el_residual", "marginal_deviation"], [[theta, args.m, args.h, resid, marg]])
    out.extra = dict(zip(out.columns, out.rows[0]))
    if args.grid_out:
        np.savetxt(args.grid_out, grid.density, delimiter=",", header=f"mallows theta={theta} m={args.m}")


def cmd_xi(args, out: Output):
    from .models import curie_weiss_root, xi_conditional_optimizers, xi_free_energy

    if args.theta is None and args.delta is None:
        raise UsageError("xi needs --theta and/or --delta")
    rows = []
    extra: dict[str, Any] = {}
    if args.theta is not None:
        theta = float(args.theta)
        m = curie_weiss_root(theta)
        pairs = [[(1 + m) / 2, (1 - m) / 2], [(1 - m) / 2, (1 + m) / 2]] if m > 0 else [[0.5, 0.5]]
        extra.update({"theta": theta, "m_theta": m, "weights": pairs, "F": xi_free_energy(theta)})
        for p in pairs:
            rows.append(["gibbs", theta, m, p[0], p[1], extra["F"]])
    if args.delta is not None:
        res = xi_conditional_optimizers(args.delta)
        p, q = res.weights
        extra.update({"delta": args.delta, "conditional_weights": [[p, q], [q, p]], "G": res.G})
        rows.append(["conditional", args.delta, math.sqrt(2 * args.delta - 1), p, q, res.G])
        rows.append(["conditional", args.delta, math.sqrt(2 * args.delta - 1), q, p, res.G])
    out.table(["kind", "parameter", "magnetisation", "w11", "w22", "value"], rows)
    out.extra = extra


COMMANDS = {
    "sample": (cmd_sample, "mu-random permutations (CSV column: permutation)"),
    "tsigma": (cmd_tsigma, "pattern density, exact or Monte Carlo (columns: value[, stderr, N, seed])"),
    "gibbs": (cmd_gibbs, "Metropolis sampling of the tilted model (columns: samples, acceptance, mean_t, naive_stderr)"),
    "pmf": (cmd_pmf, "exact tilted law on S_n, uniform base (columns: permutation, probability)"),
    "solve": (cmd_solve, "fixed-point solve (columns: solve report fields)"),
    "free-energy": (cmd_free_energy, "free energy at one or more tilts (columns: theta, F, t_sigma, converged)"),
    "condition": (cmd_condition, "tilt matching a target density and the optimiser (columns: delta, theta_hat, G, t_sigma, converged)"),
    "phase-scan": (cmd_phase_scan, "multi-start conditioned scan over the block family (columns: ell, delta, clusters, G, separated, d11, d22, offdiag)"),
    "cc-check": (cmd_cc_check, "constant inversion weight test (columns: verdict, constant, deviation)"),
    "support-diag": (cmd_support_diag, "support diagnostics (columns: interior, b, b_residual, triangle_mass)"),
    "mallows": (cmd_mallows, "closed-form Mallows density checks (columns: theta, m, h, el_residual, marginal_deviation)"),
    "xi": (cmd_xi, "two-block closed forms (columns: kind, parameter, magnetisation, w11, w22, value)"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--mu", default="builtin:lebesgue", help="builtin:<name>, a JSON spec file, or inline JSON")
    g.add_argument("--ell", type=float, help="parameter of builtin:mu_ell")
    g.add_argument("--z", type=float, help="parameter of builtin:rect_z and builtin:sstar")
    g.add_argument("--eta", default=None, help="permutation for builtin:sstar (default 2143)")
    g.add_argument("--sigma", default="21", help="pattern in one-line notation")
    g.add_argument("--seed", type=int, default=None, help="random seed (default $PERMLAB_SEED or 0)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--output", "-o", default=None, help="output path (default standard output)")
    g.add_argument("--strict", action="store_true", help="exit 3 when a solve does not converge")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for phase-scan")
    g.add_argument("--log-level", default="WARNING")
    s = common.add_argument_group("solver options")
    s.add_argument("--m", type=int, default=64, help="grid resolution")
    s.add_argument("--bins", type=int, default=64, help="bins per segment")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=100_000)
    s.add_argument("--damping", type=float, default=1.0)
    s.add_argument("--init", choices=("uniform", "random"), default="uniform")
    s.add_argument("--theta-max", type=float, default=64.0)
    s.add_argument("--delta-tol", type=float, default=1e-8)

    parser = argparse.ArgumentParser(prog="permlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"permlab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name in ("sample", "gibbs", "pmf"):
            p.add_argument("--n", type=int)
        if name == "sample":
            p.add_argument("--count", type=int, default=1)
        if name == "tsigma":
            mode = p.add_mutually_exclusive_group()
            mode.add_argument("--exact", action="store_true", help="closed-form evaluation (default)")
            mode.add_argument("--mc", type=int, metavar="N", help="Monte Carlo with N samples")
            p.add_argument("--perm", help="density in a permutation instead of a permuton")
        if name in ("gibbs", "pmf", "solve", "mallows", "xi"):
            p.add_argument("--theta", type=float)
        if name == "free-energy":
            p.add_argument("--theta", help="comma-separated tilts")
        if name == "gibbs":
            p.add_argument("--steps", type=int)
            p.add_argument("--burn-in", type=int)
            p.add_argument("--thin", type=int)
            p.add_argument("--chains", type=int, default=1)
            p.add_argument("--proposal", choices=("point-resample", "adjacent-transposition"), default="point-resample")
            p.add_argument("--dump", help="write thinned samples to this CSV")
        if name in ("condition", "xi"):
            p.add_argument("--delta", type=float)
        if name in ("solve", "condition"):
            p.add_argument("--field-out", help="write the density field as CSV")
        if name == "phase-scan":
            p.add_argument("--ells", help="comma-separated ell values")
            p.add_argument("--deltas", help="comma-separated delta values")
            p.add_argument("--no-refine", action="store_true", help="never raise the grid resolution")
            p.set_defaults(m=32, tol=1e-9, delta_tol=1e-7)
        if name in ("cc-check", "support-diag"):
            p.add_argument("--resolution", type=int, default=64)
            p.add_argument("--cc-tol", type=float, default=1e-9)
        if name == "mallows":
            p.add_argument("--h", type=float, default=1e-3)
            p.add_argument("--grid-out", help="write the density grid as CSV")
            p.set_defaults(m=256)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    code = EXIT_OK
    try:
        if args.seed is None:
            args.seed = _default_seed()
        out = Output(args, None)
        handler = COMMANDS[args.command][0]
        try:
            handler(args, out)
        except NonConvergence:
            code = EXIT_NONCONVERGED
        text = out.render()
    except (UsageError, PermutonError, PatternError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"permlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # solver failures such as an unreachable delta
        from .sampling import SamplingError
        from .variational import SolverError

        if isinstance(exc, (SolverError, SamplingError)):
            print(f"permlab {args.command}: error: {exc}", file=sys.stderr)
            return EXIT_NONCONVERGED if args.strict else EXIT_USAGE
        raise
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
