"""Command line entry point.

Every subcommand writes CSV with a header row and a trailing
``# manifest: <json>`` line holding the resolved configuration and the
library version. Exit codes: 0 success, 2 invalid input, 3 numerical
failure (including a failed self-check).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class ValidationError(ValueError):
    pass


# --------------------------------------------------------------------------
# output


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


def manifest(config: dict, extra: dict | None = None) -> str:
    body = {"version": __version__, "config": _jsonable(config)}
    if extra:
        body["results"] = _jsonable(extra)
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def csv_text(header, rows, config: dict, extra: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    buf.write(f"# manifest: {manifest(config, extra)}\n")
    return buf.getvalue()


def emit(path, text: str):
    if path in (None, "", "-"):
        sys.stdout.write(text)
    else:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


# --------------------------------------------------------------------------
# parsing helpers


def int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in str(s).split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from e


def str_list(s: str) -> list[str]:
    return [v.strip() for v in str(s).split(",") if v.strip()]


def zgrid(s: str) -> np.ndarray:
    try:
        lo, hi, steps = str(s).split(":")
        return np.linspace(float(lo), float(hi), int(steps))
    except ValueError as e:
        raise argparse.ArgumentTypeError("zgrid must be lo:hi:steps") from e


def read_config(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line without '=': {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _family(args):
    from .weights import make_family

    return make_family(args.kind, args.weight, tuple(args.qset))


def _resolved(args) -> dict:
    # worker count never changes results, so it stays out of the manifest
    skip = {"func", "config", "workers"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if isinstance(v, np.ndarray):
            v = [float(x) for x in v]
        out[k] = v
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_coeff(args) -> int:
    from .chaos import coefficient_table

    rows = coefficient_table(args.max_q)
    emit(args.out, csv_text(["q1", "q2", "q3", "nu", "c"], rows, _resolved(args)))
    return EXIT_OK


def cmd_exponent(args) -> int:
    from .exponent import ChaosForm, exponent, multilinear_bound, project_D, project_un

    form = ChaosForm(Fraction(args.alpha), tuple(args.orders))
    e = exponent(form)
    rows = [("exponent", "", e)]
    for q in range(2, max(max(form.orders), 2) + 2):
        rows.append(("project_un", q, project_un(form, q)))
    for i in range(0, 3):
        rows.append(("project_D", i, project_D(form, i)))
    if min(form.orders) > 0:
        rows.append(("multilinear", "", multilinear_bound(1, form)))
    rows = [(a, b, str(c) if isinstance(c, Fraction) else c) for a, b, c in rows]
    emit(args.out, csv_text(["quantity", "index", "value"], rows, _resolved(args), {"exponent": e}))
    return EXIT_OK


def cmd_rates(args) -> int:
    from .exponent import exponent, measure_rate, rate_catalog

    cat = rate_catalog()
    if args.form not in cat:
        raise ValidationError(f"unknown form {args.form!r}; catalog: {', '.join(cat)}")
    form, sampler, R = cat[args.form]
    est = measure_rate(sampler, args.n_grid, args.reps, args.p, args.seed, R, args.workers)
    extra = {"slope": est.slope, "se": est.se, "exponent": exponent(form)}
    emit(args.out, csv_text(["n", "norm", "se"], est.rows, _resolved(args), extra))
    return EXIT_OK


def _jumps_for(idx, rate, size, n, seed):
    from .paths import sample_jumps

    return [sample_jumps(rate, math.sqrt(size / n), seed, int(i)) for i in idx]


def cmd_simulate(args) -> int:
    from .estimators import section5_error, variation
    from .parallel import map_blocks
    from .paths import contaminate, euler_path, sample_wiener
    from .weights import g_infinity

    n, R = args.n, args.refine
    if args.reps < 0:
        raise ValidationError("reps must be non-negative")
    if args.model == "bm":
        fam = _family(args)
        use5 = fam.Q == (2,) and fam.kind in ("anticipative_endpoint", "constant")

        def block(idx):
            g = sample_wiener(n, R, args.seed, idx, "simulate")
            G = np.broadcast_to(np.asarray(g_infinity(fam, g), dtype=float), idx.shape)
            if use5:
                s = section5_error(fam, g)
                v, m, nn, z = s.v_bold, s.m_n, s.n1 + s.n2, s.z_n
            else:
                s = variation(fam, g)
                v, m, nn, z = s.v_n, s.m_n, s.n_n, s.v_n
            return np.column_stack([idx, np.full(idx.shape, n), v, m, nn, z, G, g.values[:, -1]])

        header = ["rep", "n", "v_n", "m_n", "n_n", "z_n", "G_inf", "w1"]
    else:
        from .paths import coefficient

        sig, drf = coefficient(args.sigma), coefficient(args.drift)

        def block(idx):
            g = sample_wiener(n, R, args.seed, idx, "simulate")
            p = euler_path(g, sig, drf, args.x0)
            d = p.coarse_increments
            obs = contaminate(p, _jumps_for(idx, args.jump_rate, args.jump_size, n, args.seed)) if args.jump_rate > 0 else d
            from . import quad

            iv = quad.trapz(sig.f(p.x_values) ** 2, g.fine_h)
            return np.column_stack([idx, np.full(idx.shape, n), p.x_values[:, -1], np.sum(d * d, -1), np.sum(obs * obs, -1), iv])

        header = ["rep", "n", "x1", "u_clean", "u_obs", "iv"]
    data = map_blocks(block, args.reps, workers=args.workers) if args.reps else np.empty((0, len(header)))
    rows = [[int(r[0]), int(r[1]), *r[2:]] for r in data]
    emit(args.out, csv_text(header, rows, _resolved(args)))
    if args.dump_paths:
        g = sample_wiener(n, R, args.seed, 0, "simulate")
        cols = [g.times, g.values]
        head = ["t", "w"]
        if args.model == "sde":
            cols.append(euler_path(g, args.sigma, args.drift, args.x0).x_values)
            head.append("x")
        emit(args.dump_paths, csv_text(head, np.column_stack(cols), _resolved(args)))
    return EXIT_OK


def cmd_expand(args) -> int:
    from .expansion import density_terms, expansion_report, limit_sample, target_sample, test_function

    fam = _family(args)
    tf = test_function(args.f)
    if args.reps < 1:
        raise ValidationError("reps must be positive")
    lim = limit_sample(fam, args.reps, args.seed, args.limit_m, workers=args.workers)
    tgt = target_sample(fam, args.n, args.reps, args.seed, args.refine, workers=args.workers)
    rep = expansion_report(tf, lim, tgt)
    head = ["n", "f", "target", "se_t", "zeroth", "first", "err0", "err1"]
    emit(args.out, csv_text(head, [[rep.n, rep.f, rep.target, rep.se_t, rep.zeroth, rep.first, rep.err0, rep.err1]], _resolved(args)))
    if args.zgrid is not None:
        p0, p1 = density_terms(lim, args.n, args.zgrid)
        emit(args.density_out, csv_text(["z", "p0", "p1"], zip(args.zgrid, p0, p1), _resolved(args)))
    if args.dump_symbols:
        rows = []
        keys = sorted(lim.terms)
        for r in range(lim.reps):
            for a, b in keys:
                rows.append((r, a, b, lim.terms[(a, b)][r]))
        emit(args.dump_symbols, csv_text(["rep", "a", "b", "coef"], rows, _resolved(args)))
    return EXIT_OK


COMPARE_HEADER = [
    "n", "f", "target", "se_t", "zeroth", "first", "err0", "err1", "se_err0", "se_err1",
    "sqrt_n_err0", "sqrt_n_err1", "margin", "se_margin", "improved",
]


def cmd_compare(args) -> int:
    from .expansion import compare_distributions

    if len(args.n_grid) < 3:
        raise ValidationError("n_grid needs at least 3 values")
    if args.reps < 1:
        emit(args.out, csv_text(COMPARE_HEADER, [], _resolved(args)))
        print("error: reps must be positive", file=sys.stderr)
        return EXIT_INVALID
    fam = _family(args)
    res = compare_distributions(fam, args.n_grid, args.reps, tuple(args.f), args.seed, args.limit_m, args.refine, z_grid=args.zgrid, workers=args.workers)
    rows = []
    for r in res["reports"]:
        rows.append([r.n, r.f, r.target, r.se_t, r.zeroth, r.first, r.err0, r.err1, r.se_err0, r.se_err1,
                     r.scaled_err0, r.scaled_err1, r.margin, r.se_margin, r.improved(3.0)])
    emit(args.out, csv_text(COMPARE_HEADER, rows, _resolved(args)))
    if args.zgrid is not None:
        crow = [(c.n, c.sup0, c.sup1) for c in res["cdf"]]
        emit(args.cdf_out, csv_text(["n", "sup0", "sup1"], crow, _resolved(args)))
    return EXIT_OK


def robust_summary(res: dict, tol: float) -> dict:
    def stats(err):
        return {"bias": float(np.mean(err)), "se": float(np.std(err, ddof=1) / math.sqrt(err.size)) if err.size > 1 else float("nan"), "rmse": float(np.sqrt(np.mean(err**2)))}

    iv = res["iv"]
    rel = np.abs(res["v_clean"] - res["u_clean"]) / res["u_clean"]
    return {
        "u_n": stats(res["u_n"] - iv),
        "v_robust": stats(res["v_robust"] - iv),
        "u_minus_v": stats(res["u_n"] - res["v_robust"]),
        "pass_band_fraction": float(np.mean(rel < tol)),
        "pass_band_tolerance": tol,
    }


def cmd_robustvol(args) -> int:
    from .volatility import filter_spec, robust_study

    filt = filter_spec(args.phi, args.lam)
    if args.reps < 1:
        raise ValidationError("reps must be positive")
    res = robust_study(args.n, args.reps, args.seed, filt, args.sigma, args.drift, args.refine, args.x0, args.jump_rate, args.jump_size, args.workers)
    rows = zip(range(args.reps), res["u_n"], res["v_robust"], res["v_target"], res["z_n"], res["g_inf"])
    summary = robust_summary(res, args.tol)
    emit(args.out, csv_text(["rep", "u_n", "v_robust", "v_target", "z_n", "g_inf"], rows, _resolved(args), summary))
    if args.summary:
        emit(args.summary, json.dumps({"version": __version__, "config": _jsonable(_resolved(args)), "summary": summary}, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def selftest_checks(seed: int, workers=None) -> tuple[list, dict]:
    """Small deterministic property battery; returns check rows and artifacts."""
    from .chaos import coeff3, coefficient_table, linearization_oracle
    from .expansion import density_terms, expansion_report, limit_sample, target_sample, test_function
    from .exponent import exponent, measure_rate, rate_catalog
    from .volatility import (
        adjustment_symbol,
        bump_theta_beta_derivative,
        filter_spec,
        robust_rv,
        robust_study,
        simulate_paths,
        theta_beta_derivative,
        windows,
    )
    from .weights import make_family

    checks, art = [], {}

    def check(name, value, tol, ok):
        checks.append((name, value, tol, bool(ok)))

    bad = 0
    for q1 in range(6):
        for q2 in range(6):
            for q3 in range(6):
                o = linearization_oracle([q1, q2, q3])
                s = q1 + q2 + q3
                bad += sum(coeff3(q1, q2, q3, nu) != o.get(s - 2 * nu, 0) for nu in range(s // 2 + 1))
    check("coeff3_vs_oracle_mismatches", bad, 0, bad == 0)
    art["coeff.csv"] = (["q1", "q2", "q3", "nu", "c"], coefficient_table(4))

    cat = rate_catalog()
    form, sampler, R = cat["variation"]
    est = measure_rate(sampler, [32, 64, 128], 4000, 2, seed, R, workers)
    check("variation_rate_slope", est.slope, 0.1, abs(est.slope - float(exponent(form))) < 0.1)
    art["rates.csv"] = (["n", "norm", "se"], est.rows)

    unit = make_family("anticipative_endpoint", "const:1")
    lim = limit_sample(unit, 2000, seed, 16, workers=workers)
    z = np.linspace(-6, 6, 121)
    p0, p1 = density_terms(lim, 64, z)
    from .chaos import hermite

    phi = np.exp(-z * z / 4) / np.sqrt(4 * np.pi)
    want = phi * (1 + 64**-0.5 * (4 / 3) * 2**-1.5 * hermite(3, z / np.sqrt(2)))
    dev = float(np.max(np.abs(p1 - want)))
    check("edgeworth_identity", dev, 1e-10, dev < 1e-10)
    art["density.csv"] = (["z", "p0", "p1"], list(zip(z, p0, p1)))
    tgt = target_sample(unit, 64, 2000, seed, workers=workers)
    rep = expansion_report(test_function("z3"), lim, tgt)
    check("z3_correction", rep.correction, 1e-12, abs(rep.correction - 8) < 1e-12)
    art["expand.csv"] = (["n", "f", "target", "se_t", "zeroth", "first", "err0", "err1"],
                         [[rep.n, rep.f, rep.target, rep.se_t, rep.zeroth, rep.first, rep.err0, rep.err1]])

    n, lam = 64, 0.1
    lo, hi, _ = windows(n, lam)
    m = math.floor(n * lam)
    formula = (2 * m - 1) * (n - 2 * m + 2) + 2 * sum(j + m - 1 for j in range(1, m))
    check("window_count_identity", int(np.sum(hi - lo + 1)), formula, int(np.sum(hi - lo + 1)) == formula)
    p = simulate_paths(64, 4, seed, np.arange(4), sigma="tanh:1,0.3", drift="sin:0,0.5")
    s = robust_rv(p, filter_spec("one", lam))
    check("identity_filter", float(np.max(np.abs(s.v_robust - s.u_n))), 0.0, np.array_equal(s.v_robust, s.u_n))
    f = filter_spec("linear:1,0.5,0.5", lam)
    D = theta_beta_derivative(p, f)
    b = bump_theta_beta_derivative(p, f, 7)
    dev = float(np.max(np.abs(D[:, 6] - b)))
    check("tangent_vs_bump", dev, 1e-8, dev < 1e-8)
    sym = adjustment_symbol(simulate_paths(64, 4, seed, np.arange(2), sigma="const:1"), filter_spec("ux", lam))
    dev = float(max(np.max(np.abs(sym.coef(3, 0) - 4)), np.max(np.abs(sym.coef(1, 0) - 2))))
    check("adjustment_symbol_unit", dev, 1e-12, dev < 1e-12)
    res = robust_study(256, 512, seed, filter_spec("smoothcut:3", 0.05), jump_rate=5.0, workers=workers)
    art["robustvol.csv"] = (["rep", "u_n", "v_robust", "v_target", "z_n", "g_inf"],
                            list(zip(range(512), res["u_n"], res["v_robust"], res["v_target"], res["z_n"], res["g_inf"])))
    return checks, art


def cmd_selftest(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    checks, art = selftest_checks(args.seed, args.workers)
    cfg = _resolved(args)
    cfg.pop("outdir", None)
    for name, (head, rows) in sorted(art.items()):
        (outdir / name).write_text(csv_text(head, rows, cfg))
    (outdir / "checks.csv").write_text(csv_text(["check", "value", "tolerance", "passed"], checks, cfg))
    failed = [c[0] for c in checks if not c[3]]
    for c in checks:
        print(f"{'PASS' if c[3] else 'FAIL'} {c[0]} value={fmt(c[1])}")
    return EXIT_NUMERIC if failed else EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p, reps=10000):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--out", default="-", help="CSV destination (default stdout)")
    p.add_argument("--workers", type=int, default=None, help="thread count (default WEXP_THREADS)")


def _family_args(p):
    p.add_argument("--kind", default="anticipative_endpoint", help="anticipative_endpoint, predictable or constant")
    p.add_argument("--weight", default="sin2", help="const:c, linear, sin2, poly:c0,c1,...")
    p.add_argument("--qset", type=int_list, default=[2])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wexp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeff", help="Hermite product coefficient table")
    p.add_argument("--config")
    p.add_argument("--max-q", type=int, default=4)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_coeff)

    p = sub.add_parser("exponent", help="exponent and projection bounds of a form")
    p.add_argument("--config")
    p.add_argument("--alpha", type=str, required=False, default="0")
    p.add_argument("--orders", type=int_list, required=False, default=[2])
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_exponent)

    p = sub.add_parser("rates", help="Monte Carlo rate of a catalog form")
    _common(p)
    p.add_argument("--form", default="variation")
    p.add_argument("--n-grid", type=int_list, default=[64, 128, 256, 512, 1024, 2048, 4096])
    p.add_argument("--p", type=int, default=2)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("simulate", help="per-replication variation or diffusion samples")
    _common(p, reps=1000)
    _family_args(p)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--refine", type=int, default=2)
    p.add_argument("--model", choices=["bm", "sde"], default="bm")
    p.add_argument("--sigma", default="tanh:1,0.1")
    p.add_argument("--drift", default="const:0")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--jump-rate", type=float, default=0.0)
    p.add_argument("--jump-size", type=float, default=10.0, help="jump variance in units of 1/n")
    p.add_argument("--dump-paths", default=None, help="CSV t,w[,x] of replication 0")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("expand", help="first-order expansion of E f(Z_n, X) and the density")
    _common(p)
    _family_args(p)
    p.add_argument("--f", default="z3")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--refine", type=int, default=2)
    p.add_argument("--limit-m", type=int, default=1024)
    p.add_argument("--zgrid", type=zgrid, default=None)
    p.add_argument("--density-out", default="-")
    p.add_argument("--dump-symbols", default=None, help="CSV rep,a,b,coef")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("compare", help="zeroth vs first order error table over n")
    _common(p)
    _family_args(p)
    p.add_argument("--f", type=str_list, default=["z2", "z3", "sinz", "zx"])
    p.add_argument("--n-grid", type=int_list, default=[64, 256, 1024])
    p.add_argument("--refine", type=int, default=2)
    p.add_argument("--limit-m", type=int, default=1024)
    p.add_argument("--zgrid", type=zgrid, default=None)
    p.add_argument("--cdf-out", default="-")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("robustvol", help="jump-filtered realized volatility study")
    _common(p, reps=2000)
    p.add_argument("--sigma", default="tanh:1,0.1")
    p.add_argument("--drift", default="const:0")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--phi", default="smoothcut:3")
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--refine", type=int, default=4)
    p.add_argument("--jump-rate", type=float, default=5.0)
    p.add_argument("--jump-size", type=float, default=10.0, help="jump variance in units of 1/n")
    p.add_argument("--tol", type=float, default=1e-2, help="pass-band tolerance on clean data")
    p.add_argument("--summary", default=None, help="JSON summary path")
    p.set_defaults(func=cmd_robustvol)

    p = sub.add_parser("selftest", help="deterministic property battery")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", default="selftest_out")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_selftest)
    return ap


def parse(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        if "lambda" in values:
            values["lam"] = values.pop("lambda")
        known = {a.dest for a in sub._actions}
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**values)
        args = ap.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code not in (0, None) else EXIT_OK
    except (ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (ValueError, KeyError, argparse.ArgumentTypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
