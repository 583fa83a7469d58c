"""Batch command-line front end.

Every run builds an experiment manifest (command, arguments, environment
hash, seeds, version) whose hash excludes the timestamp, so replaying the
same invocation reproduces every numeric output bit-exactly; Monte Carlo
runs rely on counter-based substreams for the same guarantee.  Outputs
embed the manifest reference: JSON as a "manifest" block, CSV as a leading
comment line.

Exit codes: 0 success, 2 validation/usage error, 3 numerical
non-convergence.
"""

import argparse
import csv
import datetime
import hashlib
import json
import sys

import numpy as np

from . import __version__
from .corrector_diag import PathSumField, sublinearity_profile
from .entropy import gamma_lower
from .errors import Divergent, NoConvergence, RwreError
from .lattice_env import (
    DirichletLaw,
    FiniteSupportLaw,
    PointMassLaw,
    load_env,
    make_periodic,
    sample_iid_boxed,
    save_env,
)
from .mgf import brute_force_mgf, exact_mgf, mc_mgf
from .one_dim import Env1D, g_h_curves, verify_I_equals_J
from .rate import default_lambda_grid, empirical_ldp, rate_curve
from .variational import (
    spectral_lambda,
    supermartingale_check,
    variational_lambda,
)

SCHEMA = "rwre-ldp/1"


def _fmt(x):
    """17 significant digits, the round-trip-safe float format."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def parse_grid(text, flag):
    """Parse 'lo:hi:steps' into a linspace."""
    parts = text.split(":")
    if len(parts) != 3:
        raise _UsageError(flag, f"expected lo:hi:steps, got {text!r}")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise _UsageError(flag, f"non-numeric grid component in {text!r}")
    if steps < 1:
        raise _UsageError(flag, "steps must be >= 1")
    return np.linspace(lo, hi, steps)


def parse_floats(text, flag):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise _UsageError(flag, f"expected comma-separated reals, got {text!r}")


def parse_ints(text, flag):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise _UsageError(flag, f"expected comma-separated ints, got {text!r}")


class _UsageError(RwreError):
    def __init__(self, flag, message):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


def build_manifest(command, args, env_hash=None, seeds=()):
    """Manifest dict plus its replay hash (timestamp excluded from the hash)."""
    arg_map = {
        k: v for k, v in sorted(vars(args).items()) if k != "func"
    }
    body = {
        "schema": SCHEMA,
        "command": command,
        "args": arg_map,
        "env_hash": env_hash,
        "seeds": [int(s) for s in seeds],
        "version": __version__,
    }
    digest = hashlib.sha256(
        json.dumps(body, sort_keys=True, default=str).encode()
    ).hexdigest()
    body["hash"] = digest
    body["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return body


def _emit_json(out, manifest, payload):
    doc = {"schema": SCHEMA, "manifest": manifest}
    doc.update(payload)
    text = json.dumps(doc, indent=1, default=str) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_csv(out, manifest, header, rows):
    target = open(out, "w", newline="") if out else sys.stdout
    try:
        target.write(f"# manifest {manifest['hash']} schema {SCHEMA}\n")
        writer = csv.writer(target)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if out:
            target.close()


def _load_env(args):
    if not getattr(args, "env", None):
        raise _UsageError("--env", "an environment file is required")
    return load_env(args.env)


def _parse_law(text):
    """Law spec: point:p1,...  dirichlet:a1,...  finite:r1|r2@w1,w2."""
    kind, _, body = text.partition(":")
    if kind == "point":
        return PointMassLaw(parse_floats(body, "--law"))
    if kind == "dirichlet":
        return DirichletLaw(parse_floats(body, "--law"))
    if kind == "finite":
        rows_part, _, w_part = body.partition("@")
        rows = [parse_floats(r, "--law") for r in rows_part.split("|")]
        weights = parse_floats(w_part, "--law") if w_part else None
        return FiniteSupportLaw(rows, weights)
    raise _UsageError("--law", f"unknown law kind {kind!r}")


# --- subcommands ------------------------------------------------------------


def cmd_env_gen(args):
    if args.kind == "periodic":
        if not args.cell_dims or not args.probs:
            raise _UsageError("--cell-dims/--probs",
                              "periodic generation needs both")
        cell = parse_ints(args.cell_dims, "--cell-dims")
        probs = [parse_floats(r, "--probs") for r in args.probs.split(";")]
        env = make_periodic(len(cell), cell, probs, alpha=args.alpha)
    else:
        if args.radius is None or not args.law:
            raise _UsageError("--radius/--law", "boxed generation needs both")
        law = _parse_law(args.law)
        env = sample_iid_boxed(args.dim, args.radius, args.seed, law,
                               alpha=args.alpha)
    manifest = build_manifest("env-gen", args, env.content_hash(),
                              seeds=[args.seed])
    if not args.out:
        raise _UsageError("--out", "env-gen needs an output path")
    save_env(env, args.out)
    with open(args.out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    print(f"env-gen: wrote {args.out} ({env.kind}, d={env.dimension}, "
          f"hash {env.content_hash()[:12]})")
    return 0


def cmd_mgf(args):
    env = _load_env(args)
    lam = parse_floats(args.lam, "--lambda")
    manifest = build_manifest("mgf", args, env.content_hash(),
                              seeds=[args.seed])
    if args.method == "exact":
        est = exact_mgf(env, lam, args.n)
    elif args.method == "brute":
        est = brute_force_mgf(env, lam, args.n)
    elif args.method == "mc":
        est = mc_mgf(env, lam, args.n, args.samples, args.seed)
    else:
        raise _UsageError("--method", f"unknown method {args.method!r}")
    # CSV columns: lambda components, n, method, value, stderr, samples, seed.
    header = [f"lambda_{i + 1}" for i in range(env.dimension)]
    header += ["n", "method", "value", "stderr", "samples", "seed"]
    row = list(lam) + [est.n, est.method, est.value, est.stderr,
                       est.samples, args.seed]
    if args.format == "json":
        _emit_json(args.out, manifest, {
            "lambda": [float(v) for v in lam], "n": est.n,
            "method": est.method, "value": est.value, "stderr": est.stderr,
            "samples": est.samples, "seed": args.seed,
        })
    else:
        _emit_csv(args.out, manifest, header, [row])
    print(f"mgf: {est.method} n={est.n} value={_fmt(est.value)}")
    return 0


def cmd_lambda(args):
    env = _load_env(args)
    lam = parse_floats(args.lam, "--lambda")
    manifest = build_manifest("lambda", args, env.content_hash())
    result = variational_lambda(env, lam, tol=args.tol)
    _emit_json(args.out, manifest, result.to_dict())
    print(f"lambda: value={_fmt(result.value)} gap={_fmt(result.gap)} "
          f"iterations={result.iterations}")
    return 0


def cmd_gamma(args):
    env = _load_env(args)
    lam = parse_floats(args.lam, "--lambda")
    manifest = build_manifest("gamma", args, env.content_hash(),
                              seeds=[args.seed])
    result = gamma_lower(env, lam, tol=args.tol, seed=args.seed)
    spectral = spectral_lambda(env, lam)
    var = variational_lambda(env, lam).value
    if args.format == "json":
        payload = result.to_dict()
        payload.update({"lambda_var": var, "spectral": spectral,
                        "gap_spectral": spectral - result.value,
                        "gap_var": var - result.value})
        _emit_json(args.out, manifest, payload)
    else:
        header = [f"lambda_{i + 1}" for i in range(env.dimension)]
        header += ["gamma", "lambda_var", "spectral", "gap_spectral",
                   "gap_var"]
        row = list(lam) + [result.value, var, spectral,
                           spectral - result.value, var - result.value]
        _emit_csv(args.out, manifest, header, [row])
    print(f"gamma: value={_fmt(result.value)} "
          f"gap={_fmt(spectral - result.value)}")
    return 0


def cmd_rate(args):
    env = _load_env(args)
    xs = parse_grid(args.x_grid, "--x-grid") if args.x_grid else \
        np.linspace(-1.0, 1.0, 41)
    lam_grid = parse_grid(args.lambda_grid, "--lambda-grid") \
        if args.lambda_grid else default_lambda_grid()
    manifest = build_manifest("rate", args, env.content_hash())
    curve = rate_curve(env, xs, lambda_grid=lam_grid, tol=args.tol)
    if args.format == "json":
        _emit_json(args.out, manifest, {
            "x": [float(v) for v in curve.xs],
            "I": [float(v) for v in curve.values],
            "censored": [bool(b) for b in curve.censored],
            "provenance": curve.provenance,
        })
    else:
        rows = [[x, v, c] for x, v, c in
                zip(curve.xs, curve.values, curve.censored)]
        _emit_csv(args.out, manifest, ["x", "I", "censored"], rows)
    print(f"rate: {len(xs)} points, min I={_fmt(np.nanmin(curve.values))}")
    return 0


def cmd_oned(args):
    env = _load_env(args)
    env1d = Env1D.from_environment(env)
    manifest = build_manifest("oned", args, env.content_hash())
    r_grid = parse_grid(args.r_grid, "--r-grid") if args.r_grid else \
        np.linspace(-4.0, 0.5, 46)
    curves = g_h_curves(env1d, r_grid)
    if args.x_grid:
        xs = parse_grid(args.x_grid, "--x-grid")
        report = verify_I_equals_J(env1d, xs, tol=args.tol)
        rows = [[x, i, j, abs(i - j)] for x, i, j in
                zip(report.x_grid, report.I_values, report.J_values)]
        _emit_csv(args.out, manifest, ["x", "I", "J", "gap"], rows)
        print(f"oned: equivalence max gap {_fmt(report.max_gap)} "
              f"at x={_fmt(report.argmax_x)}")
        return 0
    rows = [[r, g, h, gc, hc] for r, g, h, gc, hc in
            zip(curves.r_grid, curves.g, curves.h,
                curves.g_convergent, curves.h_convergent)]
    _emit_csv(args.out, manifest,
              ["r", "g", "h", "g_convergent", "h_convergent"], rows)
    print(f"oned: r_crit_g in {tuple(map(_fmt, curves.r_crit_g))}")
    return 0


def cmd_sublin(args):
    env = _load_env(args)
    lam = parse_floats(args.lam, "--lambda") if args.lam else \
        np.zeros(env.dimension)
    manifest = build_manifest("sublin", args, env.content_hash(),
                              seeds=[args.seed])
    corrector = variational_lambda(env, lam).argmin_potential
    field = PathSumField.from_corrector(corrector)
    n_list = parse_ints(args.n_list, "--n-list") if args.n_list else \
        [64, 128, 256, 512]
    profile = sublinearity_profile(field, n_list,
                                   sample_count=args.samples or 0,
                                   seed=args.seed)
    rows = [[p["n"], p["value"], "exact" if p["exact"] else "sampled",
             p["samples"]] for p in profile]
    _emit_csv(args.out, manifest, ["n", "sup_value", "mode", "samples"], rows)
    print(f"sublin: sup/n at n={profile[-1]['n']} is "
          f"{_fmt(profile[-1]['value'])}")
    return 0


def cmd_ldp_check(args):
    env = _load_env(args)
    center = parse_floats(args.x_center, "--x-center") if args.x_center else \
        np.zeros(env.dimension)
    manifest = build_manifest("ldp-check", args, env.content_hash(),
                              seeds=[args.seed])
    n_list = parse_ints(args.n_list, "--n-list") if args.n_list else [32, 64]
    points = empirical_ldp(env, center, args.ball_radius, n_list,
                           args.samples or 10000, args.seed)
    rows = [[p.n, p.frequency, p.value, p.censored, p.samples]
            for p in points]
    _emit_csv(args.out, manifest,
              ["n", "frequency", "value", "censored", "samples"], rows)
    done = [p for p in points if not p.censored]
    tail = _fmt(done[-1].value) if done else "censored"
    print(f"ldp-check: largest resolved n gives {tail}")
    return 0


def _verify_checks(env, seed):
    """The acceptance-style checks behind verify-all, as (name, ok) pairs."""
    checks = []
    lam0 = np.zeros(env.dimension)

    v = exact_mgf(env, lam0, 50).value
    checks.append(("zero-tilt exact mgf", abs(v) < 1e-12))

    est1 = mc_mgf(env, np.full(env.dimension, 0.5), 20, 20000, seed)
    est2 = mc_mgf(env, np.full(env.dimension, 0.5), 20, 20000, seed)
    checks.append(("mc determinism", est1.value == est2.value))

    if env.kind == "periodic":
        res0 = variational_lambda(env, lam0)
        checks.append(("zero-tilt variational", abs(res0.value) < 1e-8))

        lam = np.full(env.dimension, 1.0)
        sp = spectral_lambda(env, lam)
        var = variational_lambda(env, lam)
        checks.append(("variational vs spectral",
                       abs(var.value - sp) <= 1e-6))
        gam = gamma_lower(env, lam, seed=seed)
        checks.append(("entropy bound vs spectral",
                       abs(gam.value - sp) <= 1e-4))
        gap32 = abs(exact_mgf(env, lam, 32).value - sp)
        gap256 = abs(exact_mgf(env, lam, 256).value - sp)
        # Some small cells hit the limit exactly at finite n; below the
        # roundoff floor the comparison would be between noise terms.
        checks.append(("finite-n gap shrinks",
                       gap256 < max(gap32, 1e-12)))

        n_bf = 8 if env.dimension == 1 else 6
        bf = brute_force_mgf(env, lam, n_bf).value
        ex = exact_mgf(env, lam, n_bf).value
        checks.append(("brute force vs dp", abs(bf - ex) <= 1e-10))

        rep = supermartingale_check(env, lam, var.argmin_potential, 12)
        checks.append(("supermartingale bound",
                       rep.exact_value <= 1.0 + 1e-10))

        if env.dimension == 1:
            env1d = Env1D.from_environment(env)
            if env1d.is_right_transient():
                rep = verify_I_equals_J(
                    env1d, np.linspace(-0.8, 0.9, 7),
                    lambda_grid=default_lambda_grid(-6, 6, 121))
                checks.append(("rate equivalence I=J",
                               rep.applicable and rep.max_gap <= 1e-3))
    return checks


def cmd_verify_all(args):
    env = _load_env(args)
    manifest = build_manifest("verify-all", args, env.content_hash(),
                              seeds=[args.seed])
    checks = _verify_checks(env, args.seed)
    failed = 0
    for name, ok in checks:
        print(f"[{'ok' if ok else 'FAIL'}] {name}")
        failed += 0 if ok else 1
    if args.out:
        _emit_json(args.out, manifest, {
            "checks": [{"name": n, "ok": bool(ok)} for n, ok in checks],
            "failed": failed,
        })
    print(f"verify-all: {len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


# --- parser -----------------------------------------------------------------


def _add_common(sub, *flags):
    if "env" in flags:
        sub.add_argument("--env", help="environment JSON file")
    if "lam" in flags:
        sub.add_argument("--lambda", dest="lam",
                         help="tilt vector, comma-separated reals")
    if "n" in flags:
        sub.add_argument("--n", type=int, default=64, help="walk length")
    if "n_list" in flags:
        sub.add_argument("--n-list", dest="n_list",
                         help="comma-separated walk lengths")
    if "samples" in flags:
        sub.add_argument("--samples", type=int, default=None,
                         help="Monte Carlo sample count")
    if "seed" in flags:
        sub.add_argument("--seed", type=int, default=0, help="stream seed")
    if "tol" in flags:
        sub.add_argument("--tol", type=float, default=1e-8,
                         help="numerical tolerance")
    if "out" in flags:
        sub.add_argument("--out", help="output path (stdout if omitted)")
    if "format" in flags:
        sub.add_argument("--format", choices=("csv", "json"), default="csv",
                         help="output format")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rwre",
        description="Quenched large-deviation computations for "
                    "nearest-neighbor walks in random environments.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("env-gen", help="generate an environment file")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--kind", choices=("periodic", "boxed"),
                   default="periodic")
    p.add_argument("--cell-dims", dest="cell_dims",
                   help="periodic cell sizes, comma-separated")
    p.add_argument("--probs",
                   help="rows as comma lists separated by ';', site order")
    p.add_argument("--radius", type=int, help="boxed l1 radius")
    p.add_argument("--law", help="point:...  dirichlet:...  finite:...@...")
    p.add_argument("--alpha", type=float, default=1.0)
    _add_common(p, "seed", "out")
    p.set_defaults(func=cmd_env_gen)

    p = subs.add_parser(
        "mgf", help="finite-n log MGF",
        epilog="CSV columns: lambda_1..lambda_d, n, method, value, stderr, "
               "samples, seed.")
    _add_common(p, "env", "lam", "n", "samples", "seed", "out", "format")
    p.add_argument("--method", choices=("exact", "brute", "mc"),
                   default="exact")
    p.set_defaults(func=cmd_mgf)

    p = subs.add_parser("lambda", help="variational log-MGF limit")
    _add_common(p, "env", "lam", "tol", "out")
    p.set_defaults(func=cmd_lambda)

    p = subs.add_parser(
        "gamma", help="entropy lower bound",
        epilog="CSV columns: lambda components, gamma, lambda_var, spectral, "
               "gap_spectral, gap_var.")
    _add_common(p, "env", "lam", "seed", "out", "format")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_gamma)

    p = subs.add_parser(
        "rate", help="rate function by Legendre transform",
        epilog="CSV columns: x, I, censored.")
    _add_common(p, "env", "out", "format")
    p.add_argument("--x-grid", dest="x_grid", help="lo:hi:steps")
    p.add_argument("--lambda-grid", dest="lambda_grid", help="lo:hi:steps")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_rate)

    p = subs.add_parser(
        "oned", help="1-D passage-time curves and rate equivalence",
        epilog="CSV columns: r, g, h, g_convergent, h_convergent; with "
               "--x-grid instead: x, I, J, gap.")
    _add_common(p, "env", "out")
    p.add_argument("--r-grid", dest="r_grid", help="lo:hi:steps")
    p.add_argument("--x-grid", dest="x_grid", help="lo:hi:steps")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_oned)

    p = subs.add_parser(
        "sublin", help="corrector sublinearity profile",
        epilog="CSV columns: n, sup_value, mode (exact|sampled), samples.")
    _add_common(p, "env", "lam", "n_list", "samples", "seed", "out")
    p.set_defaults(func=cmd_sublin)

    p = subs.add_parser(
        "ldp-check", help="empirical ball-probability decay",
        epilog="CSV columns: n, frequency, value, censored, samples.")
    _add_common(p, "env", "n_list", "samples", "seed", "out")
    p.add_argument("--x-center", dest="x_center",
                   help="ball center, comma-separated")
    p.add_argument("--ball-radius", dest="ball_radius", type=float,
                   default=0.1)
    p.set_defaults(func=cmd_ldp_check)

    p = subs.add_parser("verify-all",
                        help="run the acceptance-style checks for one env")
    _add_common(p, "env", "seed", "out")
    p.set_defaults(func=cmd_verify_all)

    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize success paths.
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (NoConvergence, Divergent) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RwreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
