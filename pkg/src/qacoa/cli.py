"""Command line entry point: ``qacoa <subcommand> ...``.

Diagnostic tables are CSV whose first line is ``# {json metadata}``.
``run`` and ``alpha-sweep`` exit with status 2 when some cells failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import chaos, diagnostics, runner, simulator, spsa
from .sat import build_cost_diagonal, generate_random_instance, read_dimacs, write_dimacs
from .schemes import SchemeSpec

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def write_table(path, header, rows, meta: dict | None = None) -> None:
    fh, close = _open_out(path)
    try:
        if meta is not None:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if close:
            fh.close()


def _add_instance_args(ap):
    g = ap.add_argument_group("instance")
    g.add_argument("--dimacs", help="DIMACS CNF file")
    g.add_argument("--n-vars", type=int, default=6)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--alpha", type=float, default=4.2)
    g.add_argument("--instance-seed", type=int, default=0)


def _load_instance(args):
    if args.dimacs:
        inst = read_dimacs(args.dimacs)
    else:
        inst = generate_random_instance(args.n_vars, args.k, args.alpha, args.instance_seed)
    return inst, build_cost_diagonal(inst)


def _instance_meta(inst) -> dict:
    return {"n_vars": inst.n_vars, "k": inst.k, "m": inst.m, "instance_hash": inst.content_hash()}


def _theta_arg(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.split(",")])


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.instance_seed + i
        inst = generate_random_instance(args.n_vars, args.k, args.alpha, seed)
        path = out / f"N{args.n_vars}-K{args.k}-a{args.alpha:g}-s{seed}.cnf"
        write_dimacs(inst, path)
        print(path)
    return EXIT_OK


def _run_config(args) -> runner.RunConfig:
    if bool(args.config) == bool(args.preset):
        raise runner.ConfigError("give exactly one of --config or --preset")
    cfg = runner.RunConfig.from_toml(args.config) if args.config else runner.preset(args.preset)
    changes = {}
    if args.output:
        changes["output_dir"] = args.output
    if args.workers:
        changes["workers"] = args.workers
    if args.restarts:
        changes["restarts"] = args.restarts
    sp = {}
    if args.j_max:
        sp["j_max"] = args.j_max
    if args.ergodic_gain_rescale:
        sp["ergodic_gain_rescale"] = True
    if sp:
        changes["spsa"] = replace(cfg.spsa, **sp)
    cfg = replace(cfg, **changes)
    if cfg.output_dir is None:
        cfg = replace(cfg, output_dir=f"runs/{cfg.name}")
    return cfg


def _report(result: runner.RunResult) -> int:
    n = len(result.records)
    print(f"{n - result.n_failed}/{n} cells ok; output in {result.output_dir}")
    for rec in result.records:
        if rec["status"] != "ok":
            print(f"  failed: {rec['instance_id']} {rec['scheme']} p={rec['p']} restart={rec['restart']}: {rec['error']}",
                  file=sys.stderr)
    return EXIT_PARTIAL if result.n_failed else EXIT_OK


def cmd_run(args) -> int:
    return _report(runner.run(_run_config(args), resume=args.resume))


def cmd_alpha_sweep(args) -> int:
    if not args.config and not args.preset:
        args.preset = "alpha-sweep-k3"
    result, _ = runner.alpha_sweep(_run_config(args))
    return _report(result)


def cmd_aggregate(args) -> int:
    records = runner.read_records(args.records)
    rows = runner.aggregate(records, by_instance=args.by == "instance", by_alpha=args.by == "alpha")
    fh, close = _open_out(args.out)
    try:
        fh.write(runner.rows_to_csv(rows))
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = runner.compare(runner.read_records(args.records), args.baseline, args.other)
    fh, close = _open_out(args.out)
    try:
        fh.write(runner.rows_to_csv(rows))
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _spec(args, p=None) -> SchemeSpec:
    return SchemeSpec(args.scheme, p if p is not None else args.p, args.c, args.p_t, args.T)


def _add_scheme_args(ap, default_kind="pure"):
    ap.add_argument("--scheme", default=default_kind, choices=("standard", "pure", "delayed", "iterated"))
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--c", type=int, default=100)
    ap.add_argument("--p-t", type=int, default=1)
    ap.add_argument("--T", type=int, default=1)


def cmd_scan(args) -> int:
    inst, diag = _load_instance(args)
    spec = _spec(args)
    scan = simulator.landscape_scan(spec, diag, args.grid)
    meta = {"scheme": spec.to_dict(), "grid": args.grid, "c_min": diag.c_min, "c_max": diag.c_max,
            **_instance_meta(inst)}
    if diag.c_max != diag.c_min:
        meta["mixing_metric"] = diagnostics.mixing_metric(scan)
    write_table(args.out, ["theta1", "theta2", "F"], scan.rows(), meta)
    return EXIT_OK


def cmd_lle(args) -> int:
    inst, diag = _load_instance(args)
    spec = SchemeSpec.pure(args.p_max, args.c)
    rng = np.random.default_rng(args.seed)
    points = []
    if args.theta:
        points.append(("given", _theta_arg(args.theta)))
    else:
        points += [("random", rng.uniform(0.0, 1.0, 2)) for _ in range(args.samples)]
    if args.at_optimum:
        trace = spsa.optimize(spec, diag, spsa.SpsaConfig(j_max=args.j_max, seed=args.seed))
        points.append(("optimum", trace.best_theta))
    rows = []
    flags = []
    for idx, (kind, theta) in enumerate(points):
        rep = diagnostics.cost_lle_spectrum(spec, theta, diag, args.p_max)
        flags += [f"sample {idx}: {f}" for f in rep.flags]
        for row in rep.rows():
            rows.append((idx, kind, float(theta[0]), float(theta[1]), *row))
    meta = {"c": args.c, "p_max": args.p_max, "gle": chaos.gle(args.c), "seed": args.seed, "flags": flags,
            **_instance_meta(inst)}
    write_table(args.out, ["sample", "point", "theta1", "theta2", "p", "cost_lle_1", "cost_lle_2",
                           "phase_lle_1", "phase_lle_2"], rows, meta)
    return EXIT_OK


def cmd_eta(args) -> int:
    table = diagnostics.eta_sweep(args.c, range(args.p_min, args.p_max + 1), args.samples, args.seed)
    meta = {"c": args.c, "samples": args.samples, "seed": args.seed, "slope": table.slope,
            "intercept": table.intercept, "target_slope": -chaos.gle(args.c)}
    write_table(args.out, ["p", "median_eta", "q25_eta", "q75_eta", "n_infinite"], table.rows(), meta)
    return EXIT_OK


def cmd_noise(args) -> int:
    depths = range(1, args.p_max + 1)
    rep = diagnostics.control_noise_moment(args.c, depths, args.delta, args.samples, args.seed)
    meta = {"c": args.c, "delta_theta": args.delta, "samples": args.samples, "seed": args.seed,
            "underflow": rep.underflow}
    if args.cross:
        m1, m2 = args.cross
        theta = np.random.default_rng(args.seed).uniform(0.0, 1.0, (2, args.samples))
        zs = diagnostics.noise_correlation(theta, args.c, m1, m2, args.delta)
        meta["cross"] = {"m1": m1, "m2": m2, "zeta_over_delta2": (zs / args.delta**2).tolist()}
    write_table(args.out, ["p", "mean_zeta_1", "mean_zeta_2", "std_zeta_1", "std_zeta_2"], rep.rows(), meta)
    return EXIT_OK


def cmd_cdf(args) -> int:
    inst, diag = _load_instance(args)
    spec = _spec(args)
    theta = _theta_arg(args.theta) if args.theta else np.random.default_rng(args.seed).uniform(0.0, 1.0, 2)
    grid = np.logspace(args.log_delta_min, args.log_delta_max, args.n_deltas)
    res = diagnostics.differential_cdf(spec, theta, diag, grid, args.perturbations, args.seed, args.scale)
    meta = {"scheme": spec.to_dict(), "theta": theta.tolist(), "scale": args.scale, **_instance_meta(inst)}
    write_table(args.out, ["delta", "phi"], zip(res.deltas.tolist(), res.phi.tolist()), meta)
    return EXIT_OK


def cmd_orbit(args) -> int:
    rec = chaos.orbit_record(args.theta, args.p, args.c)
    meta = {"theta0": args.theta, "p": args.p, "c": args.c, "gle": chaos.gle(args.c), "near_half": rec.near_half}
    write_table(args.out, ["m", "iterate", "h", "lle"], rec.rows(), meta)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qacoa", description="Chaotic-parameterized QAOA experiments for MAX K-SAT")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write random instances as DIMACS files")
    _add_instance_args(p)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    for name, func, helptext in (("run", cmd_run, "run a configured sweep"),
                                 ("alpha-sweep", cmd_alpha_sweep, "sweep clause density")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--preset", choices=runner.PRESETS)
        p.add_argument("--output", help="output directory (overrides config)")
        p.add_argument("--workers", type=int, help=f"process count; {runner.WORKERS_ENV} overrides")
        p.add_argument("--restarts", type=int)
        p.add_argument("--j-max", type=int)
        p.add_argument("--ergodic-gain-rescale", action="store_true",
                       help="shrink c0 by exp(-c ln2 (p-1)) for chaotic schemes")
        p.add_argument("--resume", action="store_true", help="skip cells already in the partial record file")
        p.set_defaults(func=func)

    p = sub.add_parser("aggregate", help="rebuild aggregates from records.jsonl")
    p.add_argument("records")
    p.add_argument("--by", choices=("none", "instance", "alpha"), default="none")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("compare", help="mean-AR differences between two schemes")
    p.add_argument("records")
    p.add_argument("--baseline", default="standard")
    p.add_argument("--other", required=True, help='scheme label, e.g. "pure(c=100)"')
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("scan-landscape", help="F over a grid of (theta1, theta2)")
    _add_instance_args(p)
    _add_scheme_args(p)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("diagnose-lle", help="cost-landscape and phase-space Lyapunov exponents")
    _add_instance_args(p)
    p.add_argument("--c", type=int, default=100)
    p.add_argument("--p-max", type=int, default=8)
    p.add_argument("--theta", help="comma-separated theta1,theta2; default random samples")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--at-optimum", action="store_true", help="also evaluate at the SPSA optimum")
    p.add_argument("--j-max", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_lle)

    p = sub.add_parser("diagnose-eta", help="linearizability bound eta over depth")
    p.add_argument("--c", type=int, default=10)
    p.add_argument("--p-min", type=int, default=2)
    p.add_argument("--p-max", type=int, default=8)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eta)

    p = sub.add_parser("diagnose-noise", help="control-noise second moment over depth")
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--p-max", type=int, default=12)
    p.add_argument("--delta", type=float, default=1e-18)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross", type=int, nargs=2, metavar=("M1", "M2"),
                   help="also report the averaged 2x2 correlation between layers M1 and M2")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("diagnose-cdf", help="empirical CDF of cost differentials")
    _add_instance_args(p)
    _add_scheme_args(p)
    p.add_argument("--theta")
    p.add_argument("--scale", type=float, default=1e-3)
    p.add_argument("--perturbations", type=int, default=200)
    p.add_argument("--log-delta-min", type=float, default=-12)
    p.add_argument("--log-delta-max", type=float, default=1)
    p.add_argument("--n-deltas", type=int, default=27)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("orbit", help="logistic-map orbit with derivative and LLE per layer")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_orbit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (runner.ConfigError, runner.AlignmentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
