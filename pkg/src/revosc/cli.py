"""Command-line interface.

Subcommands: validate, period, simulate, aa, normalform-verify,
poincare-atlas, rotation, sweep.  Exit codes: 0 success, 2 invalid spec,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

import numpy as np

from . import __version__
from .actionangle import AAConstants, AAPoint, from_action_angle, to_action_angle
from .coefficients import (CoefficientSpec, canonical_dict, canonical_json,
                           load_spec, validate_spec)
from .dynamics import (IntegrationError, IntegratorConfig, State, SystemConfig,
                       export_csv, integrate)
from .experiments import (SweepConfig, boundedness_sweep,
                          grid_initial_conditions, write_sweep_csv)
from .normalform import AnnulusDomain, PerturbationTerms, order_scaling
from .poincare import (DiophantineClass, PoincareMap, atlas, iterate,
                       rotation_number, write_atlas_csv)
from .report_io import ReportEnvelope, canonical_bytes, sha256_hex, write_report
from .special import compute_period, get_trig

EXIT_OK = 0
EXIT_INVALID_SPEC = 2
EXIT_NUMERICAL = 3


def _load_config(path: str) -> CoefficientSpec:
    if path == "demo":
        with resources.files("revosc.data").joinpath("thm1_demo.json").open() as fh:
            return CoefficientSpec.from_dict(json.load(fh))
    return load_spec(path)


def _config_hash(spec: CoefficientSpec) -> str:
    return sha256_hex(canonical_bytes(canonical_dict(spec)))


def cmd_validate(args) -> int:
    spec = _load_config(args.config)
    report = validate_spec(spec)
    if report.ok:
        print(canonical_json(spec))
        return EXIT_OK
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_INVALID_SPEC


def cmd_period(args) -> int:
    t0 = compute_period(args.n)
    print(f"{t0:.15f}")
    if args.table:
        g = get_trig(args.n)
        ts = np.linspace(0.0, g.T0, args.points)
        with open(args.table, "w", encoding="utf-8") as fh:
            fh.write("t,S,C\n")
            for t in ts:
                s, c = g.eval(t)
                fh.write(f"{t:.17g},{s:.17g},{c:.17g}\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _load_config(args.config)
    if not validate_spec(spec).ok:
        print("invalid spec", file=sys.stderr)
        return EXIT_INVALID_SPEC
    cfg = SystemConfig(spec=spec, A=args.A, rescaled=args.A != 1.0)
    icfg = IntegratorConfig(rel_tol=args.tol, abs_tol=args.tol)
    try:
        traj = integrate(cfg, icfg, State(args.x0, args.v0, 0.0), args.t1)
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if traj.status == "escaped":
        print(f"orbit escaped at t={traj.escape_time:.6g}", file=sys.stderr)
    export_csv(traj, args.out, n_samples=args.samples)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_aa(args) -> int:
    g = get_trig(args.n)
    k = AAConstants.from_trig(g)
    if args.inverse:
        x, y = from_action_angle(k, g, args.rho, args.theta)
        print(json.dumps({"x": x, "y": y}))
    else:
        p = to_action_angle(k, g, args.x, args.y)
        print(json.dumps({"rho": p.rho, "theta": p.theta}))
    return EXIT_OK


def cmd_normalform_verify(args) -> int:
    spec = _load_config(args.config)
    if not validate_spec(spec).ok:
        print("invalid spec", file=sys.stderr)
        return EXIT_INVALID_SPEC
    a_values = [float(a) for a in args.A_list.split(",")]
    g = get_trig(spec.n)
    k = AAConstants.from_trig(g)
    cfg = SystemConfig(spec=spec, A=a_values[0], rescaled=True)
    pt = PerturbationTerms.build(cfg, k, g)
    targets = {"v1": -1.0, "f1": spec.n - 1.0, "f2": -1.0,
               "g1": spec.n - 1.0, "g2": -1.0}
    try:
        report = order_scaling(pt, args.term, AnnulusDomain(args.s),
                               a_values, gamma_expected=targets[args.term])
    except Exception as exc:          # noqa: BLE001 - surfaced as exit code
        print(f"scaling sweep failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    env = ReportEnvelope(payload_kind="order-scaling", payload=report.to_dict(),
                         config_sha256=_config_hash(spec))
    write_report(env, args.out)
    print(f"slope={report.fitted_slope:+.3f} expected={report.gamma_expected:+.3f}"
          f" -> {args.out}")
    return EXIT_OK


def _build_pmap(spec: CoefficientSpec, A: float, tol: float) -> PoincareMap:
    g = get_trig(spec.n)
    k = AAConstants.from_trig(g)
    cfg = SystemConfig(spec=spec, A=A, rescaled=True)
    icfg = IntegratorConfig(rel_tol=tol, abs_tol=tol)
    return PoincareMap(cfg=cfg, k=k, g=g, icfg=icfg)


def cmd_poincare_atlas(args) -> int:
    spec = _load_config(args.config)
    if not validate_spec(spec).ok:
        print("invalid spec", file=sys.stderr)
        return EXIT_INVALID_SPEC
    lam_lo, lam_hi = (float(v) for v in args.lambda_range.split(":"))
    pmap = _build_pmap(spec, args.A, args.tol)
    dc = DiophantineClass(K=args.K if args.K is not None
                          else 1e-3 * pmap._dAn, epsilon=1.0, Q_max=1000)
    try:
        rows, _ = atlas(pmap, lam_lo, lam_hi, args.samples, args.iters, dc,
                        drift_tol=args.drift_tol)
    except Exception as exc:          # noqa: BLE001
        print(f"atlas failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_atlas_csv(rows, args.out)
    n_cand = sum(1 for r in rows if r.status == "invariant-candidate" and r.diophantine_ok)
    print(f"{n_cand} invariant-candidates among {len(rows)} radii -> {args.out}")
    return EXIT_OK


def cmd_rotation(args) -> int:
    spec = _load_config(args.config)
    if not validate_spec(spec).ok:
        print("invalid spec", file=sys.stderr)
        return EXIT_INVALID_SPEC
    pmap = _build_pmap(spec, args.A, args.tol)
    try:
        orbit = iterate(pmap, AAPoint(rho=args.rho0, theta=args.theta0), args.iters)
        est = rotation_number(orbit)
    except Exception as exc:          # noqa: BLE001
        print(f"rotation estimate failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(est.to_dict()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _load_config(args.config)
    if not validate_spec(spec).ok:
        print("invalid spec", file=sys.stderr)
        return EXIT_INVALID_SPEC
    x0, v0 = grid_initial_conditions(
        (-args.box, args.box), (-args.box, args.box), args.nx, args.nv,
        max_norm=args.max_norm, min_norm=0.05, limit=args.limit,
        jitter=args.jitter, seed=args.seed)
    sc = SweepConfig(spec=spec, horizon=args.T, x0=x0, v0=v0,
                     rel_tol=args.tol, abs_tol=args.tol)
    try:
        report = boundedness_sweep(sc)
    except Exception as exc:          # noqa: BLE001
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_sweep_csv(report, args.out)
    env = ReportEnvelope(payload_kind="sweep", payload=report.to_payload(),
                         config_sha256=_config_hash(spec))
    write_report(env, args.out + ".json")
    print(f"{len(report.orbits)} orbits, {report.n_escaped} escaped, "
          f"max sup-ratio {report.max_ratio:.4g} -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="revosc",
                                description="reversible oscillator numerics")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True,
                            help="spec JSON path, or 'demo' for the stock system")
        sp.add_argument("--tol", type=float, default=1e-12)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("validate", help="validate a spec and echo canonical form")
    sp.add_argument("--config", required=True)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("period", help="print the generalized trig period T0")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--table", default=None, help="optional CSV dump of (t,S,C)")
    sp.add_argument("--points", type=int, default=2001)
    sp.set_defaults(fn=cmd_period)

    sp = sub.add_parser("simulate", help="integrate one orbit and export CSV")
    add_common(sp)
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--v0", type=float, required=True)
    sp.add_argument("--t1", type=float, required=True)
    sp.add_argument("--A", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("aa", help="action-angle chart in either direction")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--inverse", action="store_true")
    sp.add_argument("--x", type=float, default=0.0)
    sp.add_argument("--y", type=float, default=0.0)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--theta", type=float, default=0.0)
    sp.set_defaults(fn=cmd_aa)

    sp = sub.add_parser("normalform-verify", help="order-estimate scaling sweep")
    add_common(sp)
    sp.add_argument("--A-list", default="16,32,64,128")
    sp.add_argument("--term", choices=["v1", "f1", "f2", "g1", "g2"], required=True)
    sp.add_argument("--s", type=float, default=4.0, help="outer radius of D_s")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_normalform_verify)

    sp = sub.add_parser("poincare-atlas", help="scan radii and classify curves")
    add_common(sp)
    sp.add_argument("--A", type=float, default=64.0)
    sp.add_argument("--lambda-range", default="2:3")
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--iters", type=int, default=10000)
    sp.add_argument("--drift-tol", type=float, default=1e-3)
    sp.add_argument("--K", type=float, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_poincare_atlas)

    sp = sub.add_parser("rotation", help="rotation number of one orbit")
    add_common(sp)
    sp.add_argument("--A", type=float, default=64.0)
    sp.add_argument("--rho0", type=float, required=True)
    sp.add_argument("--theta0", type=float, default=0.0)
    sp.add_argument("--iters", type=int, default=10000)
    sp.set_defaults(fn=cmd_rotation)

    sp = sub.add_parser("sweep", help="boundedness sweep over an IC grid")
    add_common(sp)
    sp.add_argument("--T", type=float, default=1000.0)
    sp.add_argument("--box", type=float, default=5.0)
    sp.add_argument("--nx", type=int, default=12)
    sp.add_argument("--nv", type=int, default=12)
    sp.add_argument("--max-norm", type=float, default=5.0)
    sp.add_argument("--limit", type=int, default=100)
    sp.add_argument("--jitter", type=float, default=0.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_sweep)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_SPEC
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
