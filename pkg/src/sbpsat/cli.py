"""Command-line interface: ``sbpsat {ops,certify,convergence,robustness,mesh}``.

Every subcommand prints a JSON summary and exits with status 1 if any of its
checks fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from sbpsat import cubature
from sbpsat.harness import (ExperimentSpec, VELOCITIES, run_convergence, run_robustness, write_csv,
                            write_history_csv, write_json)
from sbpsat.operators import build_operator, certify_operator

CONSERVATION_TOL = 1e-11
ENERGY_TOL = 1e-10
RATE_MARGIN = 0.85


def _dump(data) -> None:
    print(json.dumps(data, indent=2, default=float))


def _out_dir(path: str | None) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ops(args) -> int:
    ops = build_operator(args.family, args.p)
    report = certify_operator(ops)
    data = report.as_dict()
    data["num_nodes"] = ops.n
    data["extrapolation_size"] = list(ops.extrapolation_size())
    if args.export:
        ops.save_json(args.export)
        data["exported"] = str(args.export)
    if args.rule_csv:
        cubature.volume_cubature(args.family, args.p).to_csv(args.rule_csv)
    _dump(data)
    return 0 if report.passed else 1


def certify_all() -> tuple[list[dict], bool]:
    rows, ok = [], True
    for family in cubature.FAMILIES:
        for p in cubature.DEGREES:
            rule = cubature.volume_cubature(family, p)
            cub = cubature.certify(rule, rule.exactness_degree)
            observed = cubature.observed_degree(rule)
            rep = certify_operator(build_operator(family, p))
            passed = cub.passed and observed == rule.exactness_degree and rep.passed
            ok &= passed
            rows.append({"family": family, "p": p, "nodes": rule.num_nodes,
                         "degree": rule.exactness_degree, "observed_degree": observed,
                         "moment_error": cub.max_error, "operator": rep.as_dict(), "passed": passed})
    return rows, ok


def cmd_certify(args) -> int:
    rows, ok = certify_all()
    _dump({"passed": ok, "operators": rows})
    return 0 if ok else 1


def cmd_convergence(args) -> int:
    spec = ExperimentSpec.convergence(args.family, args.p, N=args.N, form=args.form,
                                      sat_variant=args.sat, mapping=args.mapping,
                                      cfl_fraction=args.cfl_fraction)
    result = run_convergence(spec)
    gates = {"conservation": all(r.conservation <= CONSERVATION_TOL * abs(r.initial_mass)
                                 for r in result.reports)}
    if args.p >= 2 and len(spec.N) >= 2:
        gates["rate"] = result.l2_rate >= args.p + RATE_MARGIN
    summary = result.summary()
    summary["gates"] = gates
    out = _out_dir(args.out)
    if out:
        stem = f"convergence_{spec.family}_p{spec.p}"
        write_csv(result.reports, out / f"{stem}.csv")
        write_json(summary, out / f"{stem}.json")
    _dump(summary)
    return 0 if all(gates.values()) else 1


def cmd_robustness(args) -> int:
    spec = ExperimentSpec.robustness(args.family, args.p, args.form, N=(args.N,),
                                     mapping=args.mapping, sat_variant=args.sat,
                                     cfl_fraction=args.cfl_fraction)
    spec.final_time = args.final_time
    report = run_robustness(spec)
    gates = {}
    if spec.form == "skew" and spec.sat_variant == "upwind":
        gates["energy_nonincreasing"] = report.status == "ok" and report.max_energy_change <= ENERGY_TOL
    summary = report.summary()
    summary["gates"] = gates
    out = _out_dir(args.out)
    if out:
        stem = f"robustness_{spec.family}_p{spec.p}_{spec.form}"
        write_csv([report], out / f"{stem}.csv")
        write_history_csv(report, out / f"{stem}_energy.csv")
        write_json(summary, out / f"{stem}.json")
    _dump(summary)
    return 0 if all(gates.values()) else 1


def cmd_mesh(args) -> int:
    from sbpsat.divfree import project_field, verify_divergence_free
    from sbpsat.mesh import build_mesh

    ops = build_operator(args.family, args.p)
    mesh = build_mesh(args.N, args.mapping, ops)
    fld = project_field(mesh, ops, VELOCITIES[args.velocity])
    rep = verify_divergence_free(fld, mesh, ops)
    out = _out_dir(args.out)
    if out:
        mesh.save_json(out / "mesh.json")
        fld.to_csv(out / "field.csv", mesh)
    _dump({"elements": mesh.num_elements, "faces": len(mesh.couplings),
           "divergence_residual": rep.max_divergence_residual, "flux_residual": rep.max_flux_residual,
           "passed": rep.passed()})
    return 0 if rep.passed() else 1


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbpsat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def op_args(p):
        p.add_argument("--family", choices=cubature.FAMILIES, required=True)
        p.add_argument("--p", type=int, choices=cubature.DEGREES, required=True)

    p = sub.add_parser("ops", help="build and certify one operator")
    op_args(p)
    p.add_argument("--export", metavar="PATH", help="write the operator as JSON")
    p.add_argument("--rule-csv", metavar="PATH", help="write the volume cubature as CSV")
    p.set_defaults(func=cmd_ops)

    p = sub.add_parser("certify", help="certify all cubature rules and operators")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("convergence", help="mesh-refinement study with the bell initial condition")
    op_args(p)
    p.add_argument("--N", type=_int_list, default=(12, 24, 36))
    p.add_argument("--sat", choices=("upwind", "symmetric"), default="upwind")
    p.add_argument("--form", choices=("skew", "div"), default="skew")
    p.add_argument("--mapping", default="curvilinear")
    p.add_argument("--cfl-fraction", type=float, default=0.5)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("robustness", help="long-time energy study in a confined flow")
    op_args(p)
    p.add_argument("--form", choices=("skew", "div"), default="skew")
    p.add_argument("--sat", choices=("upwind", "symmetric"), default="upwind")
    p.add_argument("--N", type=int, default=12)
    p.add_argument("--mapping", default="identity")
    p.add_argument("--final-time", type=float, default=10.0)
    p.add_argument("--cfl-fraction", type=float, default=0.5)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("mesh", help="build a mesh and projected velocity field; optionally export")
    op_args(p)
    p.add_argument("--N", type=int, default=12)
    p.add_argument("--mapping", default="curvilinear")
    p.add_argument("--velocity", choices=sorted(VELOCITIES), default="confined")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
