"""Command line entry point: ``slidemesh run|convergence|cut-test|version``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import ConfigurationError, OutputError, SlidemeshError
from .harness import (ErrorReport, boundary_flux, conduction_exact, couette_velocity,
                      interface_jump_norm, interface_temperature_jump, l2_domain_error,
                      min_edge_length, run_convergence_study, strip_leakage, taylor_green)
from .io import (build_cut_from_spec, cut_records_csv_text, parse_config, parse_cut_spec,
                 write_csv_report, write_vtk)
from .solver import Solver

CONVERGENCE_CASES = ("tg-steady", "tg-convective", "tg-reference", "conduction", "channel",
                     "annulus")


def _parser():
    p = argparse.ArgumentParser(prog="slidemesh",
                                description="Nitsche-coupled sliding-mesh flow solver")
    p.add_argument("--out", default="out", help="output root directory (default: ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configuration file")
    r.add_argument("config")

    c = sub.add_parser("convergence", help="run a refinement study")
    c.add_argument("--case", required=True, choices=CONVERGENCE_CASES)
    c.add_argument("--levels", type=int, default=5)
    c.add_argument("--alpha", type=float, default=None)

    t = sub.add_parser("cut-test", help="dump cut quadrature of a geometry spec as CSV")
    t.add_argument("spec")

    sub.add_parser("version", help="print the version")
    return p


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {path}: {exc}") from None


def _tg_row(solver, options):
    eta = solver.config.material.eta
    t = solver.state.t
    eu = l2_domain_error(solver.meshes, solver.state.u, lambda x: taylor_green(x, t, eta)[0])
    ep = l2_domain_error(solver.meshes, solver.state.p, lambda x: taylor_green(x, t, eta)[1])
    ju, jp = interface_jump_norm(solver.interfaces, solver.config.interfaces, solver.state)
    return (min_edge_length(solver.meshes), eu, ep, ju, jp)


def _conduction_row(solver, options):
    exact = conduction_exact(options.get("kappa_a", 2.0), options.get("kappa_b", 1.0),
                             options.get("amp", 0.5))
    eT = l2_domain_error(solver.meshes, solver.state.T, exact)
    jT = interface_temperature_jump(solver.interfaces, solver.config.interfaces, solver.state)
    return (min_edge_length(solver.meshes), eT, jT)


def _channel_row(solver, options):
    q_in = -boundary_flux(solver, 0, "inflow")
    q_out = boundary_flux(solver, 1, "outflow")
    ju, jp = interface_jump_norm(solver.interfaces, solver.config.interfaces, solver.state)
    return (min_edge_length(solver.meshes), abs(q_in - q_out) / abs(q_in),
            *strip_leakage(solver), ju, jp)


def _annulus_row(solver, options):
    r1, r2, omega = options.get("r1", 0.5), options.get("r2", 1.0), options.get("omega", 1.0)
    exact = lambda x: couette_velocity(x, r1, r2, omega)  # noqa: E731
    zero = [np.zeros_like(u) for u in solver.state.u]
    rel = (l2_domain_error(solver.meshes, solver.state.u, exact)
           / l2_domain_error(solver.meshes, zero, exact))
    ju, jp = interface_jump_norm(solver.interfaces, solver.config.interfaces, solver.state)
    return (min_edge_length(solver.meshes), rel, ju, jp)


# measured columns written by ``run`` for each case
RUN_ROWS = {
    "tg-steady": (_tg_row, ("h", "err_u_L2", "err_p_L2", "jump_u_L2", "jump_p_L2")),
    "conduction": (_conduction_row, ("h", "err_T_L2", "jump_T_L2")),
    "channel": (_channel_row, ("h", "mass_imbalance", "strip_leak_L2", "strip_leak_rate",
                               "jump_u_L2", "jump_p_L2")),
    "annulus": (_annulus_row, ("h", "rel_err_u_L2", "jump_u_L2", "jump_p_L2")),
}
RUN_ROWS["tg-convective"] = RUN_ROWS["tg-reference"] = RUN_ROWS["tg-steady"]


def cmd_run(args, out=None):
    out = out or sys.stdout
    cfg = parse_config(args.config)
    _ensure_dir(args.out)
    print(cfg.echo(), file=out, end="")
    row_of, columns = RUN_ROWS[cfg.case]
    report = ErrorReport(cfg.case, columns=columns)
    for level in range(1, cfg.levels + 1):
        solver = Solver(cfg.run_config(level), stream=out)
        solver.run()
        if cfg.output["vtk"]:
            mats = [solver.config.material_of(k) for k in range(len(solver.meshes))]
            write_vtk(solver.state, solver.meshes,
                      os.path.join(args.out, f"{cfg.case}_level{level}.vtk"), mats)
        report.rows.append(row_of(solver, cfg.options))
    if cfg.output["csv"]:
        path = write_csv_report(report, os.path.join(args.out, f"{cfg.case}.csv"))
        print(f"wrote {path}", file=out)
    return 0


def cmd_convergence(args, out=None):
    out = out or sys.stdout
    if args.levels < 1:
        raise ConfigurationError("--levels: must be at least 1")
    _ensure_dir(args.out)
    kw = {} if args.alpha is None else {"alpha": args.alpha}
    rep = run_convergence_study(args.case, args.levels, **kw)
    path = write_csv_report(rep, os.path.join(args.out, f"{args.case}.csv"))
    for name, (rate, res) in rep.rates().items():
        print(f"{name}: rate={rate:.4f} fit_residual={res:.2e}", file=out)
    print(f"wrote {path}", file=out)
    return 0


def cmd_cut_test(args, out=None):
    out = out or sys.stdout
    spec = parse_cut_spec(args.spec)
    itf = build_cut_from_spec(spec)
    _ensure_dir(args.out)
    text = cut_records_csv_text(itf)
    path = os.path.join(args.out, "cuts.csv")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None
    print(f"{len(itf.cuts)} cuts, wrote {path}", file=out)
    return 0


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "cut-test": cmd_cut_test}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if args.command == "version":
        print(f"slidemesh {__version__}")
        return 0
    try:
        return COMMANDS[args.command](args)
    except SlidemeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
