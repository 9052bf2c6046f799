"""Command line entry points.

Subcommands cover the whole workflow: simulate measurements, run the
distributed estimator or the ADMM baseline, compare the two, report
posterior deviations, self-check a case, and convert published bus/branch
tables into the native case format.  Exit codes: 0 success, 1 solver
non-convergence or failed checks, 2 bad input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, admm, aladin, caseio, central, measurements, partition, posterior, powerflow
from .errors import Diverged, GridestError
from .grid import PowerFlowModel, build_admittance
from .measurements import RegionResidual

DEFAULT_CASE = "ieee30"
DEFAULT_PARTITION = "default4"
DEFAULT_SEED = 7


def _resolve_case(spec: str):
    path = Path(spec)
    if path.exists():
        return caseio.load_case(path)
    return caseio.builtin_case(spec)


def _resolve_partition(spec: str):
    path = Path(spec)
    if path.exists():
        return caseio.load_partition_spec(path)
    return caseio.builtin_partition_spec(spec)


def _meta(args, config: dict) -> dict:
    """Reproducibility header written into every output file."""
    return {
        "tool": f"gridest {__version__}",
        "seed": args.seed,
        "config_hash": caseio.config_hash(config),
    }


def _run_config(args, method: str) -> dict:
    return {
        "method": method,
        "case": args.case,
        "partition": args.partition,
        "seed": args.seed,
        "rho": args.rho,
        "eps": args.eps,
        "max_iter": args.max_iter,
    }


def _prepare(args):
    """Shared setup: case, partition, simulated truth and measurements."""
    case = _resolve_case(args.case)
    _, assignment = _resolve_partition(args.partition)
    part = partition.partition_grid(case, assignment)
    truth = powerflow.solve_power_flow(case).state
    mset = measurements.simulate_measurements(
        case, truth, rng=args.seed,
        measured_lines=partition.internal_line_keys(part),
    )
    return case, part, truth, mset


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    case = _resolve_case(args.case)
    truth = powerflow.solve_power_flow(case).state
    if args.partition is not None:
        _, assignment = _resolve_partition(args.partition)
        part = partition.partition_grid(case, assignment)
        lines = partition.internal_line_keys(part)
    else:
        lines = None
    mset = measurements.simulate_measurements(case, truth, rng=args.seed, measured_lines=lines)
    config = {"method": "simulate", "case": args.case, "partition": args.partition,
              "seed": args.seed}
    path = _out_dir(args) / "measurements.yaml"
    caseio.save_measurements(mset, path, meta=_meta(args, config))
    print(f"wrote {path}")
    return 0


def cmd_estimate(args) -> int:
    case, part, truth, mset = _prepare(args)
    config = aladin.AladinConfig(rho=args.rho, eps=args.eps, max_outer=args.max_iter)
    result = aladin.run_aladin(part, mset, config=config, truth=truth)
    meta = _meta(args, _run_config(args, "aladin"))
    out = _out_dir(args)
    caseio.write_history_csv(out / "aladin_history.csv", result.history, meta=meta)
    formula = aladin.comm_counts(part)
    summary = dict(meta)
    summary.update(
        converged=result.converged,
        iterations=result.iterations,
        final_violation=float(result.final_violation),
        upload_floats=sum(r.upload_floats for r in result.history),
        download_floats=sum(r.download_floats for r in result.history),
        upload_floats_per_iteration_formula=formula.upload_total,
        note=result.note,
    )
    caseio.write_summary(out / "aladin_summary.yaml", summary)
    print(f"wrote {out / 'aladin_history.csv'}")
    print(f"converged={result.converged} iterations={result.iterations} "
          f"violation={result.final_violation:.3e}")
    if not result.converged:
        print(f"estimator did not converge: {result.note}", file=sys.stderr)
        return 1
    return 0


def cmd_admm(args) -> int:
    case, part, truth, mset = _prepare(args)
    config = admm.AdmmConfig(rho=args.rho, tol=args.eps, max_outer=args.max_iter)
    result = admm.run_admm(part, mset, config=config, truth=truth)
    meta = _meta(args, _run_config(args, "admm"))
    out = _out_dir(args)
    caseio.write_history_csv(out / "admm_history.csv", result.history, meta=meta)
    summary = dict(meta)
    summary.update(
        converged=result.converged,
        iterations=result.iterations,
        final_violation=float(result.final_violation),
        note=result.note,
    )
    caseio.write_summary(out / "admm_summary.yaml", summary)
    print(f"wrote {out / 'admm_history.csv'}")
    print(f"converged={result.converged} iterations={result.iterations} "
          f"violation={result.final_violation:.3e}")
    if not result.converged:
        print(f"baseline did not converge: {result.note}", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args) -> int:
    case, part, truth, mset = _prepare(args)
    a_res = aladin.run_aladin(
        part, mset, config=aladin.AladinConfig(rho=args.rho, eps=args.eps), truth=truth)
    b_res = admm.run_admm(
        part, mset, config=admm.AdmmConfig(rho=args.rho, tol=args.eps,
                                           max_outer=args.max_iter), truth=truth)
    meta = _meta(args, _run_config(args, "compare"))
    out = _out_dir(args)
    path = out / "compare.csv"
    rows = ["# " + f"{k}: {v}" for k, v in sorted(meta.items())]
    rows.append("method," + ",".join(caseio.HISTORY_COLUMNS))
    for method, history in (("aladin", a_res.history), ("admm", b_res.history)):
        for rec in history:
            rows.append(method + "," + caseio.history_row(rec))
    path.write_text("\n".join(rows) + "\n")
    print(f"wrote {path}")
    print(f"aladin: converged={a_res.converged} iterations={a_res.iterations}")
    print(f"admm:   converged={b_res.converged} iterations={b_res.iterations}")
    return 0 if (a_res.converged and b_res.converged) else 1


def cmd_posterior(args) -> int:
    case, part, truth, mset = _prepare(args)
    result = aladin.run_aladin(part, mset, truth=truth)
    if not result.converged:
        print(f"estimator did not converge: {result.note}", file=sys.stderr)
        return 1
    report = posterior.analyze(part, mset, result.zs)
    meta = _meta(args, _run_config(args, "posterior"))
    out = _out_dir(args)
    table = posterior.render_table(report)
    header = "".join(f"# {k}: {v}\n" for k, v in sorted(meta.items()))
    (out / "posterior.txt").write_text(header + table + "\n")
    rows = ["# " + f"{k}: {v}" for k, v in sorted(meta.items())]
    rows.append("bus,theta_abs,v_abs,p_abs,q_abs,theta_rel,v_rel,p_rel,q_rel")
    for i, bus_id in enumerate(report.node_ids):
        cells = [str(bus_id)]
        cells += [repr(float(v)) for v in report.abs_std[i]]
        cells += ["" if report.excluded[i, c] else repr(float(report.rel_std[i, c]))
                  for c in range(4)]
        rows.append(",".join(cells))
    avg = ["AVG", "", "", "", ""] + [repr(float(v)) for v in report.averages]
    rows.append(",".join(avg))
    (out / "posterior.csv").write_text("\n".join(rows) + "\n")
    print(table)
    print(f"wrote {out / 'posterior.txt'} and {out / 'posterior.csv'}")
    return 0


def _fd_jacobian(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((fun(x + e) - fun(x - e)) / (2.0 * h))
    return np.column_stack(cols)


def cmd_check(args) -> int:
    case = _resolve_case(args.case)
    rng = np.random.default_rng(args.seed)
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        if not ok:
            failures += 1

    g, b = build_admittance(case)
    rowsum = max(np.abs(g.sum(axis=1)).max(), np.abs(b.sum(axis=1)).max())
    report("admittance row sums", rowsum <= 1e-12, f"max |row sum| = {rowsum:.2e}")

    pf = powerflow.solve_power_flow(case)
    report("power flow", pf.mismatch <= 1e-10,
           f"{pf.iterations} iterations, mismatch {pf.mismatch:.2e}")

    model = PowerFlowModel(case)
    mset = measurements.simulate_measurements(case, pf.state, rng=args.seed)
    residual = RegionResidual(case, mset)
    worst = 0.0
    for _ in range(5):
        x = np.array(pf.state)
        x[0::4] = rng.uniform(-0.3, 0.3, case.n_bus)
        x[1::4] = rng.uniform(0.9, 1.1, case.n_bus)
        for fun, jac in ((model.eval, model.jacobian), (residual.eval, residual.jacobian)):
            an = jac(x)
            fd = _fd_jacobian(fun, x)
            worst = max(worst, np.abs(an - fd).max() / (1.0 + np.abs(an).max()))
    report("analytic jacobians vs finite differences", worst <= 1e-6,
           f"max relative deviation {worst:.2e}")

    if args.partition is not None:
        _, assignment = _resolve_partition(args.partition)
        part = partition.partition_grid(case, assignment)
        dev = partition.merge_check(part)
        report("partition merge round trip", dev <= 1e-12, f"max deviation = {dev:.2e}")
        frags = partition.extend_state(part, pf.state)
        wss = aladin.build_workspaces(part, measurements.simulate_measurements(
            case, pf.state, rng=args.seed,
            measured_lines=partition.internal_line_keys(part)))
        gap = np.zeros(2 * len(part.aux_pairs))
        for ws, frag in zip(wss, frags):
            gap += ws.coupling @ frag
        viol = np.abs(gap).max(initial=0.0)
        report("consensus at the extended power flow state", viol <= 1e-10,
               f"|sum A_i x_i| = {viol:.2e}")

    return 1 if failures else 0


def cmd_convert(args) -> int:
    text = Path(args.tables).read_text()
    case = caseio.convert_tables(text, name=Path(args.output).stem)
    caseio.dump_case(case, args.output)
    print(f"wrote {args.output} ({case.n_bus} buses, {len(case.lines)} lines)")
    return 0


def _add_run_flags(p: argparse.ArgumentParser, max_iter_default: int) -> None:
    p.add_argument("--case", default=DEFAULT_CASE,
                   help="case file path or builtin name (default: %(default)s)")
    p.add_argument("--partition", default=DEFAULT_PARTITION,
                   help="partition file path or builtin name (default: %(default)s)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--rho", type=float, default=1e4)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=max_iter_default, dest="max_iter")
    p.add_argument("--out", default=".", help="output directory (default: current)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridest",
                                     description="distributed grid state estimation toolkit")
    parser.add_argument("--version", action="version", version=f"gridest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one measurement realization")
    p.add_argument("--case", default=DEFAULT_CASE)
    p.add_argument("--partition", default=None,
                   help="restrict line sensors to intra-region lines")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate", help="distributed estimation run")
    _add_run_flags(p, max_iter_default=50)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("admm", help="ADMM baseline run")
    _add_run_flags(p, max_iter_default=200)
    p.set_defaults(fn=cmd_admm)

    p = sub.add_parser("compare", help="run both methods on identical measurements")
    _add_run_flags(p, max_iter_default=200)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("posterior", help="a-posteriori deviation report")
    _add_run_flags(p, max_iter_default=50)
    p.set_defaults(fn=cmd_posterior)

    p = sub.add_parser("check", help="jacobian and invariant self-checks")
    p.add_argument("--case", default=DEFAULT_CASE)
    p.add_argument("--partition", default=DEFAULT_PARTITION)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("convert", help="bus/branch tables to native case file")
    p.add_argument("tables", help="input tables file")
    p.add_argument("output", help="output case file")
    p.set_defaults(fn=cmd_convert)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Diverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GridestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
