"""Command-line front end: analyze / estimate / simulate / serve."""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import chain as chain_mod
from .designs import Bcd, Gud, Kr, Sud, TreatmentGrid, history_from_csv, target_of
from .dist import REGISTRY, get_scenario, scenarios_from_config
from .estimators import (
    AllFromReversal,
    AutoDetect,
    GeomWeighted,
    ResponseTable,
    ReversalOnly,
    Wbar,
    averaging_estimate,
    cir_confidence,
    fit_table,
    tabulate,
)
from .simlab import Scenario, policy_target, run_ensemble, standard_estimators


def parse_rule(text):
    """Design strings: sud | bcd:0.25 | kr:3 | gud:2,0,1 (append '^' for
    above-median orientation)."""
    from .designs import Orientation

    orient = Orientation.BELOW_MEDIAN
    if text.endswith("^"):
        orient = Orientation.ABOVE_MEDIAN
        text = text[:-1]
    head, _, arg = text.partition(":")
    head = head.lower()
    if head == "sud":
        return Sud(orientation=orient)
    if head == "bcd":
        return Bcd(orientation=orient, gamma=float(arg))
    if head == "kr":
        return Kr(orientation=orient, k=int(arg))
    if head == "gud":
        k, a, b = (int(v) for v in arg.split(","))
        return Gud(orientation=orient, k=k, a=a, b=b)
    raise argparse.ArgumentTypeError(f"cannot parse design {text!r}")


def cmd_analyze(args):
    spec = get_scenario(args.scenario)
    rule = parse_rule(args.design)
    levels = spec.grid_levels()
    F = spec.f_values()
    csv_text, summary = chain_mod.analysis_report(rule, F, levels)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"wrote {args.out}")
    else:
        print(csv_text, end="")
    print(summary, end="")
    grid = TreatmentGrid.from_bounds(spec.grid_lo, spec.grid_hi, spec.m)
    tpm = chain_mod.build_tpm(rule, F, levels=levels)
    initial = np.zeros(tpm.dim)
    initial[0] = 1.0
    trials = chain_mod.trials_to_convergence(tpm, initial)
    print(f"trials to 99% mean convergence from l_1: {trials}")
    lam_tpm = (
        chain_mod.kr_marginal_tpm(F, rule.k, levels) if isinstance(rule, Kr) else tpm
    )
    print(f"second eigenvalue: {chain_mod.second_eigenvalue(lam_tpm):.6f}")
    print(f"target Q_p at p={target_of(rule):.4f}: {spec.model.quantile(target_of(rule)):.6f}")
    return 0


def _read_table_or_history(args):
    with open(args.input, encoding="utf-8") as fh:
        text = fh.read()
    header = text.splitlines()[0].strip() if text.strip() else ""
    if header.startswith("trial,"):
        rows = list(csv.DictReader(io.StringIO(text)))
        treatments = [float(r["treatment"]) for r in rows]
        responses = [r["response"] == "yes" for r in rows]
        return treatments, responses, tabulate(zip(treatments, responses))
    rows = list(csv.DictReader(io.StringIO(text)))
    table = ResponseTable(
        levels=tuple(float(r["level"]) for r in rows),
        yes=tuple(int(r["yes"]) for r in rows),
        no=tuple(int(r["no"]) for r in rows),
    )
    return None, None, table


def cmd_estimate(args):
    treatments, responses, table = _read_table_or_history(args)
    percentiles = tuple(float(v) for v in args.percentiles.split(","))
    name = args.estimator
    if name in ("ir", "cir"):
        est = cir_confidence(
            table, args.target, option=args.ci, percentiles=percentiles,
            flavor=name.upper(),
            x_bounds=(min(table.levels), max(table.levels)),
        )
    else:
        if treatments is None:
            print("averaging estimators need a history CSV, not a summary table", file=sys.stderr)
            return 2
        kinds = {
            "wbar": Wbar(args.reversal),
            "w": ReversalOnly(args.reversal),
            "v": AllFromReversal(args.reversal),
            "ad": AutoDetect(),
            "gw": GeomWeighted(rule=parse_rule(args.design) if args.design else None),
        }
        est = averaging_estimate(treatments, responses, kinds[name], percentiles)
    print(f"point: {est.point:.6g}")
    if est.se == est.se:
        print(f"se: {est.se:.6g}")
        print(f"df: {est.df:.6g}")
    for p, v in zip(est.percentiles, est.interval):
        print(f"q{p:g}: {v:.6g}")
    if args.fit_out:
        fit = fit_table(table, flavor="CIR" if name != "ir" else "IR")
        with open(args.fit_out, "w", encoding="utf-8") as fh:
            fh.write("# x y w\n")
            for x, y, w in zip(fit.x, fit.y, fit.w):
                fh.write(f"{float(x)!r} {float(y)!r} {float(w)!r}\n")
        print(f"wrote {args.fit_out}")
    return 0


def parse_policy(text, grid):
    """Design strings plus the estimation-driven rules: ccd:P and crm:P
    (the latter with the default one-parameter model calibrated to the grid)."""
    head, _, arg = text.partition(":")
    if head.lower() == "ccd":
        from .simlab import CcdPolicy

        return CcdPolicy(p=float(arg))
    if head.lower() == "crm":
        from .bayes import default_power_model
        from .simlab import CrmPolicy

        p = float(arg)
        return CrmPolicy(model=default_power_model(grid, p), p=p)
    return parse_rule(text)


def cmd_simulate(args):
    if args.scenario_file:
        with open(args.scenario_file, encoding="utf-8") as fh:
            specs = {s.name: s for s in scenarios_from_config(fh.read())}
        spec = specs[args.scenario] if args.scenario else next(iter(specs.values()))
    else:
        spec = get_scenario(args.scenario)
    grid = TreatmentGrid.from_bounds(spec.grid_lo, spec.grid_hi, spec.m)
    rule = parse_policy(args.policy, grid)
    start = args.start or spec.start_level or (spec.m + 1) // 2
    scenario = Scenario(
        model=spec.model, grid=grid, policy=rule, n=args.n,
        start_index=start, N=args.N, seed=args.seed,
    )
    wanted = [e for e in standard_estimators() if e.name in args.estimators.split(",")]
    metrics = run_ensemble(scenario, wanted)
    lines = ["estimator,bias,sd,mse,failures,normalized_mse"]
    for name, em in metrics.estimator_metrics.items():
        lines.append(
            f"{name},{em.bias!r},{em.sd!r},{em.mse!r},{em.failures},"
            f"{metrics.normalized_mse[name]!r}"
        )
    out_text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out_text)
        print(f"wrote {args.out}")
    else:
        print(out_text, end="")
    print(f"scenario: {spec.name}  policy: {args.policy}  n={args.n} N={args.N} seed={args.seed}")
    print(f"true Q_p = {metrics.true_qp:.6g} (p={policy_target(rule):.4f}), "
          f"optimal level {metrics.optimal_index}")
    print(f"gambling proportion at 20 trials: {metrics.gambling_proportion:.3f} "
          f"(correct {metrics.gambling_correct:.3f})")
    if args.runs_out:
        with open(args.runs_out, "w", encoding="utf-8") as fh:
            names = list(metrics.estimator_metrics)
            fh.write("run," + ",".join(names) + "\n")
            for r in range(scenario.N):
                vals = [repr(float(metrics.estimator_metrics[n].estimates[r])) for n in names]
                fh.write(f"{r}," + ",".join(vals) + "\n")
        print(f"wrote {args.runs_out}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir, frontend_dir=args.frontend_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="updown", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="stationary analysis of a design on a scenario")
    a.add_argument("--scenario", required=True, help=f"one of {sorted(REGISTRY)[:4]}...")
    a.add_argument("--design", required=True, help="sud | bcd:G | kr:K | gud:K,A,B")
    a.add_argument("--out", help="write the per-level CSV here")
    a.set_defaults(fn=cmd_analyze)

    e = sub.add_parser("estimate", help="estimate a target quantile from data")
    e.add_argument("input", help="history CSV (trial,...) or table CSV (level,yes,no)")
    e.add_argument("--estimator", default="cir",
                   choices=["wbar", "w", "v", "ad", "gw", "ir", "cir"])
    e.add_argument("--target", type=float, default=0.5)
    e.add_argument("--ci", default="poisson", choices=["poisson", "binomial", "t"])
    e.add_argument("--percentiles", default="0.025,0.975")
    e.add_argument("--reversal", type=int, default=1, help="cutoff reversal for w/v/wbar")
    e.add_argument("--design", help="design string, needed by --estimator gw")
    e.add_argument("--fit-out", help="write the monotone fit as gnuplot-style data")
    e.set_defaults(fn=cmd_estimate)

    s = sub.add_parser("simulate", help="run a seeded ensemble and report metrics")
    s.add_argument("--scenario", help="registry name")
    s.add_argument("--scenario-file", help="plain-text scenario config file")
    s.add_argument("--policy", required=True,
                   help="design string, or ccd:P / crm:P for estimation-driven rules")
    s.add_argument("--estimators", default="v1,w1,ad,cir,ir")
    s.add_argument("--n", type=int, default=30)
    s.add_argument("--N", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--start", type=int, help="start level (1-based)")
    s.add_argument("--out", help="aggregate CSV path")
    s.add_argument("--runs-out", help="per-run CSV path")
    s.set_defaults(fn=cmd_simulate)

    v = sub.add_parser("serve", help="run the live trial-conduct service")
    v.add_argument("--port", type=int, default=8642)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--data-dir", default="./trial-data")
    v.add_argument("--frontend-dir", help="serve a built conductor UI from here")
    v.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
