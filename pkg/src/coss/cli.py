"""Command-line interface: ``coss {allocate,estimate,simulate,aa-test,bias-diagnostics}``.

Exit codes: 0 success, 2 user or input error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
from pathlib import Path

from coss import theory
from coss.allocation import AllocationPlan, AllocationStrategy, Arm, ExperimentUnit, allocate
from coss.config import PRESETS, REFERENCE_CHECKS, load_config, load_preset
from coss.errors import CossError
from coss.estimation import Method, estimate, fit_cuped
from coss.harness import (
    emit_histogram,
    histogram_csv,
    run_aa_test,
    run_study,
    summary_csv,
    summary_text,
)
from coss.inference import bootstrap_p, bootstrap_variance, t_test
from coss.simgen import DEFAULT_SEED, generate_population


class UserError(Exception):
    pass


def _write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _read_csv(path: str) -> tuple[list[str], list[dict[str, str]], dict[str, str]]:
    """Return (header, rows, metadata) where metadata comes from leading ``# k=v`` lines."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UserError(f"cannot read {path}: {exc.strerror}") from None
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                k, sep, v = tok.partition("=")
                if sep:
                    meta[k] = v
        elif line.strip():
            body.append(line)
    if not body:
        return [], [], meta
    reader = csv.DictReader(io.StringIO("\n".join(body)))
    return list(reader.fieldnames or []), list(reader), meta


def _column(header: list[str], name: str, path: str) -> None:
    if name not in header:
        raise UserError(f"{path}: column {name!r} not found (have: {', '.join(header)})")


def _number(value: str, what: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise UserError(f"{what}: not a number: {value!r}") from None
    if not math.isfinite(v):
        raise UserError(f"{what}: not finite: {value!r}")
    return v


def _integer(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise UserError(f"{what}: not an integer: {value!r}") from None


# -- allocate -----------------------------------------------------------------


def plan_csv(plan: AllocationPlan, covariate: str) -> str:
    buf = io.StringIO()
    buf.write(
        f"# strategy={plan.strategy.value} seed={plan.seed} "
        f"swap_parity={str(plan.swap_parity).lower()} covariate={covariate}\n"
    )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "arm", "pair_index", "rank"])
    for uid, arm, pair, rank in plan.rows():
        writer.writerow([uid, arm, "" if pair is None else pair, "" if rank is None else rank])
    return buf.getvalue()


def cmd_allocate(args) -> int:
    header, rows, _ = _read_csv(args.input)
    if not rows:
        raise UserError("no units")
    _column(header, args.id_column, args.input)
    _column(header, args.covariate, args.input)
    units = []
    for n, row in enumerate(rows, start=2):
        uid = (row[args.id_column] or "").strip()
        if not uid:
            raise UserError(f"{args.input}:{n}: empty id")
        units.append(ExperimentUnit(uid, _number(row[args.covariate], f"{args.input}:{n}: {args.covariate}")))
    plan = allocate(units, args.strategy, args.seed, swap_parity=args.swap_parity)
    text = plan_csv(plan, args.covariate)
    if args.output:
        _write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


# -- estimate -----------------------------------------------------------------


def read_plan(path: str) -> AllocationPlan:
    header, rows, meta = _read_csv(path)
    if not rows:
        raise UserError(f"{path}: no units")
    for col in ("id", "arm"):
        _column(header, col, path)
    try:
        strategy = AllocationStrategy(meta.get("strategy", "rct"))
    except ValueError:
        raise UserError(f"{path}: unknown strategy {meta.get('strategy')!r}") from None
    assignments: dict[str, Arm] = {}
    pair_index: dict[str, int] = {}
    rank: dict[str, int] = {}
    for n, row in enumerate(rows, start=2):
        uid = row["id"]
        if uid in assignments:
            raise UserError(f"{path}:{n}: duplicate id {uid!r}")
        try:
            assignments[uid] = Arm(row["arm"])
        except ValueError:
            raise UserError(f"{path}:{n}: arm must be T or C, got {row['arm']!r}") from None
        if row.get("pair_index"):
            pair_index[uid] = _integer(row["pair_index"], f"{path}:{n}: pair_index")
        if row.get("rank"):
            rank[uid] = _integer(row["rank"], f"{path}:{n}: rank")
    return AllocationPlan(
        assignments,
        strategy,
        _integer(meta.get("seed", "0"), f"{path}: seed"),
        pair_index if strategy is AllocationStrategy.COSS else None,
        rank,
        meta.get("swap_parity", "false") == "true",
    )


def _values(rows, id_col: str, col: str, path: str) -> dict[str, float]:
    return {row[id_col]: _number(row[col], f"{path}: {col} for {row[id_col]!r}") for row in rows if row[col] != ""}


def estimate_report(args) -> list[tuple[str, str]]:
    plan = read_plan(args.allocation)
    header, rows, _ = _read_csv(args.outcomes)
    _column(header, args.id_column, args.outcomes)
    _column(header, args.outcome_column, args.outcomes)
    outcomes = _values(rows, args.id_column, args.outcome_column, args.outcomes)
    missing = [uid for uid in plan.assignments if uid not in outcomes]
    if missing:
        raise UserError(f"{len(missing)} allocated unit(s) have no outcome: {', '.join(missing)}")
    method = Method(args.method)
    covariates = None
    if method is not Method.DIFF_MEANS or args.covariate:
        if not args.covariate:
            raise UserError(f"--method {method.value} needs --covariate")
        _column(header, args.covariate, args.outcomes)
        covariates = _values(rows, args.id_column, args.covariate, args.outcomes)
        missing = [uid for uid in plan.assignments if uid not in covariates]
        if missing:
            raise UserError(f"{len(missing)} allocated unit(s) have no covariate: {', '.join(missing)}")
    outcomes = {uid: outcomes[uid] for uid in plan.assignments}

    est = estimate(plan, outcomes, method, covariates)
    report = [
        ("strategy", plan.strategy.value),
        ("method", method.value),
        ("delta", f"{est.delta:.10g}"),
        ("se", f"{est.se:.10g}"),
        ("n_treat", str(est.n_treat)),
        ("n_control", str(est.n_control)),
    ]
    tested = outcomes
    if method is Method.CUPED:
        adj = fit_cuped({u: covariates[u] for u in plan.assignments}, outcomes)
        report += [("theta", f"{adj.theta:.10g}"), ("r_squared", f"{adj.r_squared:.10g}")]
        adjusted = adj.apply([covariates[u] for u in plan.assignments], [outcomes[u] for u in plan.assignments])
        tested = dict(zip(plan.assignments, map(float, adjusted)))

    paired = args.paired if args.paired is not None else plan.strategy is AllocationStrategy.COSS
    if args.test == "bootstrap":
        res = bootstrap_p(plan, tested, paired, args.resamples, args.seed)
    else:
        res = t_test(plan, tested, paired)
    report += [("test", res.family.value), ("statistic", f"{res.statistic:.10g}"), ("p_value", f"{res.p_value:.10g}")]
    if res.df is not None:
        report.append(("df", f"{res.df:.10g}"))
    if res.n_resamples is not None:
        report.append(("n_resamples", str(res.n_resamples)))
    if args.bootstrap_variance:
        v = bootstrap_variance(plan, covariates, outcomes, method, args.bootstrap_variance, args.seed)
        report.append(("bootstrap_variance", f"{v:.10g}"))
    return report


def _kv_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(report)
    return buf.getvalue()


def cmd_estimate(args) -> int:
    report = estimate_report(args)
    if args.format == "csv":
        sys.stdout.write(_kv_csv(report))
    else:
        width = max(len(k) for k, _ in report)
        sys.stdout.write("".join(f"{k:<{width}}  {v}\n" for k, v in report))
    if args.output:
        _write_atomic(args.output, _kv_csv(report))
    return 0


# -- simulate / aa-test ---------------------------------------------------------


def _study_config(args):
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    changes = {}
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.sample_size is not None:
        changes["sample_size"] = args.sample_size
    if args.seed_given:
        changes["seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def _emit_table(args, summaries, title: str) -> None:
    if args.format == "csv":
        sys.stdout.write(summary_csv(summaries))
    else:
        sys.stdout.write(summary_text(summaries, title))


def cmd_simulate(args) -> int:
    cfg = _study_config(args)
    if cfg.replications == 1:
        print("warning: standard error is undefined with a single replication", file=sys.stderr)
    summaries = run_study(cfg, threads=args.threads)
    name = "config" if args.config else args.preset
    _emit_table(args, summaries, f"{cfg.relationship.value} relationship ({name}, seed {cfg.seed})")

    checks = [] if args.config else REFERENCE_CHECKS.get(args.preset, [])
    lines = []
    if checks and all(s.se_defined for s in summaries.values()):
        for check in checks:
            value, ok = check.evaluate(summaries)
            lines.append(
                f"{'PASS' if ok else 'FAIL'}  {check.label:<18} {value:8.3f}  "
                f"in [{check.lo:.3f}, {check.hi:.3f}]  ref {check.reference}"
            )
        if args.format == "text":
            sys.stdout.write("\nreference comparison\n" + "\n".join(lines) + "\n")

    if args.output:
        out = Path(args.output)
        _write_atomic(out / "summary.csv", summary_csv(summaries))
        for s, r in summaries.items():
            _write_atomic(out / f"hist_{s.value}.csv", histogram_csv(emit_histogram(r.deltas, args.bins)))
        if args.population_csv:
            pop = generate_population(cfg)
            buf = io.StringIO()
            buf.write("id,x,y0,y1\n")
            for u in pop:
                buf.write(f"{u.id},{u.x:.6f},{u.y0:.6f},{u.y1:.6f}\n")
            _write_atomic(out / "population.csv", buf.getvalue())
        if lines:
            _write_atomic(out / "reference_checks.txt", "\n".join(lines) + "\n")
    return 0


def cmd_aa_test(args) -> int:
    cfg = _study_config(args)
    if cfg.replications == 1:
        print("warning: standard error is undefined with a single replication", file=sys.stderr)
    summaries = run_aa_test(cfg, threads=args.threads)
    name = "config" if args.config else args.preset
    _emit_table(args, summaries, f"AA test, mu=0, eps1=eps0 ({name}, seed {cfg.seed})")
    if args.output:
        _write_atomic(Path(args.output) / "aa_summary.csv", summary_csv(summaries))
    return 0


# -- bias-diagnostics ---------------------------------------------------------------


def cmd_bias_diagnostics(args) -> int:
    model = theory.DgpModel("identity", args.slope, args.intercept, args.noise)
    header = ["n_pairs", "rate_uniform", "rate_normal", "rate_shifted_poisson", "bound", "bias", "bias_mc_se", "bias_sqrt_n"]
    rows = []
    for n in args.grid:
        rates = [theory.bias_rate(theory.BiasRateSpec(d, n)) for d in theory.Distribution]
        bound = theory.bias_bound_mc(model, n, args.reps, args.seed)
        bias = theory.empirical_bias(model, n, args.reps, args.seed)
        rows.append([n, *rates, bound.value, bias.value, bias.mc_se, abs(bias.value) * math.sqrt(n)])
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([r[0], *(f"{v:.8g}" for v in r[1:])] for r in rows)
        text = buf.getvalue()
    else:
        text = "".join(f"{h:>21}" for h in header) + "\n"
        text += "".join(f"{r[0]:>21}" + "".join(f"{v:>21.6g}" for v in r[1:]) + "\n" for r in rows)
    sys.stdout.write(text)
    if args.output:
        _write_atomic(args.output, text)
    return 0


# -- parser ---------------------------------------------------------------------


def _grid(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty grid")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--output", default=None, help="output file (directory for simulate/aa-test)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--format", choices=["text", "csv"], default="text", help="stdout format")

    parser = argparse.ArgumentParser(prog="coss", description="Covariate ordered systematic sampling for A/B tests")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("allocate", parents=[common], help="assign units in a CSV to treatment and control")
    p.add_argument("input", help="CSV with an id column and a numeric covariate column")
    p.add_argument("--covariate", required=True, help="covariate column name")
    p.add_argument("--id-column", default="id")
    p.add_argument("--strategy", choices=[s.value for s in AllocationStrategy], default="coss")
    p.add_argument("--swap-parity", action="store_true", help="treat odd covariate ranks instead of even ranks")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("estimate", parents=[common], help="estimate and test a treatment effect")
    p.add_argument("--allocation", required=True, help="CSV written by `coss allocate`")
    p.add_argument("--outcomes", required=True, help="CSV with id and outcome columns")
    p.add_argument("--id-column", default="id")
    p.add_argument("--outcome-column", default="outcome")
    p.add_argument("--covariate", default=None, help="covariate column in the outcomes CSV")
    p.add_argument("--method", choices=[m.value for m in Method], default="diff_means")
    p.add_argument("--cuped", dest="method", action="store_const", const="cuped", help="same as --method cuped")
    p.add_argument("--test", choices=["t", "bootstrap"], default="t")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--paired", dest="paired", action="store_true", default=None)
    g.add_argument("--independent", dest="paired", action="store_false")
    p.add_argument("--resamples", type=int, default=10_000, help="bootstrap resamples for --test bootstrap")
    p.add_argument("--bootstrap-variance", type=int, default=0, metavar="N", help="also report bootstrap variance")
    p.set_defaults(func=cmd_estimate)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "run a Monte Carlo study from a preset or config"),
        ("aa-test", cmd_aa_test, "run a simulated AA test (no effect) for type-1 error"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", choices=PRESETS, default="linear.paper")
        src.add_argument("--config", default=None, help="YAML config file (see presets/schema.md)")
        p.add_argument("--replications", type=int, default=None)
        p.add_argument("--sample-size", type=int, default=None)
        if name == "simulate":
            p.add_argument("--bins", type=int, default=40, help="histogram bins")
            p.add_argument("--population-csv", action="store_true", help="also write population.csv")
        p.set_defaults(func=func)

    p = sub.add_parser("bias-diagnostics", parents=[common], help="bias rates, bias bound and empirical bias")
    p.add_argument("--grid", type=_grid, default=[50, 100, 200, 400], help="comma-separated pair counts")
    p.add_argument("--reps", type=int, default=4000)
    p.add_argument("--slope", type=float, default=2.0)
    p.add_argument("--intercept", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_bias_diagnostics)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = DEFAULT_SEED
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (UserError, CossError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
