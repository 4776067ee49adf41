"""Command-line driver.

Commands: ``estimate`` (fit a model to a CSV), ``check`` (dominance
verdict for a model pair), ``compare`` (exact asymptotic variances on
a population file), ``simulate`` (Monte Carlo grids), and ``table1``
(the standard comparison table). Exit codes: 0 success, 2 invalid
input or arguments, 3 estimation failure (for example a singular
design).

Input CSV layout: header ``a,y,<covariates...>`` with an optional
trailing ``w`` column holding positive replication weights; UTF-8,
``.`` as the decimal separator. Validation errors cite the offending
line, counting the header as line 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .dominance import check_centered, check_known_mean, corollaries, table1
from .estimate import (
    EstimationError,
    FitResult,
    fit_ols,
    fit_poisson_glm,
    fit_weighted,
)
from .model import (
    Dataset,
    Empirical,
    KnownMean,
    ModelSpec,
    format_formula,
    named_spec,
    parse_formula,
)
from .population import (
    asymptotic_variance_centered,
    asymptotic_variance_known_mean,
    population_from_dict,
    solve_population,
    variance_gap_theorem2,
)
from .sim import run_grid, scenario

__all__ = ["main"]

_NAMED = ("anova", "ancova", "anhecova", "did", "ldv")


class CliError(Exception):
    """Invalid input; maps to exit code 2."""


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _parse_model(text: str, covariate_names: list[str]) -> ModelSpec:
    name = text.strip().lower()
    if name in _NAMED:
        return named_spec(name, len(covariate_names))
    try:
        return parse_formula(text, covariate_names)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise CliError(f"{what} must be comma-separated numbers, got {text!r}") from None


def _parse_pis(text: str) -> list[float]:
    """Comma list ("0.3,0.5") or inclusive range ("0.1:0.9:0.1")."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"pi range must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(v) for v in parts)
        except ValueError:
            raise CliError(f"pi range must be numeric, got {text!r}") from None
        if step <= 0 or stop < start:
            raise CliError(f"pi range must increase, got {text!r}")
        vals = [round(v, 12) for v in np.arange(start, stop + step / 2, step)]
    else:
        vals = _parse_float_list(text, "--pis")
    if not vals or not all(0.0 < v < 1.0 for v in vals):
        raise CliError(f"assignment probabilities must lie in (0, 1), got {text!r}")
    return vals


def _read_dataset(path: str) -> tuple[Dataset, list[str]]:
    """Read the input CSV; returns the dataset and covariate names."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CliError(f"{path}: empty file")
        names = [h.strip() for h in header]
        if len(names) < 3 or names[0] != "a" or names[1] != "y":
            got = ",".join(names)
            raise CliError(f"{path}: header must be 'a,y,<covariates...>[,w]', got '{got}'")
        has_w = names[-1] == "w"
        cov_names = names[2 : len(names) - 1 if has_w else len(names)]
        if not cov_names:
            raise CliError(f"{path}: need at least one covariate column")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(v.strip() == "" for v in row):
                continue
            if len(row) != len(names):
                raise CliError(f"{path} line {line}: expected {len(names)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise CliError(f"{path} line {line}: non-numeric value in {row!r}") from None
            if vals[0] not in (0.0, 1.0):
                raise CliError(f"{path} line {line}: a must be 0 or 1, got {row[0]}")
            if has_w and vals[-1] <= 0:
                raise CliError(f"{path} line {line}: weight must be positive, got {row[-1]}")
            rows.append(vals)
    if not rows:
        raise CliError(f"{path}: no data rows")
    arr = np.asarray(rows)
    a, y = arr[:, 0], arr[:, 1]
    x = arr[:, 2 : len(names) - 1] if has_w else arr[:, 2:]
    w = arr[:, -1] if has_w else None
    try:
        data = Dataset(a, x, y, w)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc
    return data, cov_names


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fit_report_text(fit: FitResult, cov_names: list[str]) -> str:
    lines = [
        f"model      {format_formula(fit.spec, cov_names)}",
        f"centering  {_centering_name(fit.spec)}",
        f"n          {fit.n_used}",
        f"ate_hat    {fit.ate_hat:.10g}",
        f"ate_se     {fit.ate_se:.10g}",
    ]
    if not fit.converged:
        lines.append("converged  False")
    lines.append("")
    lines.append(f"{'term':<12}{'estimate':>14}  status")
    lines.append(f"{'intercept':<12}{fit.alpha:>14.6g}  free")
    lines.append(f"{'A':<12}{fit.beta:>14.6g}  free")
    for j, name in enumerate(cov_names):
        status = "free" if fit.spec.gamma[j].is_free else "fixed"
        lines.append(f"{name:<12}{fit.gamma[j]:>14.6g}  {status}")
    for j, name in enumerate(cov_names):
        status = "free" if fit.spec.delta[j].is_free else "fixed"
        lines.append(f"{'A:' + name:<12}{fit.delta[j]:>14.6g}  {status}")
    return "\n".join(lines) + "\n"


def _centering_name(spec: ModelSpec) -> str:
    if isinstance(spec.centering, KnownMean):
        return "known-mean " + ",".join(repr(v) for v in spec.centering.mu)
    return "empirical"


def _fit_report_csv(fit: FitResult, cov_names: list[str]) -> str:
    lines = ["term,value", f"ate_hat,{fit.ate_hat!r}", f"ate_se,{fit.ate_se!r}"]
    lines.append(f"intercept,{fit.alpha!r}")
    lines.append(f"A,{fit.beta!r}")
    for j, name in enumerate(cov_names):
        lines.append(f"{name},{fit.gamma[j]!r}")
    for j, name in enumerate(cov_names):
        lines.append(f"A:{name},{fit.delta[j]!r}")
    return "\n".join(lines) + "\n"


def cmd_estimate(args: argparse.Namespace) -> int:
    data, cov_names = _read_dataset(args.data)
    spec = _parse_model(args.model, cov_names)
    if args.centering == "known-mean":
        if args.mean is None:
            raise CliError("--centering known-mean requires --mean v1,v2,...")
        mu = _parse_float_list(args.mean, "--mean")
        if len(mu) != spec.p:
            raise CliError(f"--mean needs {spec.p} values, got {len(mu)}")
        spec = spec.with_centering(KnownMean(tuple(mu)))
    else:
        spec = spec.with_centering(Empirical())

    pi = args.pi
    if args.estimate_pi:
        if pi is not None:
            raise CliError("--pi and --estimate-pi are mutually exclusive")
        pi = float(data.a.mean())
        print(
            f"warning: estimating pi from the sample treated fraction ({pi:.6g}); "
            "design-based results assume pi is known",
            file=sys.stderr,
        )

    if args.family == "poisson":
        if data.weights is not None:
            raise CliError("poisson fits do not accept a weight column")
        fit = fit_poisson_glm(spec, data)
    elif data.weights is not None:
        fit = fit_weighted(spec, data, hc1=args.hc1)
    else:
        fit = fit_ols(spec, data, hc1=args.hc1)

    if args.format == "json":
        payload = fit.to_dict()
        payload["pi"] = pi
        text = json.dumps(payload, indent=2) + "\n"
    elif args.format == "csv":
        text = _fit_report_csv(fit, cov_names)
    else:
        text = _fit_report_text(fit, cov_names)
    _emit(text, args.out)
    return 0


def _verdict_payload(verdict) -> dict:
    return {
        "verdict": verdict.verdict,
        "theorem": verdict.theorem,
        "centering": verdict.centering,
        "explanation": verdict.explanation,
    }


def cmd_check(args: argparse.Namespace) -> int:
    names = [f"X{j + 1}" for j in range(args.p)]
    spec1 = _parse_model(args.model, names)
    spec2 = _parse_model(args.model2, names)
    try:
        if args.centering == "known-mean":
            verdict = check_known_mean(spec1, spec2, args.pi)
        else:
            verdict = check_centered(spec1, spec2, args.pi)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.format == "json":
        payload = _verdict_payload(verdict)
        payload["model1"] = format_formula(spec1, names)
        payload["model2"] = format_formula(spec2, names)
        payload["pi"] = args.pi
        text = json.dumps(payload, indent=2) + "\n"
    else:
        lines = [
            f"model1     {format_formula(spec1, names)}",
            f"model2     {format_formula(spec2, names)}",
            f"pi         {args.pi:g}",
            f"centering  {verdict.centering}",
            f"verdict    {verdict.verdict}",
            f"condition  {verdict.theorem}",
        ]
        for k, v in verdict.explanation.items():
            lines.append(f"  {k}: {v}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        with open(args.population, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {args.population}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.population}: invalid JSON: {exc}") from exc
    try:
        pop = population_from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise CliError(f"{args.population}: {exc}") from exc
    if args.pi is not None:
        pop = type(pop)(pi=args.pi, moments=pop.moments, sampler=pop.sampler)

    names = [f"X{j + 1}" for j in range(pop.p)]
    spec1 = _parse_model(args.model, names)
    spec2 = _parse_model(args.model2, names)
    if spec1.p != pop.p or spec2.p != pop.p:
        raise CliError(f"population has {pop.p} covariates; models must match")

    sol1 = solve_population(spec1, pop)
    v1 = asymptotic_variance_known_mean(spec1, pop)
    v2 = asymptotic_variance_known_mean(spec2, pop)
    vc1 = asymptotic_variance_centered(spec1, pop)
    vc2 = asymptotic_variance_centered(spec2, pop)
    try:
        gap = variance_gap_theorem2(spec1, spec2, pop)
    except ValueError:
        gap = None
    verdict_km = check_known_mean(spec1, spec2, pop.pi)
    verdict_c = check_centered(spec1, spec2, pop.pi)

    payload = {
        "population": args.population,
        "pi": pop.pi,
        "beta_ate": sol1.beta_ate,
        "model1": format_formula(spec1, names),
        "model2": format_formula(spec2, names),
        "v_known_mean": {"model1": v1, "model2": v2, "gap": v2 - v1},
        "v_centered": {"model1": vc1, "model2": vc2, "gap": vc2 - vc1},
        "theorem2_gap": gap,
        "verdict_known_mean": _verdict_payload(verdict_km),
        "verdict_centered": _verdict_payload(verdict_c),
    }
    if args.format == "json":
        text = json.dumps(payload, indent=2) + "\n"
    else:
        lines = [
            f"population  {args.population} (p={pop.p}, pi={pop.pi:g})",
            f"beta_ate    {sol1.beta_ate:.10g}",
            f"model1      {payload['model1']}",
            f"model2      {payload['model2']}",
            "",
            f"{'':<22}{'model1':>14}{'model2':>14}{'gap(2-1)':>14}",
            f"{'V (known mean)':<22}{v1:>14.8g}{v2:>14.8g}{v2 - v1:>14.8g}",
            f"{'V~ (centered)':<22}{vc1:>14.8g}{vc2:>14.8g}{vc2 - vc1:>14.8g}",
            "",
            f"closed-form centered gap  {'n/a (condition fails)' if gap is None else format(gap, '.8g')}",
            f"verdict (known mean)      {verdict_km.verdict} [{verdict_km.theorem}]",
            f"verdict (centered)        {verdict_c.verdict} [{verdict_c.theorem}]",
        ]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    scn = scenario(args.scenario, n=args.n)
    names = ["X1"]
    if args.models:
        models = [_parse_model(m, names) for m in args.models.split(",") if m.strip()]
        if not models:
            raise CliError("--models is empty")
    else:
        models = [named_spec("ANOVA", 1), named_spec("ANCOVA", 1), named_spec("ANHECOVA", 1)]
    if scn.covariate_assignment:
        if args.pis:
            print(
                f"note: scenario {scn.id} assigns treatment from the covariate; --pis ignored",
                file=sys.stderr,
            )
        pis = None
    else:
        pis = _parse_pis(args.pis) if args.pis else [0.5]
    report = run_grid(scn, models, pis, args.reps, seed=args.seed)
    if args.format == "json":
        text = report.to_json()
    elif args.format == "text":
        widths = (10, 24, 6, 6, 8, 12, 12, 12, 10)
        header = ("scenario", "model", "pi", "n", "reps", "bias", "sd", "mc_se", "fail_rate")
        lines = ["".join(f"{h:<{w}}" for h, w in zip(header, widths))]
        for c in report.cells:
            row = (
                str(c.scenario),
                c.model,
                "" if c.pi is None else f"{c.pi:g}",
                str(c.n),
                str(c.reps),
                f"{c.bias:.6f}",
                f"{c.sd:.6f}",
                f"{c.mc_se:.6f}",
                f"{c.fail_rate:.4f}",
            )
            lines.append("".join(f"{v:<{w}}" for v, w in zip(row, widths)))
        text = "\n".join(lines) + "\n"
    else:
        text = report.to_csv()
    _emit(text, args.out)
    return 0


def cmd_table1(args: argparse.Namespace) -> int:
    rows = table1(args.p, args.pi)
    extra = corollaries(args.pi, args.p)
    if args.format == "json":
        text = json.dumps({"pi": args.pi, "rows": rows, "corollaries": extra}, indent=2) + "\n"
    else:
        lines = [f"pairwise dominance at pi = {args.pi:g} (does model1 dominate model2?)", ""]
        lines.append(f"{'model1':<28}{'model2':<28}{'known mean':<16}{'centered':<16}")
        for r in rows:
            lines.append(
                f"{r['model1']:<28}{r['model2']:<28}{r['known_mean']:<16}{r['empirical']:<16}"
            )
        lines.append("")
        lines.append("named-estimator claims:")
        for r in extra:
            status = "certified" if r["certified"] else "not certified by these conditions"
            lines.append(f"  {r['model1']} vs {r['model2']}: {r['verdict']} ({status})")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linadjust",
        description=(
            "Regression-adjusted average treatment effect estimation for "
            "randomized experiments, with exact variance comparisons and a "
            "seeded simulation harness."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, formats=("text", "csv", "json")) -> None:
        p.add_argument("--format", choices=formats, default=formats[0], help="output format")
        p.add_argument("--out", help="write output to this path instead of stdout")

    p_est = sub.add_parser("estimate", help="fit a model to a CSV dataset")
    p_est.add_argument("--data", required=True, help="CSV with header a,y,<covariates...>[,w]")
    p_est.add_argument("--model", required=True, help="formula like '1+A+X+A:X' or a model name")
    p_est.add_argument(
        "--centering",
        choices=("empirical", "known-mean"),
        default="empirical",
        help="how covariates are centered before fitting",
    )
    p_est.add_argument("--mean", help="comma-separated known covariate means")
    p_est.add_argument("--pi", type=float, help="assignment probability (recorded in output)")
    p_est.add_argument(
        "--estimate-pi",
        action="store_true",
        help="fall back to the sample treated fraction for pi (prints a warning)",
    )
    p_est.add_argument(
        "--family",
        choices=("gaussian", "poisson"),
        default="gaussian",
        help="outcome family; poisson uses a log link and robust errors",
    )
    p_est.add_argument("--hc1", action="store_true", help="small-sample variance scaling")
    add_common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_chk = sub.add_parser("check", help="dominance verdict for an ordered model pair")
    p_chk.add_argument("--model", required=True, help="candidate dominating model")
    p_chk.add_argument("--model2", required=True, help="model being compared against")
    p_chk.add_argument("--pi", type=float, required=True, help="assignment probability")
    p_chk.add_argument(
        "--centering", choices=("empirical", "known-mean"), default="empirical"
    )
    p_chk.add_argument("--p", type=_positive_int, default=1, help="number of covariates")
    add_common(p_chk, formats=("text", "json"))
    p_chk.set_defaults(func=cmd_check)

    p_cmp = sub.add_parser("compare", help="exact asymptotic variances on a population file")
    p_cmp.add_argument("--population", required=True, help="population JSON (moment mode)")
    p_cmp.add_argument("--model", required=True)
    p_cmp.add_argument("--model2", required=True)
    p_cmp.add_argument("--pi", type=float, help="override the file's assignment probability")
    add_common(p_cmp, formats=("text", "json"))
    p_cmp.set_defaults(func=cmd_compare)

    p_sim = sub.add_parser("simulate", help="run a seeded Monte Carlo grid")
    p_sim.add_argument("--scenario", type=int, choices=(1, 2, 3, 4), required=True)
    p_sim.add_argument("--models", help="comma-separated formulas (default: the standard three)")
    p_sim.add_argument("--pis", help="comma list '0.3,0.5' or range '0.1:0.9:0.1'")
    p_sim.add_argument("--reps", type=_positive_int, default=1000)
    p_sim.add_argument("--n", type=_positive_int, default=1000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument(
        "--threads",
        type=_positive_int,
        default=1,
        help="reserved; results are identical for any value",
    )
    add_common(p_sim, formats=("csv", "json", "text"))
    p_sim.set_defaults(func=cmd_simulate)

    p_t1 = sub.add_parser("table1", help="print the standard model-comparison table")
    p_t1.add_argument("--pi", type=float, default=0.3, help="assignment probability")
    p_t1.add_argument("--p", type=_positive_int, default=2, help="number of covariates")
    add_common(p_t1, formats=("text", "json"))
    p_t1.set_defaults(func=cmd_table1)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
