"""Command-line interface: ``selbias analyze | check | simulate | report``.

Exit codes: 0 success, 1 data/model/graph errors, 2 usage errors, 3 a
checked criterion fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .criteria import CRITERIA, enumerate_sets, run_criterion
from .data import Roles, read_csv
from .errors import ConfigError, FormulaError, SelbiasError
from .estimators import FittedPropensity, KnownProbability
from .formula import parse_formula
from .glm import fit_logistic
from .graph import read_graph
from .inference import AteEstimate, bootstrap_gcomp, crude_hc0, sandwich
from .sim import CASES, METRICS, Dgp, SimConfig, SimSummary, run_study, summaries_csv

__all__ = ["main", "AnalysisReport", "build_parser"]

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_FAILS = 0, 1, 2, 3
ESTIMATOR_ORDER = ("crude", "gcomp", "ht", "hajek")


class UsageError(Exception):
    pass


@dataclass
class AnalysisReport:
    estimates: list
    models: dict
    dataset: dict
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "estimates": [e.to_dict() for e in self.estimates],
            "models": self.models,
            "dataset": self.dataset,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "AnalysisReport":
        return cls([AteEstimate.from_dict(e) for e in payload["estimates"]],
                   payload["models"], payload["dataset"], list(payload.get("warnings", [])))

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "estimate", "se", "ci_lower", "ci_upper", "alpha", "method"])
        for e in self.estimates:
            w.writerow([e.estimator, repr(e.estimate), repr(e.se), repr(e.ci[0]),
                        repr(e.ci[1]), repr(e.alpha), e.method])
        return buf.getvalue()


# -- argument helpers ---------------------------------------------------------

def _names(text: Optional[str]) -> list:
    if text is None:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _keyed(text: str, allowed: Sequence[str], flag: str) -> dict:
    """Parse ``k=v[,v...][,k=v...]``; bare tokens extend the previous key."""
    out: dict = {}
    key = None
    for tok in _names(text):
        if "=" in tok:
            key, _, value = tok.partition("=")
            key = key.strip()
            if key not in allowed:
                raise UsageError(f"{flag}: unknown key {key!r} (expected {', '.join(allowed)})")
            if key in out:
                raise UsageError(f"{flag}: key {key!r} given twice")
            out[key] = [value.strip()] if value.strip() else []
        elif key is None:
            raise UsageError(f"{flag}: expected key=value, got {tok!r}")
        else:
            out[key].append(tok)
    return out


def _probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < p < 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in (0,1), got {text}")
    return p


def _sizes(text: str) -> list:
    try:
        ns = [int(t) for t in _names(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ns or any(n < 2 for n in ns):
        raise argparse.ArgumentTypeError("every sample size must be at least 2")
    return ns


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _quantile(text: str) -> float:
    try:
        q = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < q <= 1.0:
        raise argparse.ArgumentTypeError(f"truncation quantile must lie in (0,1], got {text}")
    return q


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# -- analyze ------------------------------------------------------------------

def cmd_analyze(args) -> int:
    roles_map = _keyed(args.roles, ("a", "y", "s"), "--roles")
    for k in ("a", "y", "s"):
        if len(roles_map.get(k, [])) != 1:
            raise UsageError(f"--roles needs exactly one column for {k}= (got {args.roles!r})")
    a_col, y_col, s_col = (roles_map[k][0] for k in ("a", "y", "s"))

    wanted = list(ESTIMATOR_ORDER) if args.estimator == "all" else [args.estimator]
    needs_ipw = bool({"ht", "hajek"} & set(wanted))
    sel_spec = prop_spec = None
    if args.selection_model is not None:
        sel_spec = parse_formula(args.selection_model)
        if sel_spec.response != s_col:
            raise UsageError(f"--selection-model response must be the selection column {s_col!r}")
    if args.propensity_model is not None:
        prop_spec = parse_formula(args.propensity_model)
        if prop_spec.response != a_col:
            raise UsageError(f"--propensity-model response must be the treatment column {a_col!r}")
    if needs_ipw:
        if sel_spec is None:
            raise UsageError("--selection-model is required for the ht and hajek estimators")
        if args.propensity_known is None and prop_spec is None:
            raise UsageError(
                "the ht and hajek estimators need one of --propensity-known or --propensity-model"
            )

    if args.gcomp_strata is not None:
        strata = _keyed(args.gcomp_strata, ("l", "x"), "--gcomp-strata")
        l_cols, x_cols = strata.get("l", []), strata.get("x", [])
    else:
        # default: stratify on whatever drives selection
        l_cols = list(sel_spec.predictors) if sel_spec is not None else []
        x_cols = []

    complete = list(l_cols) + list(x_cols)
    for spec in (sel_spec, prop_spec):
        if spec is not None:
            complete += list(spec.predictors)
    roles = Roles(a_col, y_col, s_col, post=tuple(l_cols), covariates=tuple(x_cols),
                  complete=tuple(dict.fromkeys(complete)))
    d = read_csv(args.data, roles)

    models: dict = {}
    warnings: list = []
    sel_fit = tm = None
    if needs_ipw:
        sel_fit = fit_logistic(d, sel_spec)
        models["selection"] = {"formula": str(sel_spec),
                               "coefficients": sel_fit.coefficients.tolist(),
                               "iterations": sel_fit.iterations}
        if prop_spec is not None:
            pfit = fit_logistic(d, prop_spec)
            tm = FittedPropensity(pfit)
            models["propensity"] = {"formula": str(prop_spec),
                                    "coefficients": pfit.coefficients.tolist(),
                                    "iterations": pfit.iterations}
        else:
            tm = KnownProbability(args.propensity_known)
            models["propensity"] = {"known": args.propensity_known}
    if "gcomp" in wanted:
        models["gcomp"] = {"l": l_cols, "x": x_cols, "bootstrap": args.bootstrap, "seed": args.seed}

    estimates = []
    for name in wanted:
        if name == "crude":
            e = crude_hc0(d, args.alpha)
        elif name == "gcomp":
            e = bootstrap_gcomp(d, l_cols, x_cols, args.bootstrap, seed=args.seed, alpha=args.alpha)
            if e.failed_replicates:
                warnings.append(f"gcomp: {e.failed_replicates} of {args.bootstrap} bootstrap "
                                "replicates dropped (empty stratum)")
        else:
            e = sandwich(d, name, sel_fit, tm, alpha=args.alpha, truncate=args.truncate_weights)
        estimates.append(e)
    if args.truncate_weights is not None and needs_ipw:
        warnings.append(f"IPW weights truncated at their {args.truncate_weights:g} quantile")

    sel = d.s == 1
    report = AnalysisReport(
        estimates,
        models,
        {"n": d.n, "n_selected": int(sel.sum()),
         "n_treated": int((d.a == 1).sum()), "n_selected_treated": int((sel & (d.a == 1)).sum())},
        warnings,
    )
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)
    return EXIT_OK


# -- check --------------------------------------------------------------------

def cmd_check(args) -> int:
    g = read_graph(args.graph)
    if args.enumerate is not None:
        sets = enumerate_sets(g, args.criterion, args.enumerate)
        payload = {"criterion": args.criterion, "max_size": args.enumerate, "sets": sets}
        _emit(json.dumps(payload, indent=2) + "\n", None)
        return EXIT_OK if sets else EXIT_FAILS
    external = None if args.external is None else _names(args.external)
    verdict = run_criterion(g, args.criterion, _names(args.adjust), external)
    _emit(verdict.to_json(indent=2) + "\n", None)
    return EXIT_OK if verdict.overall else EXIT_FAILS


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.dgp is not None:
        dgp = Dgp.from_json(Path(args.dgp).read_text(encoding="utf-8"))
    else:
        dgp = CASES[args.case]
    estimators = tuple(_names(args.estimators))
    summaries = []
    for n in args.n:
        try:
            cfg = SimConfig(dgp, n, reps=args.reps, estimators=estimators, alpha=args.alpha,
                            seed=args.seed, selection_model=args.selection_model,
                            bootstrap=args.bootstrap, workers=args.workers)
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
        summaries.append(run_study(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"summaries": [s.to_dict() for s in summaries]}
    (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    (out / "summary.csv").write_text(summaries_csv(summaries), encoding="utf-8")
    return EXIT_OK


# -- report -------------------------------------------------------------------

def load_summaries(directory) -> list:
    files = sorted(Path(directory).glob("*.json"))
    if not files:
        raise SelbiasError(f"no summary JSON files in {directory}")
    summaries = []
    for path in files:
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            items = doc["summaries"] if isinstance(doc, dict) and "summaries" in doc else [doc]
            summaries += [SimSummary.from_dict(s) for s in items]
        except (ValueError, KeyError, TypeError) as exc:
            raise SelbiasError(f"{path}: malformed summary ({type(exc).__name__}: {exc})") from None
    return summaries


def tidy_csv(summaries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "n", "estimator", "metric", "value"])
    rank = {m: i for i, m in enumerate(METRICS)}
    rows = [r for s in summaries for r in s.tidy()]
    rows.sort(key=lambda r: (r[0], r[1], r[2], rank[r[3]]))
    for case, n, est, metric, value in rows:
        w.writerow([case, n, est, metric, "" if np.isnan(value) else repr(float(value))])
    return buf.getvalue()


def cmd_report(args) -> int:
    if not Path(args.inp).is_dir():
        raise SelbiasError(f"{args.inp} is not a directory")
    _emit(tidy_csv(load_summaries(args.inp)), args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="selbias", description="Treatment effects under outcome-dependent selection.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="estimate the ATE from a CSV file")
    a.add_argument("--data", required=True)
    a.add_argument("--roles", required=True, help="a=<col>,y=<col>,s=<col>")
    a.add_argument("--estimator", required=True, choices=ESTIMATOR_ORDER + ("all",))
    a.add_argument("--selection-model")
    prop = a.add_mutually_exclusive_group()
    prop.add_argument("--propensity-known", type=_probability)
    prop.add_argument("--propensity-model")
    a.add_argument("--gcomp-strata", help="l=<cols>[,x=<cols>]")
    a.add_argument("--alpha", type=_probability, default=0.05)
    a.add_argument("--bootstrap", type=int, default=1000)
    a.add_argument("--seed", type=_nonneg_int, default=0)
    a.add_argument("--truncate-weights", type=_quantile)
    a.add_argument("--out")
    a.add_argument("--format", choices=("json", "csv"), default="json")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("check", help="check a graphical identification criterion")
    c.add_argument("--graph", required=True)
    c.add_argument("--criterion", required=True, choices=tuple(CRITERIA))
    group = c.add_mutually_exclusive_group()
    group.add_argument("--adjust")
    group.add_argument("--enumerate", type=_nonneg_int, metavar="K")
    c.add_argument("--external")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="run a Monte Carlo study")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--case", choices=tuple(CASES))
    src.add_argument("--dgp")
    s.add_argument("--n", type=_sizes, default=[100, 1000, 10000])
    s.add_argument("--reps", type=_positive_int, default=10000)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--estimators", default="crude,ht,hajek")
    s.add_argument("--alpha", type=_probability, default=0.05)
    s.add_argument("--selection-model")
    s.add_argument("--bootstrap", type=int, default=200)
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="collect summaries into a plot-ready CSV")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except FormulaError as exc:
        # formulas arrive as flags, so a bad one is a usage problem
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SelbiasError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
