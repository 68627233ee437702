"""Command-line front end.

Every subcommand builds and validates its inputs before computing anything.
Exit status is 0 on success, 1 on invalid input or unsupported requests and
2 when a numerical routine fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import condition_a, fnr_su, fnr_sd, var_extrema
from .emn import FIGURE_PRESETS, QuadratureConfig, emn_quantity, figure_data, m2_fdr
from .exceptions import AssumptionError, ConvergenceError, DomainError, PrecisionWarning, UnsupportedCaseError
from .mc_oracle import SimConfig, simulate
from .models import MixtureCdf, ModelSpec, parse_alternative
from .precision import MAX_DOUBLE_M, parse_precision
from .stepdown import sd_fdr, sd_power, sd_rejection_pmf
from .stepup import (
    chi_tan_threshold,
    oracle_fdp_threshold,
    su_fdp_cdf,
    su_fdp_moment,
    su_fdr,
    su_power,
    su_rejection_pmf,
)
from .thresholds import Threshold, parse as parse_threshold

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
SIG_DIGITS = 12
PRECISION_ENV = "FDPEXACT_PRECISION"
SWEEPABLE = ("m", "pi0", "rho", "mu", "x", "s", "alpha", "gamma", "eps")


class CliError(DomainError):
    pass


@dataclass
class Table:
    """Result of one run: rows under named columns plus diagnostics."""

    columns: list
    rows: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _pi0(text: str):
    if text == "auto-sqrt":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto-sqrt', got {text!r}") from None


def _sweep(text: str):
    name, _, rng = text.partition("=")
    if name not in SWEEPABLE:
        raise argparse.ArgumentTypeError(f"cannot sweep {name!r}; sweepable: {', '.join(SWEEPABLE)}")
    try:
        start, stop, step = (float(v) for v in rng.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"sweep must look like name=start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"sweep {name}: need step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return name, [round(start + i * step, 12) for i in range(n)]


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser, *, model=True, threshold=True, procedure=True):
    p.add_argument("--format", choices=("csv", "json", "table"), default="csv")
    p.add_argument("--precision", default=os.environ.get(PRECISION_ENV, "double"), help="double | bigfloat[:bits]")
    p.add_argument("--sweep", type=_sweep, action="append", default=[], help="name=start:stop:step (repeatable)")
    p.add_argument("--m", type=int)
    if threshold:
        p.add_argument("--threshold", help="name:params, e.g. linear:0.05 or file:path")
        p.add_argument("--alpha", type=float, help="replaces the threshold's first parameter")
    if procedure:
        p.add_argument("--procedure", type=str.upper, choices=("SU", "SD"), default="SU")
    if model:
        p.add_argument("--model", choices=("indep", "emn"), default="indep")
        p.add_argument("--pi0", type=_pi0)
        p.add_argument("--f1", default=None, help="gaussian:mu | uniform | dirac | constant:eps | zero | file:path")
        p.add_argument("--rho", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--quad", choices=("adaptive_gauss_legendre", "gauss_hermite"), default="adaptive_gauss_legendre")
        p.add_argument("--quad-tol", type=float, default=1e-8)
        p.add_argument("--quad-max-sub", type=int, default=2000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdpexact", description="Exact FDP laws for step-up and step-down procedures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("fdr", "false discovery rate"), ("power", "average power"), ("fnr", "false non-discovery rate")):
        _add_common(sub.add_parser(name, help=help_))
    p = sub.add_parser("fdp-cdf", help="P(FDP <= x), step-up")
    _add_common(p)
    p.add_argument("--x", type=float)
    p = sub.add_parser("fdp-moment", help="E[FDP^s], step-up")
    _add_common(p)
    p.add_argument("--s", type=int)
    _add_common(sub.add_parser("variance", help="Var(FDP), step-up"))
    _add_common(sub.add_parser("rejection-pmf", help="law of the number of rejections"))

    p = sub.add_parser("oracle-threshold", help="threshold controlling P(FDP > alpha) <= gamma")
    _add_common(p, threshold=False, procedure=False)
    p.add_argument("--kind", choices=("oracle", "chi-tan"), default="oracle")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("condition-a", help="check the step-down monotonicity condition on a threshold")
    _add_common(p, model=False, procedure=False)

    p = sub.add_parser("var-extrema", help="extreme linear step-up FDP variance over a class of alternatives")
    _add_common(p, model=False, threshold=False, procedure=False)
    p.add_argument("--alpha", type=float)
    p.add_argument("--pi0", type=_pi0)
    p.add_argument("--family", choices=("F_all", "F_prime", "F_eps"), default="F_all")
    p.add_argument("--which", choices=("min", "max"), default="min")
    p.add_argument("--eps", type=float)

    p = sub.add_parser("m2", help="FDR for two hypotheses under the conditional EMN model, rho in [-1, 1]")
    _add_common(p, model=False)
    p.add_argument("--m0", type=int, choices=(1, 2), default=1)
    p.add_argument("--rho", type=float)
    p.add_argument("--mu", type=float)

    p = sub.add_parser("simulate", help="Monte Carlo estimates with standard errors")
    _add_common(p)
    p.add_argument("--m0", type=int, help="number of true nulls; makes the model conditional")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats", default="fdr", help="comma list of fdr,fnr,power,fdp_cdf,rejection_pmf")
    p.add_argument("--x", type=_float_list, default=[], help="points for fdp_cdf")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("figure", help="curve data for the figure presets")
    p.add_argument("preset", choices=sorted(FIGURE_PRESETS))
    p.add_argument("--format", choices=("csv", "json", "table"), default="csv")
    p.add_argument("--precision", default=os.environ.get(PRECISION_ENV, "double"))
    p.add_argument("--quad", choices=("adaptive_gauss_legendre", "gauss_hermite"), default="adaptive_gauss_legendre")
    p.add_argument("--quad-tol", type=float, default=1e-8)
    p.add_argument("--quad-max-sub", type=int, default=2000)
    return parser


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------


def _need(ns, name: str):
    v = getattr(ns, name, None)
    if v is None:
        raise CliError(f"--{name.replace('_', '-')} is required for '{ns.command}'")
    return v


def _resolve_pi0(ns) -> float:
    pi0 = _need(ns, "pi0")
    if pi0 == "auto-sqrt":
        return 1.0 - 1.0 / math.sqrt(_need(ns, "m"))
    if not 0.0 <= pi0 <= 1.0:
        raise CliError(f"--pi0 must lie in [0, 1], got {pi0}")
    return float(pi0)


def _m(ns) -> int:
    m = _need(ns, "m")
    if m < 1:
        raise CliError(f"--m must be >= 1, got {m}")
    return m


def _threshold(ns) -> Threshold:
    spec = getattr(ns, "threshold", None)
    alpha = getattr(ns, "alpha", None)
    if spec is None:
        raise CliError(f"--threshold is required for '{ns.command}'")
    if alpha is not None and ":" in spec:
        # a swept or explicit --alpha overrides the first threshold parameter
        name, _, rest = spec.partition(":")
        spec = f"{name}:{','.join([repr(alpha)] + rest.split(',')[1:])}"
    try:
        return parse_threshold(spec, _m(ns))
    except DomainError as exc:
        raise CliError(f"--threshold: {exc}") from exc


def _quad(ns) -> QuadratureConfig:
    try:
        return QuadratureConfig(method=ns.quad, abs_tol=ns.quad_tol, max_subdivisions=ns.quad_max_sub)
    except DomainError as exc:
        raise CliError(f"--quad: {exc}") from exc


def _precision(ns):
    try:
        return parse_precision(ns.precision)
    except DomainError as exc:
        raise CliError(f"--precision: {exc}") from exc


@dataclass
class _Model:
    kind: str
    pi0: float
    F1: object = None
    rho: float | None = None
    mu: float | None = None


def _model(ns) -> _Model:
    pi0 = _resolve_pi0(ns)
    if ns.model == "indep":
        if ns.f1 is None:
            raise CliError("--f1 is required for the independent model")
        try:
            F1 = parse_alternative(ns.f1)
        except (DomainError, OSError) as exc:
            raise CliError(f"--f1: {exc}") from exc
        return _Model("indep", pi0, F1=F1)
    rho, mu = _need(ns, "rho"), _need(ns, "mu")
    if not 0.0 <= rho <= 1.0:
        raise CliError(f"--rho must lie in [0, 1] for the EMN model, got {rho}")
    if not mu > 0:
        raise CliError(f"--mu must be positive, got {mu}")
    return _Model("emn", pi0, rho=rho, mu=mu)


# ---------------------------------------------------------------------------
# subcommands; each takes a fully populated namespace and returns a Table
# ---------------------------------------------------------------------------


def _scalar_quantity(ns, kind: str) -> Table:
    t, mod, prec = _threshold(ns), _model(ns), _precision(ns)
    quad = _quad(ns)
    proc = ns.procedure
    extra = {}
    if kind == "fdp_cdf":
        x = _need(ns, "x")
        if not 0.0 < x < 1.0:
            raise CliError(f"--x must lie in (0, 1), got {x}")
        extra["x"] = x
    if kind == "moment":
        s = _need(ns, "s")
        if s < 1:
            raise CliError(f"--s must be >= 1, got {s}")
        extra["s"] = s
    if kind in ("fdp_cdf", "moment", "variance") and proc == "SD":
        raise UnsupportedCaseError(f"'{ns.command}' is only available for step-up procedures")
    if kind in ("power", "fnr") and mod.pi0 >= 1.0:
        raise CliError(f"--pi0 must be < 1 for '{ns.command}'")

    if mod.kind == "emn":
        if kind in ("fnr", "variance"):
            raise UnsupportedCaseError(f"'{ns.command}' is not available under the EMN model")
        value, info = emn_quantity(kind, proc, t, mod.pi0, mod.rho, mod.mu, quad, prec, full_output=True, **extra)
        return Table([kind, "error_estimate"], [[value, info["quadrature_error"]]])

    F1, pi0 = mod.F1, mod.pi0
    if kind == "fdr":
        value = su_fdr(t, pi0, F1, prec) if proc == "SU" else sd_fdr(t, pi0, F1, prec)
    elif kind == "power":
        value = su_power(t, pi0, F1, prec) if proc == "SU" else sd_power(t, pi0, F1, prec)
    elif kind == "fnr":
        value = fnr_su(t, pi0, F1, prec) if proc == "SU" else fnr_sd(t, pi0, F1, prec)
    elif kind == "fdp_cdf":
        value = su_fdp_cdf(t, pi0, F1, extra["x"], prec)
    elif kind == "moment":
        value = su_fdp_moment(t, pi0, F1, extra["s"], prec)
    else:
        value = max(su_fdp_moment(t, pi0, F1, 2, prec) - su_fdr(t, pi0, F1, prec) ** 2, 0.0)
    return Table([kind], [[value]])


def _cmd_rejection_pmf(ns) -> Table:
    t, mod, prec = _threshold(ns), _model(ns), _precision(ns)
    if mod.kind != "indep":
        raise UnsupportedCaseError("rejection-pmf is only available under the independent model")
    G = MixtureCdf(mod.pi0, mod.F1)
    pv = su_rejection_pmf(t, G, prec) if ns.procedure == "SU" else sd_rejection_pmf(t, G, prec)
    diag = {"sum_error": pv.sum_error, "cancellation_error": pv.cancellation_error}
    return Table(["k", "probability"], [[k, p] for k, p in enumerate(pv.probs)], diag)


def _cmd_oracle(ns) -> Table:
    alpha, gamma, m = _need(ns, "alpha"), _need(ns, "gamma"), _m(ns)
    if ns.kind == "chi-tan":
        t = chi_tan_threshold(alpha, gamma, m)
    else:
        mod = _model(ns)
        if mod.kind != "indep":
            raise UnsupportedCaseError("the oracle threshold is defined for the independent model")
        t = oracle_fdp_threshold(alpha, gamma, mod.pi0, mod.F1, m)
    return Table(["k", "threshold"], [[k + 1, v] for k, v in enumerate(t.values)])


def _cmd_condition_a(ns) -> Table:
    t, prec = _threshold(ns), _precision(ns)
    rep = condition_a(t, prec)
    rows = [[k + 1, t.values[k], rep.sequence[k], rep.s_values[k], rep.holds] for k in range(t.m)]
    diag = {"holds": rep.holds, "first_violation": rep.first_violation}
    return Table(["k", "threshold", "sequence", "s_value", "holds"], rows, diag)


def _cmd_var_extrema(ns) -> Table:
    m, alpha = _m(ns), _need(ns, "alpha")
    pi0 = _resolve_pi0(ns)
    if ns.family == "F_eps" and ns.which == "max":
        _need(ns, "eps")
    v = var_extrema(m, alpha, pi0, ns.family, ns.which, ns.eps)
    return Table(["variance", "sd"], [[v, math.sqrt(max(v, 0.0))]])


def _cmd_m2(ns) -> Table:
    if ns.m is None:
        ns.m = 2
    if ns.m != 2:
        raise CliError(f"--m must be 2 for 'm2', got {ns.m}")
    t = _threshold(ns)
    rho, mu = _need(ns, "rho"), _need(ns, "mu")
    if not -1.0 <= rho <= 1.0:
        raise CliError(f"--rho must lie in [-1, 1], got {rho}")
    return Table(["fdr"], [[m2_fdr(ns.procedure, t, ns.m0, rho, mu)]])


def _cmd_simulate(ns) -> Table:
    t = _threshold(ns)
    m = _m(ns)
    stats = tuple(s.strip() for s in ns.stats.split(",") if s.strip())
    if ns.reps < 1:
        raise CliError(f"--reps must be >= 1, got {ns.reps}")
    if ns.m0 is not None:
        if not 0 <= ns.m0 <= m:
            raise CliError(f"--m0 must lie in [0, {m}], got {ns.m0}")
        H = tuple([0] * ns.m0 + [1] * (m - ns.m0))
        kw = {"H": H}
        kind = f"{ns.model}_cond"
    else:
        kw = {"pi0": _resolve_pi0(ns)}
        kind = f"{ns.model}_uncond"
    if ns.model == "indep":
        if ns.f1 is None:
            raise CliError("--f1 is required for the independent model")
        kw["F1"] = parse_alternative(ns.f1)
    else:
        kw["rho"], kw["mu"] = _need(ns, "rho"), _need(ns, "mu")
    try:
        model = ModelSpec(kind, m, **kw)
        cfg = SimConfig(model, t, ns.procedure, ns.reps, ns.seed, stats, tuple(ns.x), workers=ns.workers)
    except DomainError as exc:
        raise CliError(str(exc)) from exc
    res = simulate(cfg)
    rows = [[name, res.estimates[name], res.std_errors[name]] for name in res.estimates]
    if res.rejection_pmf is not None and "rejection_pmf" in stats:
        rows += [[f"rejection_pmf[{k}]", p, s] for k, (p, s) in enumerate(zip(res.rejection_pmf, res.rejection_pmf_se))]
    for k, (probs, se, _) in res.conditional_false_pmf.items():
        rows += [[f"false_count[{j}|{k}]", p, e] for j, (p, e) in enumerate(zip(probs, se))]
    return Table(["statistic", "estimate", "std_error"], rows, {"replications": ns.reps, "seed": ns.seed})


def _cmd_figure(ns) -> Table:
    cols, rows = figure_data(ns.preset, _quad(ns), _precision(ns))
    return Table(list(cols), [list(r) for r in rows], {"preset": FIGURE_PRESETS[ns.preset]["description"]})


_COMMANDS = {
    "fdr": lambda ns: _scalar_quantity(ns, "fdr"),
    "power": lambda ns: _scalar_quantity(ns, "power"),
    "fnr": lambda ns: _scalar_quantity(ns, "fnr"),
    "fdp-cdf": lambda ns: _scalar_quantity(ns, "fdp_cdf"),
    "fdp-moment": lambda ns: _scalar_quantity(ns, "moment"),
    "variance": lambda ns: _scalar_quantity(ns, "variance"),
    "rejection-pmf": _cmd_rejection_pmf,
    "oracle-threshold": _cmd_oracle,
    "condition-a": _cmd_condition_a,
    "var-extrema": _cmd_var_extrema,
    "m2": _cmd_m2,
    "simulate": _cmd_simulate,
    "figure": _cmd_figure,
}


def _expand(ns) -> list:
    """One namespace per point of the sweep grid (cartesian product, in order given)."""
    sweeps = getattr(ns, "sweep", []) or []
    points = [dict()]
    for name, values in sweeps:
        if not hasattr(ns, name):
            raise CliError(f"--sweep {name}: '{ns.command}' has no parameter {name!r}")
        points = [dict(p, **{name: v}) for p in points for v in values]
    out = []
    for p in points:
        clone = argparse.Namespace(**vars(ns))
        for k, v in p.items():
            setattr(clone, k, int(v) if k in ("m", "s") else v)
        out.append((p, clone))
    return out


def run(ns) -> Table:
    """Validate every sweep point, then compute; returns one merged Table."""
    handler = _COMMANDS[ns.command]
    points = _expand(ns)
    # validate all points up front so bad input never costs computation
    for _, clone in points:
        _validate(clone)
    merged = None
    warns = []
    for params, clone in points:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table = handler(clone)
        warns += [str(w.message) for w in caught if issubclass(w.category, (PrecisionWarning, UserWarning))]
        if merged is None:
            merged = Table(list(params) + table.columns, [], {})
            if not params:
                merged.diagnostics = table.diagnostics
        merged.rows += [list(params.values()) + r for r in table.rows]
        if params:
            merged.diagnostics.setdefault("per_point", []).append({"point": params, **table.diagnostics})
    merged.diagnostics["warnings"] = sorted(set(warns))
    return merged


def _validate(ns):
    if getattr(ns, "m", None) is not None and ns.m < 1:
        raise CliError(f"--m must be >= 1, got {ns.m}")
    if ns.command != "figure":
        prec = _precision(ns)
        m = getattr(ns, "m", None)
        if m is not None and prec.is_double and m > MAX_DOUBLE_M and ns.command not in ("simulate", "var-extrema"):
            raise CliError(f"--m={m} exceeds {MAX_DOUBLE_M} in double precision; pass --precision bigfloat[:bits]")
    if hasattr(ns, "threshold") and ns.command != "m2":
        _threshold(ns)
    if getattr(ns, "model", None) is not None and ns.command not in ("simulate", "oracle-threshold"):
        _model(ns)
    if ns.command == "figure":
        _quad(ns)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return f"{float(v):.{SIG_DIGITS}g}"
    if v is None:
        return ""
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.{SIG_DIGITS}g}")
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def _inputs(ns) -> dict:
    skip = {"format", "sweep"}
    d = {k: v for k, v in vars(ns).items() if k not in skip and v is not None}
    if getattr(ns, "sweep", None):
        d["sweep"] = {name: values for name, values in ns.sweep}
    return d


def render(table: Table, ns) -> str:
    if ns.format == "json":
        doc = {
            "command": ns.command,
            "inputs": _json_value(_inputs(ns)),
            "outputs": {"columns": table.columns, "rows": _json_value(table.rows)},
            "diagnostics": _json_value(table.diagnostics),
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    cells = [[_fmt(v) for v in r] for r in table.rows]
    if ns.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.columns)
        w.writerows(cells)
        return buf.getvalue()
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(table.columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(table.columns, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage; usage errors are input errors here
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        table = run(ns)
    except ConvergenceError as exc:
        print(f"fdpexact: numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, AssumptionError, UnsupportedCaseError, OSError) as exc:
        print(f"fdpexact: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for w in table.diagnostics.get("warnings", []):
        if ns.format != "json":
            print(f"fdpexact: warning: {w}", file=sys.stderr)
    sys.stdout.write(render(table, ns))
    return EXIT_OK
