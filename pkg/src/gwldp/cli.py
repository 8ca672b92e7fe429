"""Command-line front end.

Exit status: 0 on success, 1 on invalid input, 2 when a computation fails
(no convergence, census over budget, sampler exhausted). Failures print one
JSON object ``{"error": code, "detail": message}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiments as ex
from .enumerator import BudgetExceeded, count_table, enumerate_trees, exact_size_distribution
from .kullback import (
    Diverging,
    DualSettings,
    dual_value,
    kullback_action,
    product_measure,
    relative_entropy,
)
from .model import ModelError, load_model, measure_from_json, measure_to_json, parse_atom_key
from .sampler import (
    Exhausted,
    Overflow,
    RandomSource,
    _acceptance,
    iter_conditioned,
    sample_tilted,
    sample_tilted_conditioned,
    sample_tree,
    tilt,
)
from .spectral import ConvergenceFailure, NonCriticalWarning, analyze

LOG2 = math.log(2.0)


class UsageError(ValueError):
    code = "usage"


class InputError(ValueError):
    code = "invalid_input"


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; that status is reserved here
    def error(self, message):
        raise UsageError(message)


# -- argument types ------------------------------------------------------------


def _int_at_least(lo):
    def parse(s):
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v

    return parse


def _positive_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {s!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {s!r}")
    return v


def parse_sizes(text: str) -> list:
    """``"5,9,13,...,101"`` expands the arithmetic progression set by the first two terms."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    out = []
    try:
        for i, p in enumerate(parts):
            if p in ("...", "…"):
                if len(out) < 2 or i + 1 >= len(parts):
                    raise ValueError
                step = out[-1] - out[-2]
                stop = int(parts[i + 1])
                if step <= 0:
                    raise ValueError
                out.extend(range(out[-1] + step, stop, step))
            else:
                out.append(int(p))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"sizes must be positive integers: {text!r}")
    return sorted(set(out))


def parse_ball(text: str):
    """``l1:R`` (closed L1 ball of radius R) or ``everything``."""
    if text == "everything":
        return ("everything", None)
    kind, _, r = text.partition(":")
    if kind != "l1" or not r:
        raise argparse.ArgumentTypeError(f"bad neighbourhood {text!r}; expected l1:R or everything")
    return ("l1", _positive_float(r))


# -- io ------------------------------------------------------------------------


def _clean(x):
    """JSON-safe copy: infinities become strings, numpy scalars become Python."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        if math.isnan(x):
            return None
        return "inf" if x > 0 else "-inf"
    return x


def _dumps(obj, indent=2) -> str:
    return json.dumps(_clean(obj), indent=indent, ensure_ascii=False, allow_nan=False)


def _write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([_clean(v) for v in row])
    return buf.getvalue()


def _emit(obj, out):
    text = _dumps(obj) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        _write_text(out, text)


def _emit_report(report, out, json_obj=None):
    """Report as JSON and CSV; ``out`` picks the primary file, the sibling gets the other."""
    json_obj = report.to_json() if json_obj is None else json_obj
    if out is None:
        _emit(json_obj, None)
        return
    out = Path(out)
    if out.suffix.lower() == ".csv":
        csv_path, json_path = out, out.with_suffix(".json")
    else:
        json_path, csv_path = out, out.with_suffix(".csv")
    _write_text(json_path, _dumps(json_obj) + "\n")
    _write_text(csv_path, _csv_text(report.csv_rows()))


def _jsonl(lines, out):
    text = "".join(json.dumps(_clean(x), separators=(",", ":"), ensure_ascii=False) + "\n" for x in lines)
    if out is None:
        sys.stdout.write(text)
    else:
        _write_text(out, text)


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{what} file is not valid JSON: {e}") from None


class ModelNotFound(InputError):
    code = "model_not_found"


def _model(args):
    try:
        return load_model(args.model)
    except FileNotFoundError:
        raise ModelNotFound(f"no such model file: {args.model}") from None
    except json.JSONDecodeError as e:
        raise ModelError(f"model file is not valid JSON: {e}") from None


def _pi(model):
    return np.array(analyze(model).eigenvector)


def _measure(source, model, pi):
    """A measure file of ``"(a|c)": mass`` entries, or the literal ``product``."""
    if source == "product":
        return product_measure(pi, model)
    raw = _read_json(source, "measure")
    if not isinstance(raw, dict):
        raise InputError("measure file must be an object of '(a|c)': mass entries")
    try:
        rho = measure_from_json(raw)
    except ValueError as e:
        raise InputError(str(e)) from None
    if abs(rho.total() - 1.0) > 1e-9:
        raise InputError(f"measure has total mass {rho.total()!r}, expected 1")
    return rho


def _test_function(path):
    raw = _read_json(path, "test function")
    if not isinstance(raw, dict):
        raise InputError("test function file must be an object of '(a|c)': value entries")
    try:
        return {parse_atom_key(k): float(v) for k, v in raw.items()}
    except ValueError as e:
        raise InputError(str(e)) from None


def _dual_settings(args) -> DualSettings:
    return DualSettings(tol=args.dual_tol, max_iter=args.dual_max_iter, ceiling=args.dual_ceiling)


def _unit(args) -> float:
    return LOG2 if getattr(args, "bits", False) else 1.0


def _neighbourhood(ball, center):
    kind, r = ball
    return ex.Everything() if kind == "everything" else ex.L1Ball(center, r)


# -- commands ------------------------------------------------------------------


def cmd_analyze(args):
    _emit(analyze(_model(args), band=args.band).to_json(), args.out)


def cmd_rate(args):
    model = _model(args)
    pi = _pi(model)
    res = kullback_action(pi, model, _measure(args.rho, model, pi), args.gate_tol)
    out = res.to_json()
    if res.finite:
        out["value"] = res.value / _unit(args)
    out["unit"] = "bits" if args.bits else "nats"
    _emit(out, args.out)


def cmd_dual(args):
    model = _model(args)
    pi = _pi(model)
    rho = _measure(args.rho, model, pi)
    unit = _unit(args)
    sol = dual_value(pi, model, rho, _dual_settings(args))
    gated = kullback_action(pi, model, rho, args.gate_tol)
    dual = sol.to_json()
    dual["value"] = sol.value / unit
    kull = gated.to_json()
    if gated.finite:
        kull["value"] = gated.value / unit
    _emit(
        {
            "dual": dual,
            "relative_entropy": relative_entropy(rho, product_measure(pi, model)) / unit,
            "kullback": kull,
            "unit": "bits" if args.bits else "nats",
        },
        args.out,
    )


def cmd_sample(args):
    model = _model(args)
    rng = RandomSource(args.seed)
    if args.n is not None:
        trees = iter_conditioned(model, args.n, rng, args.count, args.max_attempts)
        lines = ({"tree": t.to_nested(), "size": len(t)} for t in trees)
    else:
        lines = (_plain_line(sample_tree(model, rng, args.cap)) for _ in range(args.count))
    _jsonl(list(lines), args.out)


def _plain_line(draw):
    if isinstance(draw, Overflow):
        return {"tree": None, "size": None, "overflow": draw.cap}
    return {"tree": draw.to_nested(), "size": len(draw)}


def cmd_tilt_sample(args):
    model = _model(args)
    tilted = tilt(model, _test_function(args.g), args.root_law)
    rng = RandomSource(args.seed)
    lines = []
    if args.n is not None:
        q = _acceptance(tilted.model, args.n)
        for _ in range(args.count):
            w = sample_tilted_conditioned(tilted, args.n, rng, args.max_attempts, q=q)
            lines.append({"tree": w.tree.to_nested(), "size": len(w.tree), "log_weight": w.log_weight})
    else:
        for _ in range(args.count):
            w = sample_tilted(tilted, rng, args.cap)
            if isinstance(w, Overflow):
                lines.append({"tree": None, "size": None, "log_weight": None, "overflow": w.cap})
            else:
                lines.append({"tree": w.tree.to_nested(), "size": len(w.tree), "log_weight": w.log_weight})
    _jsonl(lines, args.out)


def cmd_enumerate(args):
    model = _model(args)
    census = enumerate_trees(model, args.n)
    order = model.support()
    _jsonl(
        (
            {"tree": e.tree.to_nested(), "probability": e.probability, "measure": measure_to_json(e.measure, order)}
            for e in census.entries
        ),
        args.out,
    )


def cmd_count(args):
    model = _model(args)
    counts = count_table(model, args.n_max)
    q = exact_size_distribution(model, args.n_max).q
    rows = [("n", "count", "q_n")] + [(n, counts[n], repr(float(q[n]))) for n in range(1, args.n_max + 1)]
    text = _csv_text(rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write_text(args.out, text)


def cmd_verify_lldp(args):
    model = _model(args)
    pi = _pi(model)
    rho = _measure(args.rho, model, pi)
    rep = ex.verify_lldp(
        model,
        rho,
        _neighbourhood(args.ball, rho),
        args.sizes,
        seed=args.seed,
        draws=args.draws,
        exact_max_n=args.exact_max_n,
        residual_tol=args.residual_tol,
        dual=_dual_settings(args),
    )
    _emit_report(rep, args.out)


def cmd_verify_mcmillan(args):
    model = _model(args)
    sizes = args.sizes if args.sizes is not None else range(1, args.n_max + 1)
    rep = ex.verify_mcmillan(model, sizes)
    unit = _unit(args)
    if unit != 1.0:
        rep.target /= unit
        for r in rep.rows:
            for k in ("log_count", "slope"):
                if r.get(k) is not None:
                    r[k] /= unit
    obj = rep.to_json()
    obj["unit"] = "bits" if args.bits else "nats"
    _emit_report(rep, args.out, obj)


class _DualityReport:
    columns = ("trials", "max_gap", "mean_gap", "off_support_agree", "gradient_max_rel_error")

    def __init__(self, summary):
        self.summary = summary

    def to_json(self):
        return self.summary

    def csv_rows(self):
        yield list(self.columns)
        yield [self.summary.get(k) for k in self.columns]


def cmd_verify_duality(args):
    summary = ex.verify_duality(
        _model(args), args.trials, args.seed, args.gradient_points, dual=_dual_settings(args)
    )
    _emit_report(_DualityReport(summary), args.out)


def _cells(path, model, pi):
    raw = _read_json(path, "cells")
    if not isinstance(raw, list) or not raw:
        raise InputError("cells file must be a non-empty list of cells")
    cells = []
    for i, c in enumerate(raw):
        kind = c.get("kind") if isinstance(c, dict) else None
        if kind == "everything":
            cells.append(ex.Everything())
        elif kind == "l1":
            center = c.get("center", "product")
            if center == "product":
                rho = product_measure(pi, model)
            elif isinstance(center, dict):
                rho = measure_from_json(center)
            else:
                raise InputError(f"cell {i}: center must be 'product' or an object")
            try:
                cells.append(ex.L1Ball(rho, float(c["radius"])))
            except (KeyError, TypeError, ValueError) as e:
                raise InputError(f"cell {i}: bad radius ({e})") from None
        else:
            raise InputError(f"cell {i}: kind must be 'l1' or 'everything'")
    return cells


def cmd_verify_ldp(args):
    model = _model(args)
    pi = _pi(model)
    rep = ex.verify_ldp_bounds(
        model,
        _cells(args.cells, model, pi),
        args.sizes,
        seed=args.seed,
        draws=args.draws,
        exact_max_n=args.exact_max_n,
        slack=args.slack,
        dual=_dual_settings(args),
    )
    _emit_report(rep, args.out)


# -- parser --------------------------------------------------------------------


def _add_dual_flags(p):
    d = DualSettings()
    p.add_argument("--dual-tol", type=_positive_float, default=d.tol, help="dual ascent stops at this L1 gradient norm")
    p.add_argument("--dual-max-iter", type=_int_at_least(1), default=d.max_iter, help="dual ascent iteration cap")
    p.add_argument("--dual-ceiling", type=_positive_float, default=d.ceiling, help="dual values above this mean divergence")


def _add_bits(p):
    p.add_argument("--bits", action="store_true", help="report entropies and rates in bits instead of nats")


def _add_mc_flags(p):
    p.add_argument("--draws", type=_int_at_least(2), default=2000, help="importance-sampling draws per size")
    p.add_argument("--exact-max-n", type=_int_at_least(0), default=19, help="largest size evaluated by enumeration")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="gwldp",
        description="Large deviations for empirical offspring measures of multitype Galton-Watson trees.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def command(name, func, help):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--model", required=True, help="model JSON file")
        p.set_defaults(func=func)
        return p

    p = command("analyze", cmd_analyze, "mean matrix, Perron eigenpair and criticality")
    p.add_argument("--band", type=_positive_float, default=1e-9, help="criticality band around eigenvalue 1")
    p.add_argument("--out", help="output JSON file (default stdout)")

    p = command("rate", cmd_rate, "Kullback action J(pi, rho), gated closed form")
    p.add_argument("--rho", required=True, help="measure JSON ('(a|c)': mass) or 'product' for pi (x) K")
    p.add_argument("--gate-tol", type=_positive_float, default=1e-9, help="tolerance of the shift-invariance and marginal gates")
    _add_bits(p)
    p.add_argument("--out", help="output JSON file (default stdout)")

    p = command("dual", cmd_dual, "dual (variational) value of the relative entropy")
    p.add_argument("--rho", required=True, help="measure JSON ('(a|c)': mass) or 'product' for pi (x) K")
    p.add_argument("--gate-tol", type=_positive_float, default=1e-9, help="tolerance of the shift-invariance and marginal gates")
    _add_dual_flags(p)
    _add_bits(p)
    p.add_argument("--out", help="output JSON file (default stdout)")

    for name, func, help in (
        ("sample", cmd_sample, "draw trees, conditioned on size when --n is given"),
        ("tilt-sample", cmd_tilt_sample, "draw trees from an exponentially tilted kernel, with log weights"),
    ):
        p = command(name, func, help)
        if name == "tilt-sample":
            p.add_argument("--g", required=True, help="test function JSON ('(a|c)': value)")
            p.add_argument("--root-law", choices=("base", "pi"), default="base", help="root law of the tilted model")
        p.add_argument("--n", type=_int_at_least(1), help="condition on exactly n vertices")
        p.add_argument("--count", type=_int_at_least(1), required=True, help="number of trees")
        p.add_argument("--seed", type=_int_at_least(0), required=True, help="random seed (required)")
        p.add_argument("--max-attempts", type=_int_at_least(1), help="rejection attempts per tree when --n is given")
        p.add_argument("--cap", type=_int_at_least(1), default=10**6, help="vertex cap for unconditioned draws")
        p.add_argument("--out", help="output JSONL file (default stdout)")

    p = command("enumerate", cmd_enumerate, "every support-consistent planar tree of size n (budget: GWLDP_BUDGET)")
    p.add_argument("--n", type=_int_at_least(1), required=True, help="tree size")
    p.add_argument("--out", help="output JSONL file (default stdout)")

    p = command("count", cmd_count, "tree counts and size probabilities up to n-max")
    p.add_argument("--n-max", type=_int_at_least(1), required=True, help="largest size")
    p.add_argument("--out", help="output CSV file (default stdout)")

    p = command("verify-lldp", cmd_verify_lldp, "finite-n local LDP check on a neighbourhood of rho")
    p.add_argument("--rho", required=True, help="measure JSON ('(a|c)': mass) or 'product' for pi (x) K")
    p.add_argument("--ball", type=parse_ball, default=("l1", 0.2), help="neighbourhood: l1:R or everything")
    p.add_argument("--sizes", type=parse_sizes, required=True, help="sizes, e.g. 5,9,13,...,101")
    p.add_argument("--seed", type=_int_at_least(0), required=True, help="random seed (required)")
    _add_mc_flags(p)
    p.add_argument("--residual-tol", type=_positive_float, default=0.02, help="allowed fit residual")
    _add_dual_flags(p)
    p.add_argument("--out", help="report file; JSON and CSV are both written")

    p = command("verify-mcmillan", cmd_verify_mcmillan, "log-count growth against the entropy exponent")
    p.add_argument("--n-max", type=_int_at_least(2), default=25, help="largest size")
    p.add_argument("--sizes", type=parse_sizes, help="explicit sizes instead of 1..n-max")
    _add_bits(p)
    p.add_argument("--out", help="report file; JSON and CSV are both written")

    p = command("verify-duality", cmd_verify_duality, "dual value against relative entropy on random measures")
    p.add_argument("--trials", type=_int_at_least(1), default=100, help="random measures")
    p.add_argument("--gradient-points", type=_int_at_least(0), default=20, help="finite-difference gradient checks")
    p.add_argument("--seed", type=_int_at_least(0), required=True, help="random seed (required)")
    _add_dual_flags(p)
    p.add_argument("--out", help="report file; JSON and CSV are both written")

    p = command("verify-ldp", cmd_verify_ldp, "LDP bounds over a finite cover of neighbourhoods")
    p.add_argument("--cells", required=True, help='cells JSON: [{"kind": "l1", "center": "product", "radius": 0.1}, ...]')
    p.add_argument("--sizes", type=parse_sizes, required=True, help="sizes, e.g. 5,9,...,19")
    p.add_argument("--seed", type=_int_at_least(0), required=True, help="random seed (required)")
    _add_mc_flags(p)
    p.add_argument("--slack", type=_positive_float, default=0.15, help="lower-bound slack per vertex")
    _add_dual_flags(p)
    p.add_argument("--out", help="report file; JSON and CSV are both written")

    parser.epilog = _flag_index(sub)
    return parser


def _flag_index(sub) -> str:
    lines = ["flags by command:"]
    for name, p in sub.choices.items():
        flags = [a.option_strings[-1] for a in p._actions if a.option_strings and a.dest != "help"]
        lines.append(f"  {name}: {' '.join(flags)}")
    lines += [
        "",
        "environment: GWLDP_BUDGET overrides the enumeration budget (default 10000000 trees).",
        "exit status: 0 success, 1 invalid input, 2 computational failure.",
    ]
    return "\n".join(lines)


COMPUTATIONAL = (ConvergenceFailure, BudgetExceeded, Exhausted, Diverging)


def _fail(code, detail, status):
    sys.stderr.write(json.dumps({"error": code, "detail": detail}) + "\n")
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        with warnings.catch_warnings():
            # criticality is reported in the output (or as not_critical) instead
            warnings.simplefilter("ignore", NonCriticalWarning)
            args.func(args)
    except COMPUTATIONAL as e:
        return _fail(getattr(e, "code", type(e).__name__), str(e), 2)
    except (ValueError, TypeError, OSError) as e:
        # model errors, gates, impossible sizes, unreadable files, bad env values
        code = getattr(e, "code", None) or ("io_error" if isinstance(e, OSError) else "invalid_input")
        return _fail(code, str(e), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
