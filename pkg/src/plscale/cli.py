"""Command-line interface.

Every verb reads its inputs, prints one JSON document on stdout and exits 0;
validation problems exit 1 and solver failures exit 2, with diagnostics on
stderr only. ``--config FILE`` supplies defaults for any flag (JSON object
keyed by flag name); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from . import allocator, frontier, jointfit, presets, synth
from .errors import FitError, IngestError, UnknownPresetError, ValidationError
from .jointfit import FitSettings, JointLaw
from .powerlaw import PowerLaw, fit_powerlaw
from .presets import ObjectiveLaws
from .runs import ModelConfig, Objective, TrainingRun, flops, load_runs, param_count, runs_to_jsonl

logger = logging.getLogger("plscale")


class UsageError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit code 1, not argparse's 2
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _optional_float(text: str) -> float | None:
    if str(text).lower() in ("none", "inf", "off"):
        return None
    return float(text)


def _read_json(path: str) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None


def _read_runs(path: str, fmt: str | None, objective: str | None) -> list[TrainingRun]:
    try:
        runs = load_runs(path, fmt)
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 text ({exc.reason})") from None
    if objective is not None:
        wanted = Objective.parse(objective)
        runs = [r for r in runs if r.objective == wanted]
    return runs


def _law_from_dict(data: Any, source: str):
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: expected a JSON object")
    if "laws" in data and isinstance(data["laws"], dict):  # isoflops output
        data = data["laws"]
    kind = data.get("kind")
    try:
        if kind == "joint" or (kind is None and {"A", "B", "alpha", "beta"} <= data.keys()):
            return JointLaw.from_dict(data)
        if kind == "objective" or (kind is None and "n_of_c" in data):
            laws = {k: PowerLaw.from_dict(data[k]) for k in ("n_of_c", "d_of_c")}
            for k in ("loss_of_n", "loss_of_d", "loss_of_c"):
                laws[k] = PowerLaw.from_dict(data[k]) if k in data else None
            return laws
        if kind == "powerlaw" or (kind is None and {"coeff", "exponent"} <= data.keys()):
            return PowerLaw.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{source}: malformed law ({exc})") from None
    raise SchemaError(f"{source}: unrecognised law document (kind={kind!r})")


def _resolve_law(args):
    if bool(args.preset) == bool(args.law_file):
        raise UsageError("give exactly one of --preset or --law-file")
    if args.preset:
        return presets.get_preset(args.preset), args.preset
    return _law_from_dict(_read_json(args.law_file), args.law_file), Path(args.law_file).stem


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _write_text(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- verbs


def cmd_presets(args) -> Any:
    return presets.describe_presets()


def cmd_params(args) -> Any:
    _require(args, "d_model", "ffw", "kv", "heads", "layers")
    config = ModelConfig(args.d_model, args.ffw, args.kv, args.heads, args.layers)
    return {
        "n_params": param_count(config, strict=args.strict),
        "heads_consistent": config.heads_consistent,
        "config": vars(config),
    }


def cmd_flops(args) -> Any:
    _require(args, "n_params", "tokens")
    return {"n_params": args.n_params, "tokens": args.tokens, "flops": flops(args.n_params, args.tokens)}


def cmd_fit_powerlaw(args) -> Any:
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"{args.input}: {exc.strerror or exc}") from None
    reader = csv.DictReader(io.StringIO(text))
    points = []
    if reader.fieldnames is not None:
        for col in (args.x_col, args.y_col):
            if col not in reader.fieldnames:
                raise SchemaError(f"{args.input}: missing column {col!r}")
        for lineno, row in enumerate(reader, 2):
            try:
                points.append((float(row[args.x_col]), float(row[args.y_col])))
            except (TypeError, ValueError):
                raise SchemaError(f"{args.input}: line {lineno}: non-numeric value") from None
    law = fit_powerlaw(points, args.x_name or args.x_col, args.y_name or args.y_col)
    return law.to_dict()


def cmd_isoflops(args) -> Any:
    _require(args, "budgets")
    runs = _read_runs(args.runs, args.format, args.objective)
    grouping = frontier.group_isoflops(
        runs,
        args.budgets,
        rel_tol=args.rel_tol,
        max_tokens=args.max_tokens,
        min_steps=args.min_steps,
        smooth_window=args.window,
    )
    groups = frontier.profile_groups(grouping.groups, args.epsilon, workers=args.threads)
    laws = frontier.fit_frontier(groups).to_dict() if len(groups) >= 2 else None
    if args.plot_dir:
        for g in groups:
            _write_text(str(Path(args.plot_dir) / f"isoflops_{g.budget:.3e}.csv"), frontier.group_to_csv(g))
    return {
        "groups": [g.to_dict() for g in groups],
        "excluded": [{"run_id": e.run_id, "reason": e.reason} for e in grouping.excluded],
        "laws": laws,
    }


def cmd_fit_joint(args) -> Any:
    runs = _read_runs(args.runs, args.format, args.objective)
    if args.all_points:
        data = [(r.n_params, p.tokens_elapsed, p.loss) for r in runs for p in r.curve if p.tokens_elapsed > 0]
    else:
        data = [(r.n_params, r.final_tokens, r.final_loss) for r in runs]
    if not data:
        raise ValidationError("no runs to fit")
    settings = FitSettings(
        huber_delta=args.delta,
        max_iters=args.max_iters,
        refine_top=args.refine_top,
        printed_form=args.printed_objective,
        workers=args.threads,
    )
    law = jointfit.fit_joint(data, settings)
    out = law.to_dict()
    g, a, b = jointfit.allocation_exponents(law)
    out["allocation"] = {"G": g, "a": a, "b": b}
    return out


def cmd_allocate(args) -> Any:
    _require(args, "flops")
    law, law_id = _resolve_law(args)
    if isinstance(law, ObjectiveLaws):
        return allocator.allocate(law.n_of_c, law.d_of_c, args.flops, law_id).to_dict()
    if isinstance(law, JointLaw):
        return allocator.allocate_joint(law, args.flops, law_id).to_dict()
    if isinstance(law, dict):
        return allocator.allocate(law["n_of_c"], law["d_of_c"], args.flops, law_id).to_dict()
    raise UsageError(f"law {law_id!r} does not define a compute allocation")


def cmd_allocate_dual(args) -> Any:
    if (args.c_sum is None) == (args.n_params is None):
        raise UsageError("give exactly one of --c-sum or --n-params")
    if args.c_sum is not None:
        return allocator.dual_allocate(args.c_sum).to_dict()
    budget = allocator.dual_budget(args.n_params)
    return {
        "n_params": args.n_params,
        "c_sum": budget.c_sum,
        "c_clm": budget.c_clm,
        "c_mlm": budget.c_mlm,
        "ratio": float(allocator.token_ratio(args.n_params)),
    }


def cmd_plan_transfer(args) -> Any:
    _require(args, "n_params", "total_tokens")
    plan = allocator.plan_transfer(args.n_params, args.total_tokens, cap=args.cap)
    if args.sweep_csv:
        fractions = np.linspace(0.0, 0.5, args.sweep_steps)
        rows = allocator.compute_fraction_sweep(args.n_params, args.total_tokens, fractions)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: repr(v) for k, v in row.items()} for row in rows)
        _write_text(args.sweep_csv, buf.getvalue())
    return plan.to_dict()


def cmd_synth(args) -> Any:
    _require(args, "n_grid")
    law, _ = _resolve_law(args)
    if isinstance(law, ObjectiveLaws):
        law = law.loss_of_c
    if isinstance(law, dict):
        if law.get("loss_of_c") is None:
            raise SchemaError("law file has no loss_of_c law to sample from")
        law = law["loss_of_c"]
    if not isinstance(law, (PowerLaw, JointLaw)):
        raise UsageError("synth needs a loss law (joint surface or compute-loss power law)")
    spec = synth.SynthSpec(
        law=law,
        n_grid=args.n_grid,
        flops_grid=args.flops_grid,
        d_grid=args.d_grid,
        noise_sigma=args.noise,
        seed=args.seed,
        relative_n=args.relative_n,
        curve_points=args.curve_points,
        objective=args.objective or Objective.CLM,
        batch_size=args.batch_size,
    )
    text = runs_to_jsonl(synth.gen_runs(spec))
    if args.output:
        _write_text(args.output, text)
        return {"runs": text.count("\n"), "output": args.output}
    return text


VERBS = {
    "presets": cmd_presets,
    "params": cmd_params,
    "flops": cmd_flops,
    "fit-powerlaw": cmd_fit_powerlaw,
    "fit-joint": cmd_fit_joint,
    "isoflops": cmd_isoflops,
    "allocate": cmd_allocate,
    "allocate-dual": cmd_allocate_dual,
    "plan-transfer": cmd_plan_transfer,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plscale", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag defaults")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for fits and profiling")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="verb", parser_class=_Parser)

    sub.add_parser("presets", help="list built-in laws")

    p = sub.add_parser("params", help="non-embedding parameter count of a transformer config")
    p.add_argument("--d-model", type=int)
    p.add_argument("--ffw", type=int)
    p.add_argument("--kv", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--strict", action="store_true", help="reject kv * heads != d_model")

    p = sub.add_parser("flops", help="training compute 6 N D")
    p.add_argument("--n-params", type=float)
    p.add_argument("--tokens", type=float)

    p = sub.add_parser("fit-powerlaw", help="log-log least squares on a CSV of points")
    p.add_argument("input")
    p.add_argument("--x-col", default="x")
    p.add_argument("--y-col", default="y")
    p.add_argument("--x-name")
    p.add_argument("--y-name")

    def runs_input(p):
        p.add_argument("runs", help="run log (JSONL or CSV)")
        p.add_argument("--format", choices=["jsonl", "csv"], help="default: from file suffix")
        p.add_argument("--objective", help="only use runs with this objective")

    p = sub.add_parser("isoflops", help="IsoFLOPs profiling and frontier fit")
    runs_input(p)
    p.add_argument("--budgets", type=_float_list, help="comma-separated FLOP budgets")
    p.add_argument("--rel-tol", type=float, default=frontier.DEFAULT_REL_TOL)
    p.add_argument("--max-tokens", type=_optional_float, default=frontier.DEFAULT_MAX_TOKENS)
    p.add_argument("--min-steps", type=int, default=frontier.DEFAULT_MIN_STEPS)
    p.add_argument("--window", type=int, default=1, help="loss smoothing window")
    p.add_argument("--epsilon", type=float, default=frontier.DEFAULT_EPSILON)
    p.add_argument("--plot-dir", help="write one CSV of plot rows per budget here")

    p = sub.add_parser("fit-joint", help="fit L(N, D) = A/N^alpha + B/D^beta + E")
    runs_input(p)
    p.add_argument("--all-points", action="store_true", help="fit every curve point, not just final losses")
    p.add_argument("--delta", type=float, default=1e-3, help="Huber threshold")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--refine-top", type=int, help="only refine the k best grid starts")
    p.add_argument("--printed-objective", action="store_true")

    p = sub.add_parser("allocate", help="optimal N and D for a FLOP budget")
    p.add_argument("--preset")
    p.add_argument("--law-file")
    p.add_argument("--flops", type=float)

    p = sub.add_parser("allocate-dual", help="shared size for one CLM and one MLM model")
    p.add_argument("--c-sum", type=float)
    p.add_argument("--n-params", type=float)

    p = sub.add_parser("plan-transfer", help="split tokens between CLM pre-training and MLM")
    p.add_argument("--n-params", type=float)
    p.add_argument("--total-tokens", type=float)
    p.add_argument("--cap", type=float, default=allocator.TRANSFER_CAP)
    p.add_argument("--sweep-csv", help="write a pre-training share sweep here")
    p.add_argument("--sweep-steps", type=int, default=51)

    p = sub.add_parser("synth", help="generate synthetic runs from a known law")
    p.add_argument("--preset")
    p.add_argument("--law-file")
    p.add_argument("--n-grid", type=_float_list)
    p.add_argument("--flops-grid", type=_float_list)
    p.add_argument("--d-grid", type=_float_list)
    p.add_argument("--relative-n", action="store_true", help="n-grid values multiply the optimal size")
    p.add_argument("--noise", type=float, default=0.0, help="log-normal sigma on losses")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--curve-points", type=int, default=16)
    p.add_argument("--objective")
    p.add_argument("--batch-size", type=int)

    for name, sp in sub.choices.items():
        if name not in ("presets", "params", "flops", "synth"):
            sp.add_argument("-o", "--output", help="also write the JSON result here")
        elif name == "synth":
            sp.add_argument("-o", "--output", help="write runs (JSONL) here instead of stdout")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = _read_json(known.config)
    if not isinstance(cfg, dict):
        raise SchemaError(f"{known.config}: config must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    parsers = [parser, *sub.choices.values()]
    for p in parsers:
        dests = {a.dest: a for a in p._actions}
        defaults = {}
        for key, value in cfg.items():
            action = dests.get(key)
            if action is None:
                continue
            if action.type is not None and isinstance(value, str):
                value = action.type(value)
            elif action.type is _float_list and isinstance(value, list):
                value = [float(v) for v in value]
            defaults[key] = value
        p.set_defaults(**defaults)


def _emit(result: Any, output: str | None) -> str:
    if isinstance(result, str):
        return result
    text = json.dumps(_jsonable(result), indent=2) + "\n"
    if output:
        _write_text(output, text)
    return text


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("plscale")
    root.addHandler(handler)
    try:
        parser = build_parser()
        try:
            _apply_config(parser, argv)
            args = parser.parse_args(argv)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(str(exc)) from None
        root.setLevel(logging.DEBUG if args.verbose else logging.WARNING)
        if args.verb is None:
            parser.print_help(stderr)
            return 1
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        with np.errstate(all="ignore"), warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                result = VERBS[args.verb](args)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=stderr)
        stdout.write(_emit(result, getattr(args, "output", None) if args.verb != "synth" else None))
        return 0
    except UnknownPresetError as exc:
        print(f"error: unknown preset: {exc}", file=stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: unreadable file: {exc}", file=stderr)
        return 1
    except (IngestError, SchemaError) as exc:
        print(f"error: schema mismatch: {exc}", file=stderr)
        return 1
    except UsageError as exc:
        print(f"error: usage: {exc}", file=stderr)
        return 1
    except ValidationError as exc:
        print(f"error: invalid input: {exc}", file=stderr)
        return 1
    except FitError as exc:
        print(f"error: fit failed: {exc}", file=stderr)
        return 2
    finally:
        root.removeHandler(handler)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
