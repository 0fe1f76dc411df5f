"""Command-line entry point for reproducible experiment runs.

Subcommands: `constants` prints the closed-form constants for one
parameter pair, `run` produces a CSV error series plus a JSON summary,
`verify` runs the diagnostics suite, and `sweep` repeats `run` over a
list of parameter values.  Exit codes: 0 success, 1 verification failure,
2 usage or configuration error, 3 resource limit.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, replace

from . import analysis, exact, model, montecarlo, schedules
from .errors import CascadeLabError, DomainError, ResourceLimitError, ScheduleParseError

CSV_HEADER = (
    "t,p_t,map_error,E_t,tE_t,NE_t,prob_R_lt_b_over_a,prob_R_le_a_over_b,"
    "martingale_residual,pruned_mass"
)
MC_CSV_HEADER = "t,p_t,E_t_mean,E_t_stderr"

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run; round-trips through JSON."""

    a: float
    b: float
    schedule: str
    t_max: int
    mode: str = "exact"
    trials: int = 100_000
    master_seed: int | None = None
    workers: int = 1
    merge_tol: float = 1e-9
    prune_floor: float = 1e-15
    rational: bool = False
    out: str | None = None
    summary: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(**data)

    def validate(self) -> None:
        if self.mode not in ("exact", "oracle", "mc"):
            raise DomainError(f"mode must be exact, oracle, or mc, got {self.mode!r}")
        if self.t_max < 1:
            raise DomainError(f"t_max must be >= 1, got {self.t_max}")
        if self.mode == "mc":
            if self.master_seed is None:
                raise DomainError("mc mode requires an explicit --seed")
            if self.trials < 1:
                raise DomainError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise DomainError(f"workers must be >= 1, got {self.workers}")


def _fmt(value) -> str:
    # repr of a Python float is the shortest string that round-trips.
    return repr(float(value))


def _write_lines(path: str | None, lines: list[str]) -> None:
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)


def _series_csv_lines(series: exact.ErrorSeries) -> list[str]:
    lines = [CSV_HEADER]
    for t in range(1, series.t_max + 1):
        row = series.csv_row(t)
        lines.append(",".join([str(row[0])] + [_fmt(v) for v in row[1:]]))
    return lines


def _mc_csv_lines(schedule: schedules.Schedule, est: montecarlo.ErrorEstimate) -> list[str]:
    lines = [MC_CSV_HEADER]
    mean = est.mean
    err = est.stderr
    for t in range(1, est.counts.size + 1):
        lines.append(
            f"{t},{_fmt(schedule.evaluate(t))},{_fmt(mean[t - 1])},{_fmt(err[t - 1])}"
        )
    return lines


def _default_fit(series: exact.ErrorSeries):
    window = (max(1, series.t_max // 10), series.t_max)
    try:
        return analysis.fit_rate(series, window)
    except DomainError:
        return None


def _run_once(config: RunConfig) -> tuple[list[str], dict]:
    """Execute one run; returns CSV lines and the JSON summary dict."""
    config.validate()
    params = model.validate_params(config.a, config.b)
    schedule = schedules.parse_schedule(config.schedule, params)
    started = time.perf_counter()
    if config.mode == "mc":
        est = montecarlo.estimate_errors(
            params,
            schedule,
            config.t_max,
            config.trials,
            config.master_seed,
            workers=config.workers,
        )
        csv_lines = _mc_csv_lines(schedule, est)
        summary = {
            "config": config.to_dict(),
            "rate_fit": None,
            "runtime_seconds": time.perf_counter() - started,
            "states": None,
            "trials": est.trials,
        }
        return csv_lines, summary

    mode = exact.Mode.RATIONAL if config.rational else exact.Mode.FLOAT
    if config.mode == "oracle":
        series = exact.enumerate_oracle(params, schedule, config.t_max, mode)
    else:
        opts = exact.StepOptions(merge_tol=config.merge_tol, prune_floor=config.prune_floor)
        series = exact.error_series(params, schedule, config.t_max, opts, mode)
    fit = _default_fit(series)
    summary = {
        "config": config.to_dict(),
        "rate_fit": fit.to_dict() if fit else None,
        "runtime_seconds": time.perf_counter() - started,
        "states": {
            "max_states": series.max_states,
            "final_states": series.final_states,
            "final_pruned_mass": float(series.pruned_mass[-1]),
        },
    }
    return _series_csv_lines(series), summary


def cmd_constants(args) -> int:
    params = model.validate_params(args.a, args.b)
    kappa = model.kappa_star(params)
    lam = model.lambda_star(params)
    f_star = model.f_lambda(params, lam)
    record = {
        "kappa_star": kappa,
        "lambda_star": lam,
        "f_at_lambda_star": f_star,
        "identity_residual": abs(f_star - params.b / ((params.a + params.b) * kappa)),
    }
    print(json.dumps(record))
    return EXIT_OK


def cmd_run(args) -> int:
    config = _config_from_args(args)
    csv_lines, summary = _run_once(config)
    _write_lines(config.out, csv_lines)
    if config.summary is not None:
        _write_lines(config.summary, [json.dumps(summary, indent=2)])
    elif config.out is not None:
        print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    params_grid = None
    if args.ratios is not None:
        params_grid = [(r, 1.0) for r in _parse_float_list(args.ratios)]
    lambda_grid = _parse_float_list(args.lambdas) if args.lambdas is not None else None
    p_grid = _parse_float_list(args.p_values) if args.p_values is not None else None
    report = analysis.verify_identities(
        params_grid=params_grid,
        lambda_grid=lambda_grid,
        p_grid=p_grid,
        horizon=args.horizon,
    )
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        for line in report.format_lines():
            print(line)
    return EXIT_OK if report.all_passed else EXIT_VERIFY_FAILED


SWEEP_PARAMS = ("epsilon", "c", "alpha", "a_over_b")


def _sweep_config(template: RunConfig, param: str, value: float) -> RunConfig:
    if param == "epsilon":
        return replace(template, schedule=f"optimal:eps={value!r}")
    if param in ("c", "alpha"):
        base = schedules.parse_schedule(
            template.schedule, model.validate_params(template.a, template.b)
        )
        if not isinstance(base, schedules.PowerSchedule):
            raise DomainError(f"sweeping {param!r} requires a power schedule template")
        c = value if param == "c" else base.c
        alpha = value if param == "alpha" else base.alpha
        return replace(template, schedule=f"power:c={c!r},alpha={alpha!r}")
    if param == "a_over_b":
        return replace(template, a=value * template.b)
    raise DomainError(f"swept parameter must be one of {SWEEP_PARAMS}, got {param!r}")


def cmd_sweep(args) -> int:
    values = _parse_float_list(args.values)
    if not values:
        raise DomainError("sweep needs a non-empty value list")
    template = _config_from_args(args)
    out_dir = args.out_dir
    import os

    os.makedirs(out_dir, exist_ok=True)
    results = {}
    first_error_code = EXIT_OK
    for value in values:
        key = repr(value)
        csv_path = os.path.join(out_dir, f"{args.param}_{value!r}.csv")
        try:
            config = _sweep_config(template, args.param, value)
            config = replace(config, out=csv_path, summary=None)
            csv_lines, summary = _run_once(config)
            _write_lines(csv_path, csv_lines)
            tail, ne_final = _sweep_aggregates(config, csv_lines)
            results[key] = {
                "tail_max_tEt": tail,
                "NE_t_max": ne_final,
                "csv": csv_path,
                "error": None,
            }
        except CascadeLabError as exc:
            code = EXIT_RESOURCE if isinstance(exc, ResourceLimitError) else EXIT_USAGE
            if first_error_code == EXIT_OK:
                first_error_code = code
            results[key] = {
                "tail_max_tEt": None,
                "NE_t_max": None,
                "csv": None,
                "error": f"{type(exc).__name__}: {exc}",
            }
    aggregate = {"swept": args.param, "values": values, "results": results}
    agg_path = os.path.join(out_dir, "sweep_summary.json")
    _write_lines(agg_path, [json.dumps(aggregate, indent=2)])
    print(json.dumps(aggregate, indent=2))
    return first_error_code


def _sweep_aggregates(config: RunConfig, csv_lines: list[str]) -> tuple[float, float]:
    """Tail max of t*E_t over the fit window, and cumulative errors at t_max."""
    header = csv_lines[0].split(",")
    rows = [line.split(",") for line in csv_lines[1:]]
    lo = max(1, config.t_max // 10)
    if config.mode == "mc":
        e_col = header.index("E_t_mean")
        es = [float(r[e_col]) for r in rows]
        ne_final = sum(es)
        tail = max((t * es[t - 1] for t in range(lo, config.t_max + 1)), default=0.0)
        return tail, ne_final
    te_col = header.index("tE_t")
    ne_col = header.index("NE_t")
    tail = max(float(rows[t - 1][te_col]) for t in range(lo, config.t_max + 1))
    return tail, float(rows[-1][ne_col])


def _parse_float_list(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(piece) for piece in text.split(",")]
    except ValueError as exc:
        raise DomainError(f"bad numeric list {text!r}: {exc}") from None


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        a=args.a,
        b=args.b,
        schedule=args.schedule,
        t_max=args.t_max,
        mode=args.mode,
        trials=args.trials,
        master_seed=args.seed,
        workers=args.workers,
        merge_tol=args.merge_tol,
        prune_floor=args.prune_floor,
        rational=args.rational,
        out=args.out,
        summary=args.summary,
    )


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--a", type=float, required=True, help="majority ball weight")
    sub.add_argument("--b", type=float, required=True, help="minority ball weight")
    sub.add_argument(
        "--schedule",
        required=True,
        help='revealing schedule, e.g. "optimal:eps=0.1", "power:c=0.5,alpha=1", '
        '"const:p=0.2", "zero", "file:<path>"',
    )
    sub.add_argument("--t-max", type=int, required=True, help="horizon (number of players)")
    sub.add_argument(
        "--mode", choices=("exact", "oracle", "mc"), default="exact", help="engine to run"
    )
    sub.add_argument("--trials", type=int, default=100_000, help="Monte Carlo trials")
    sub.add_argument("--seed", type=int, default=None, help="master seed (required for mc)")
    sub.add_argument("--workers", type=int, default=1, help="parallel workers for mc")
    sub.add_argument("--merge-tol", type=float, default=1e-9, help="state merge tolerance")
    sub.add_argument("--prune-floor", type=float, default=1e-15, help="state mass floor")
    sub.add_argument(
        "--rational", action="store_true", help="exact rational arithmetic (short horizons)"
    )
    sub.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    sub.add_argument("--summary", default=None, help="JSON summary output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadelab",
        description="Simulate and exactly analyze sequential social learning with revealers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_const = sub.add_parser("constants", help="print the closed-form constants for (a, b)")
    p_const.add_argument("--a", type=float, required=True)
    p_const.add_argument("--b", type=float, required=True)
    p_const.set_defaults(func=cmd_constants)

    p_run = sub.add_parser("run", help="produce an error series CSV and JSON summary")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run the invariant diagnostics suite")
    p_verify.add_argument("--ratios", default=None, help="comma list of a/b ratios")
    p_verify.add_argument("--lambdas", default=None, help="comma list of exponents in [0,1]")
    p_verify.add_argument("--p-values", default=None, help="comma list of revealing probs")
    p_verify.add_argument("--horizon", type=int, default=64, help="engine check horizon")
    p_verify.add_argument("--json", action="store_true", help="emit the report as JSON")
    p_verify.set_defaults(func=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="rerun `run` across a list of parameter values")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p_sweep.add_argument("--values", required=True, help="comma list of swept values")
    p_sweep.add_argument("--out-dir", required=True, help="directory for per-value CSVs")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except CascadeLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())
