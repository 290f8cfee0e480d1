"""Command-line front end.

Subcommands:

* ``deblur``        -- run the multiscale and/or single-step restoration on a
                       PGM image or the built-in phantom; writes restored PGMs,
                       error/trace CSVs, a run-metadata JSON and error-curve
                       figures.
* ``verify-claim``  -- exact rational certification of the coefficient-table
                       inequalities; writes the per-(n1, j) CSV and a profile
                       figure.  Exits 4 on any violation.
* ``seq-oracle``    -- closed-form increments against the independent
                       proximal-gradient minimiser on the truncated problem.
* ``diagnostics parseval`` -- recompute the energy split from a saved trace
                       JSON.

Exit codes: 0 success, 1 usage/validation, 2 I/O, 3 numerical abort,
4 claim violation, 5 oracle non-convergence.

Flags override values from an optional ``--config`` file of ``key = value``
lines (keys named like the long flags, dashes or underscores); built-in
defaults rank last.  ``MSDECOMP_THREADS`` caps the BLAS thread pools used by
the array backend.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import deblur as db
from . import engine, figures, gradsolve, seqspace
from .pgmio import PgmError, pgm_read, pgm_write

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_VIOLATION = 4
EXIT_ORACLE = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; this tool reserves 2 for I/O
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _apply_thread_cap() -> None:
    cap = os.environ.get("MSDECOMP_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _load_config_file(path: str) -> Dict[str, str]:
    """Minimal key = value reader (TOML-style scalars, # comments)."""
    table: Dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        table[key.replace("-", "_")] = value.strip("\"'")
    return table


def _subparser_chain(parser: argparse.ArgumentParser,
                     args: argparse.Namespace) -> List[argparse.ArgumentParser]:
    chain = [parser]
    current = parser
    for attr in ("command", "diagnostic"):
        name = getattr(args, attr, None)
        if name is None:
            break
        spa = next((a for a in current._actions
                    if isinstance(a, argparse._SubParsersAction)), None)
        if spa is None or name not in spa.choices:
            break
        current = spa.choices[name]
        chain.append(current)
    return chain


def _merge_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if not cfg_path:
        return args
    table = _load_config_file(cfg_path)
    if not table:
        return args
    chain = _subparser_chain(parser, args)
    for key, value in table.items():
        owner, action = None, None
        for candidate in chain:
            action = next((a for a in candidate._actions if a.dest == key), None)
            if action is not None:
                owner = candidate
                break
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if action.type is not None:
            parsed = action.type(value)
        elif isinstance(action.const, bool) or isinstance(action.default, bool):
            parsed = value.lower() in ("1", "true", "yes", "on")
        else:
            parsed = value
        owner.set_defaults(**{key: parsed})
    return parser.parse_args(argv)


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}")


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: str, rows: List[str],
               trailer: Optional[str] = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
        if trailer is not None:
            fh.write(trailer + "\n")


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# deblur


def _add_deblur_parser(sub) -> None:
    p = sub.add_parser("deblur", help="multiscale / single-step image restoration")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="ground-truth PGM image (it will be blurred)")
    src.add_argument("--phantom", action="store_true",
                     help="use the built-in deterministic phantom")
    p.add_argument("--size", type=int, default=64,
                   help="phantom side length (default 64)")
    p.add_argument("--phantom-seed", type=int, default=0)
    p.add_argument("--kernel-size", type=int, default=9)
    p.add_argument("--kernel-sigma", type=float, default=2.0)
    p.add_argument("--noise-var", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--lambda0", type=float, default=1.0 / 16.0)
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=None,
                   help="default 40 noiseless, 20 noisy")
    p.add_argument("--mode", choices=["multiscale", "single-step", "both"],
                   default="both")
    p.add_argument("--delta", type=float, default=1e-3,
                   help="regularizer smoothing offset")
    p.add_argument("--tau", type=float, default=1e-4,
                   help="inner-solver relative tolerance")
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--warm-start", action="store_true",
                   help="single-step runs reuse the previous minimiser as guess")
    p.add_argument("--snapshot-every", type=int, default=1)
    p.add_argument("--solver-logs", action="store_true",
                   help="write one iter,f,grad_norm,step CSV per inner solve")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", default="msdecomp-deblur")
    p.add_argument("--config", default=None)


def _validate_deblur(args) -> None:
    if not args.phantom and not args.input:
        raise UsageError("either --input or --phantom is required")
    if args.kernel_size < 1 or args.kernel_size % 2 == 0:
        raise UsageError(f"--kernel-size must be odd, got {args.kernel_size}")
    if args.kernel_sigma <= 0:
        raise UsageError("--kernel-sigma must be positive")
    if args.noise_var < 0:
        raise UsageError("--noise-var must be >= 0")
    if args.steps is not None and args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if args.lambda0 <= 0 or args.factor <= 1:
        raise UsageError("--lambda0 must be > 0 and --factor > 1")
    if args.delta < 0:
        raise UsageError("--delta must be >= 0")
    if args.tau <= 0 or args.max_iters < 1:
        raise UsageError("--tau must be > 0 and --max-iters >= 1")
    if args.snapshot_every < 1:
        raise UsageError("--snapshot-every must be >= 1")
    if args.phantom and args.size < 8:
        raise UsageError("--size must be >= 8")
    if args.input and not Path(args.input).is_file():
        raise UsageError(f"input file not found: {args.input}")


def cmd_deblur(args) -> int:
    _validate_deblur(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.phantom:
        truth = db.nebula_phantom(args.size, seed=args.phantom_seed)
    else:
        truth = pgm_read(args.input).values
    kernel = db.gaussian_kernel(args.kernel_size, args.kernel_sigma)
    blurred = db.blur_apply(truth, kernel)
    observed = db.add_gaussian_noise(blurred, args.noise_var, args.seed) \
        if args.noise_var > 0 else blurred.copy()
    steps = args.steps if args.steps is not None else \
        (20 if args.noise_var > 0 else 40)

    problem = engine.ProblemInstance(forward=db.BlurOperator(kernel),
                                     data=observed,
                                     regularizer=db.H1Regularizer(args.delta))
    schedule = engine.LambdaSchedule(lambda0=args.lambda0, factor=args.factor)
    solver_params = gradsolve.SolverParams(tau=args.tau, max_iters=args.max_iters,
                                           keep_history=args.solver_logs)
    base_solver = engine.gradient_solver(solver_params)

    clip_counts: Dict[str, int] = {}

    def save_pgm(name: str, image: np.ndarray) -> None:
        clip_counts[name] = pgm_write(str(out / name), image)

    save_pgm("truth.pgm", truth)
    save_pgm("blurred.pgm", blurred)
    save_pgm("observed.pgm", observed)

    traces: Dict[str, engine.MultiscaleTrace] = {}
    run_modes = ["multiscale", "single-step"] if args.mode == "both" else [args.mode]
    for mode in run_modes:
        tag_mode = mode.replace("-", "")
        if args.solver_logs:
            def solver(sp, _tag=tag_mode):
                result = base_solver(sp)
                gradsolve.history_to_csv(
                    result.history,
                    str(out / f"solvelog_{_tag}_step{sp.index + 1:02d}.csv"))
                return result
        else:
            solver = base_solver
        if mode == "multiscale":
            trace = engine.run_multiscale(problem, schedule, solver, steps,
                                          truth=truth,
                                          snapshot_every=args.snapshot_every)
        else:
            trace = engine.run_single_step(problem, schedule, solver, steps,
                                           truth=truth,
                                           warm_start=args.warm_start,
                                           snapshot_every=args.snapshot_every)
        traces[mode] = trace
        tag = mode.replace("-", "")
        engine.trace_to_csv(trace, str(out / f"trace_{tag}.csv"))
        engine.write_trace_json(trace, str(out / f"trace_{tag}.json"),
                                metadata=_deblur_metadata(args, steps, mode))
        for step, sigma in zip(trace.steps, trace.sigmas):
            if sigma is not None:
                save_pgm(f"restored_{tag}_step{step.n + 1:02d}.pgm", sigma)

    rows = []
    for i in range(steps):
        cells = [str(i + 1), _fmt(schedule.lambda_at(i))]
        for mode in run_modes:
            cells.append(_fmt(traces[mode].steps[i].error_vs_truth))
        rows.append(",".join(cells))
    header = "n,lambda," + ",".join(
        f"error_{m.replace('-', '_')}" for m in run_modes)
    _write_csv(out / "errors.csv", header, rows)

    if not args.no_figures:
        figures.save_error_curves(
            str(out / "errors.png"),
            {m: [s.error_vs_truth for s in traces[m].steps] for m in run_modes},
            title="reconstruction error by step")
        figures.save_error_curves(
            str(out / "residuals.png"),
            {m: traces[m].residuals() for m in run_modes},
            ylabel="residual norm", title="data-fit residual by step")

    meta = _deblur_metadata(args, steps, args.mode)
    meta["clip_counts"] = clip_counts
    meta["results"] = {
        f"final_error_{m.replace('-', '_')}":
            traces[m].steps[-1].error_vs_truth for m in run_modes}
    meta["results"].update({
        f"final_residual_{m.replace('-', '_')}":
            traces[m].steps[-1].residual_norm for m in run_modes})
    _write_json(out / "run.json", {"command": "deblur", "version": __version__,
                                   "config": meta})
    for mode in run_modes:
        err = traces[mode].steps[-1].error_vs_truth
        print(f"{mode}: final relative error {err:.6g} after {steps} steps")
    return EXIT_OK


def _deblur_metadata(args, steps: int, mode: str) -> dict:
    return {
        "input": args.input or "phantom",
        "size": args.size if args.phantom else None,
        "phantom_seed": args.phantom_seed if args.phantom else None,
        "kernel_size": args.kernel_size,
        "kernel_sigma": args.kernel_sigma,
        "noise_var": args.noise_var,
        "seed": args.seed,
        "lambda0": args.lambda0,
        "factor": args.factor,
        "steps": steps,
        "mode": mode,
        "delta": args.delta,
        "tau": args.tau,
        "max_iters": args.max_iters,
        "warm_start": args.warm_start,
        "snapshot_every": args.snapshot_every,
        "solver_logs": args.solver_logs,
    }


# ---------------------------------------------------------------------------
# verify-claim


def _add_verify_parser(sub) -> None:
    p = sub.add_parser("verify-claim",
                       help="exact certification of the coefficient table")
    p.add_argument("--M", type=_fraction, default=Fraction(2))
    p.add_argument("--alpha0", type=_fraction, default=Fraction(1))
    p.add_argument("--n1-max", type=int, default=100)
    p.add_argument("--j-extra", type=int, default=100)
    p.add_argument("--variant", choices=list(seqspace.VARIANTS), default="first")
    p.add_argument("--tamper-delta", type=_fraction, default=None,
                   help="test hook: replace delta after derivation")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", default="msdecomp-claim")
    p.add_argument("--config", default=None)


def cmd_verify_claim(args) -> int:
    if args.n1_max < 2:
        raise UsageError("--n1-max must be >= 2")
    try:
        params = seqspace.params_from(args.M, args.alpha0, variant=args.variant)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.j_extra < params.k + 2:
        raise UsageError(f"--j-extra must be >= {params.k + 2}")
    if args.tamper_delta is not None:
        params = seqspace.tampered_delta(params, args.tamper_delta)

    report = seqspace.verify_claim(params, args.n1_max, args.j_extra)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [f"{r.n1},{r.j},{r.value.numerator},{r.value.denominator},"
            f"{str(r.ok).lower()}" for r in report.rows]
    summary = (f"# summary: all_pass={str(report.all_pass).lower()} "
               f"M={params.M} alpha0={params.alpha0} k={params.k} "
               f"n1=[2,{args.n1_max}] j_extra={args.j_extra} "
               f"violations={len(report.violations)}")
    _write_csv(out / "claim_report.csv", "n1,j,A_num,A_den,pass", rows,
               trailer=summary)

    if not args.no_figures:
        sample = [n1 for n1 in (2, 5, 10, 25, 50, args.n1_max) if n1 <= args.n1_max]
        profiles = {}
        bounds = {}
        for n1 in dict.fromkeys(sample):
            vals = [r.value for r in report.rows
                    if r.n1 == n1 and r.j <= n1 + params.k + 5]
            profiles[n1] = [float(v) for v in vals]
            bounds[n1] = float(seqspace.coefficient_A(n1, n1, params))
        figures.save_claim_profiles(str(out / "claim_profiles.png"),
                                    profiles, bounds)

    if report.all_pass:
        print(f"all inequalities hold exactly for n1 in [2, {args.n1_max}], "
              f"j in [1, n1+{args.j_extra}] (M={params.M}, k={params.k})")
        return EXIT_OK
    for v in report.violations[:10]:
        print(f"VIOLATION n1={v.n1} j={v.j} [{v.relation}]: {v.detail}",
              file=sys.stderr)
    print(f"{len(report.violations)} violations; see {out / 'claim_report.csv'}",
          file=sys.stderr)
    return EXIT_VIOLATION


# ---------------------------------------------------------------------------
# seq-oracle


def _add_oracle_parser(sub) -> None:
    p = sub.add_parser("seq-oracle",
                       help="closed-form increments vs proximal-gradient minimiser")
    p.add_argument("--M", type=_fraction, default=Fraction(2))
    p.add_argument("--alpha0", type=_fraction, default=Fraction(1))
    p.add_argument("--steps", type=int, default=8, help="verify n = 0..steps")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-6,
                   help="acceptance threshold on the l2 discrepancy")
    p.add_argument("--variant", choices=list(seqspace.VARIANTS), default="first")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", default="msdecomp-oracle")
    p.add_argument("--config", default=None)


def cmd_seq_oracle(args) -> int:
    if args.steps < 0:
        raise UsageError("--steps must be >= 0")
    if args.dim < args.steps + 15:
        raise UsageError(f"--dim must be >= steps + 15 = {args.steps + 15}")
    if args.tol <= 0:
        raise UsageError("--tol must be positive")
    try:
        params = seqspace.params_from(args.M, args.alpha0, variant=args.variant)
    except ValueError as exc:
        raise UsageError(str(exc))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # drive the fixed-point iteration well below the comparison threshold
    fp_tol = args.tol * 1e-3
    rows = []
    ns, discrepancies = [], []
    all_ok = True
    for n in range(args.steps + 1):
        u = seqspace.ista_oracle(params, n, args.dim, fp_tol,
                                 variant=args.variant)
        closed = seqspace.closed_form_iterate(n, params, variant=args.variant)
        ref = np.zeros(args.dim)
        ((idx, val),) = closed.entries.items()
        ref[idx - 1] = float(val)
        d = float(np.linalg.norm(u - ref))
        ok = d <= args.tol
        all_ok &= ok
        ns.append(n)
        discrepancies.append(d)
        rows.append(f"{n},{idx},{_fmt(float(val))},{_fmt(d)},{str(ok).lower()}")
        print(f"n={n}: support index {idx}, |u| = {float(val):.6g}, "
              f"l2 discrepancy {d:.3g} ({'ok' if ok else 'FAIL'})")
    _write_csv(out / "oracle_comparison.csv",
               "n,support_index,closed_form_value,l2_discrepancy,pass", rows)
    if not args.no_figures:
        figures.save_oracle_discrepancies(str(out / "oracle_discrepancies.png"),
                                          ns, discrepancies, tol=args.tol)
    return EXIT_OK if all_ok else EXIT_VIOLATION


# ---------------------------------------------------------------------------
# diagnostics


def _add_diagnostics_parser(sub) -> None:
    p = sub.add_parser("diagnostics", help="post-hoc checks on saved traces")
    dsub = p.add_subparsers(dest="diagnostic", required=True)
    pp = dsub.add_parser("parseval", help="energy split from a trace JSON")
    pp.add_argument("--trace", required=True)
    pp.add_argument("--no-figures", action="store_true")
    pp.add_argument("--out", default="msdecomp-diagnostics")
    pp.add_argument("--config", default=None)


def cmd_diagnostics(args) -> int:
    try:
        with open(args.trace) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read trace {args.trace}: {exc}", file=sys.stderr)
        return EXIT_IO
    report = engine.parseval_from_trace_json(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [f"{i + 1},{_fmt(fwd)},{_fmt(reg)}"
            for i, (fwd, reg) in enumerate(report.rhs_terms)]
    _write_csv(out / "parseval.csv", "n,forward_energy,weighted_regularizer",
               rows,
               trailer=f"# lhs={_fmt(report.lhs)} tail={_fmt(report.tail)} "
                       f"relative_gap={_fmt(report.relative_gap)}")
    if not args.no_figures:
        figures.save_parseval_split(str(out / "parseval.png"), report.lhs,
                                    report.rhs_terms, report.tail)
    status = "guaranteed" if report.identity_guaranteed else \
        "identity not guaranteed: " + "; ".join(report.notes)
    print(f"data energy {report.lhs:.10g}, accumulated terms + tail "
          f"{sum(a + b for a, b in report.rhs_terms) + report.tail:.10g}")
    print(f"relative gap {report.relative_gap:.3g} ({status})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="msdecomp",
                     description="multiscale decomposition for linear inverse "
                                 "problems: deblurring runs and exact "
                                 "sequence-space certification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_deblur_parser(sub)
    _add_verify_parser(sub)
    _add_oracle_parser(sub)
    _add_diagnostics_parser(sub)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _apply_thread_cap()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _merge_config(parser, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "deblur":
            return cmd_deblur(args)
        if args.command == "verify-claim":
            return cmd_verify_claim(args)
        if args.command == "seq-oracle":
            return cmd_seq_oracle(args)
        if args.command == "diagnostics":
            return cmd_diagnostics(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PgmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except seqspace.OracleNonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except engine.EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except gradsolve.NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
