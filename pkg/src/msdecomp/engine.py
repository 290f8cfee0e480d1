"""Generic multiscale decomposition loop over an abstract linear forward
operator, plus the single-step variant and the identity diagnostics.

Each step minimises ``lam_n * ||data - forward(sigma_prev + u)||^alpha
+ R(u)^beta`` through a pluggable inner-solver handle; the running sum of the
returned increments is maintained exactly (never recomputed), and the full
run is recorded in a trace that serialises to CSV/JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, IO, List, Optional, Sequence, Tuple, Union

import numpy as np


class EngineError(RuntimeError):
    """Numerical failure inside the decomposition loop, tagged with the step."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class ScheduleOverflowError(EngineError):
    pass


def _norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float).ravel()))


@dataclass
class ProblemInstance:
    """Forward operator (apply/adjoint pair), measured data, exponents and
    regularizer handle of one inverse problem."""

    forward: object
    data: np.ndarray
    regularizer: object
    alpha: float = 2.0
    beta: float = 1.0
    domain_shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.alpha < 1 or self.beta < 1:
            raise ValueError("alpha and beta must be >= 1")
        self.data = np.asarray(self.data, dtype=float)
        if self.domain_shape is None:
            self.domain_shape = self.data.shape

    def zero(self) -> np.ndarray:
        return np.zeros(self.domain_shape)

    def residual(self, sigma: np.ndarray) -> np.ndarray:
        return self.data - self.forward.apply(sigma)


@dataclass
class LambdaSchedule:
    """Geometric penalty schedule lam_n = lambda0 * factor**n."""

    lambda0: float
    factor: float
    kind: str = "geometric"

    def __post_init__(self) -> None:
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.factor <= 1:
            raise ValueError("factor must exceed 1 (the schedule must grow)")
        if self.kind != "geometric":
            raise ValueError("only geometric schedules are implemented")

    def lambda_at(self, n: int) -> float:
        return self.lambda0 * self.factor**n

    def growth_ratio_nonincreasing(self, beta: float, horizon: int) -> bool:
        """Whether 2**(beta*n) / lam_n is non-increasing over n <= horizon
        (the schedule condition guaranteeing residual convergence)."""
        ratios = [2.0 ** (beta * n) / self.lambda_at(n) for n in range(horizon + 1)]
        return all(b <= a for a, b in zip(ratios, ratios[1:]))


@dataclass
class StepProblem:
    """One inner subproblem: everything the solver handle needs."""

    forward: object
    data: np.ndarray
    regularizer: object
    alpha: float
    beta: float
    lam: float
    sigma_prev: np.ndarray
    init: np.ndarray
    index: int

    def value(self, u: np.ndarray) -> float:
        r = self.data - self.forward.apply(self.sigma_prev + u)
        d2 = float(np.dot(r.ravel(), r.ravel()))
        return self.lam * d2 ** (self.alpha / 2.0) \
            + self.regularizer.value(u) ** self.beta

    def objective(self, u: np.ndarray) -> Tuple[float, np.ndarray]:
        """Value and gradient; requires a regularizer exposing ``gradient``
        and, for alpha != 2, a residual bounded away from zero."""
        r = self.data - self.forward.apply(self.sigma_prev + u)
        d2 = float(np.dot(r.ravel(), r.ravel()))
        rv = self.regularizer.value(u)
        value = self.lam * d2 ** (self.alpha / 2.0) + rv ** self.beta
        if self.alpha == 2.0:
            gfit = -2.0 * self.lam * self.forward.adjoint(r)
        else:
            gfit = -self.lam * self.alpha * d2 ** (self.alpha / 2.0 - 1.0) \
                * self.forward.adjoint(r)
        greg = self.regularizer.gradient(u)
        if self.beta != 1.0:
            greg = self.beta * rv ** (self.beta - 1.0) * greg
        return value, gfit + greg


Solver = Callable[[StepProblem], object]


@dataclass
class TraceStep:
    n: int
    lambda_n: float
    increment_R: float
    residual_norm: float
    forward_increment_norm: float
    error_vs_truth: Optional[float] = None


@dataclass
class MultiscaleTrace:
    """Record of one run: per-step scalars, stored increments and snapshots."""

    mode: str  # "multiscale" | "single-step"
    steps: List[TraceStep] = field(default_factory=list)
    increments: List[np.ndarray] = field(default_factory=list)
    sigmas: List[Optional[np.ndarray]] = field(default_factory=list)
    snapshot_every: int = 1
    data_norm: float = 0.0
    final_sigma: Optional[np.ndarray] = None

    def residuals(self) -> List[float]:
        return [s.residual_norm for s in self.steps]

    def errors(self) -> List[Optional[float]]:
        return [s.error_vs_truth for s in self.steps]


def _resolve_init(kind: Union[str, np.ndarray], problem: ProblemInstance,
                  sigma_prev: np.ndarray, prev_solution: Optional[np.ndarray]
                  ) -> np.ndarray:
    if isinstance(kind, np.ndarray):
        return kind
    if kind == "zero":
        return problem.zero()
    if kind in ("residual", "data"):
        if problem.data.shape != tuple(problem.domain_shape):
            raise ValueError(
                f"init {kind!r} needs matching data/domain shapes; use 'zero'")
        if kind == "data":
            return problem.data.copy()
        return problem.residual(sigma_prev)
    if kind == "warm":
        return prev_solution.copy() if prev_solution is not None else problem.data.copy()
    raise ValueError(f"unknown init policy {kind!r}")


def _run(problem: ProblemInstance, schedule: LambdaSchedule, solver: Solver,
         steps: int, truth: Optional[np.ndarray], init: Union[str, np.ndarray],
         snapshot_every: int, mode: str) -> MultiscaleTrace:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    trace = MultiscaleTrace(mode=mode, snapshot_every=snapshot_every,
                            data_norm=_norm(problem.data))
    truth_norm = _norm(truth) if truth is not None else None
    sigma = problem.zero()
    prev_solution: Optional[np.ndarray] = None
    for n in range(steps):
        lam = schedule.lambda_at(n)
        if not np.isfinite(lam):
            raise ScheduleOverflowError(
                n, f"lambda_{n} = {schedule.lambda0}*{schedule.factor}**{n} "
                   f"overflows the scalar range")
        if mode == "multiscale":
            sigma_prev = sigma
            guess = _resolve_init(init, problem, sigma_prev, prev_solution)
        else:
            sigma_prev = problem.zero()
            guess = _resolve_init(init, problem, sigma_prev, prev_solution)
        sp = StepProblem(forward=problem.forward, data=problem.data,
                         regularizer=problem.regularizer, alpha=problem.alpha,
                         beta=problem.beta, lam=lam, sigma_prev=sigma_prev,
                         init=guess, index=n)
        result = solver(sp)
        u = np.asarray(getattr(result, "minimizer", result), dtype=float)
        if not np.all(np.isfinite(u)):
            raise EngineError(n, "inner solver returned non-finite values")
        if mode == "multiscale":
            increment = u
            sigma = sigma + increment
        else:
            increment = u  # the standalone minimiser itself
            sigma = u.copy()
        prev_solution = sigma
        residual_norm = _norm(problem.residual(sigma))
        step = TraceStep(
            n=n, lambda_n=lam,
            increment_R=float(problem.regularizer.value(increment)),
            residual_norm=residual_norm,
            forward_increment_norm=_norm(problem.forward.apply(increment)),
            error_vs_truth=(_norm(sigma - truth) / truth_norm
                            if truth is not None else None))
        trace.steps.append(step)
        trace.increments.append(increment.copy())
        trace.sigmas.append(sigma.copy() if n % snapshot_every == 0 else None)
    trace.final_sigma = sigma.copy()
    return trace


def run_multiscale(problem: ProblemInstance, schedule: LambdaSchedule,
                   solver: Solver, steps: int,
                   truth: Optional[np.ndarray] = None,
                   init: Union[str, np.ndarray] = "residual",
                   snapshot_every: int = 1) -> MultiscaleTrace:
    """Run the multiscale decomposition: each step minimises around the
    accumulated sum and contributes an increment.  The default initial guess
    is the current data residual (which for step 0 is the data itself); pass
    ``init="zero"`` for problems whose domain is not the measurement grid."""
    return _run(problem, schedule, solver, steps, truth, init,
                snapshot_every, "multiscale")


def run_single_step(problem: ProblemInstance, schedule: LambdaSchedule,
                    solver: Solver, steps: int,
                    truth: Optional[np.ndarray] = None,
                    init: Union[str, np.ndarray] = "data",
                    warm_start: bool = False,
                    snapshot_every: int = 1) -> MultiscaleTrace:
    """Run the single-step procedure: each step solves the full problem from
    scratch at its own penalty.  The guess is the observed data every time
    unless ``warm_start`` reuses the previous minimiser."""
    if warm_start and not isinstance(init, np.ndarray):
        init = "warm"
    return _run(problem, schedule, solver, steps, truth, init,
                snapshot_every, "single-step")


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class ParsevalReport:
    lhs: float
    rhs_terms: List[Tuple[float, float]]
    tail: float
    relative_gap: float
    identity_guaranteed: bool
    notes: List[str] = field(default_factory=list)


def parseval_gap(lhs: float, rhs_terms: Sequence[Tuple[float, float]],
                 tail: float) -> float:
    total = sum(a + b for a, b in rhs_terms) + tail
    if lhs == 0.0:
        return 0.0 if total == 0.0 else float("inf")
    return abs(lhs - total) / lhs


def parseval_report(trace: MultiscaleTrace, problem: ProblemInstance
                    ) -> ParsevalReport:
    """Energy-split diagnostic: ||data||^2 against the accumulated
    ||forward(u_j)||^2 + R(u_j)/lam_j terms plus the final residual energy.

    The identity is guaranteed only for alpha = 2, beta = 1, a positively
    1-homogeneous regularizer and exact inner minimisers on an inner-product
    measurement space; violated preconditions are flagged, never fatal.
    """
    notes: List[str] = []
    if problem.alpha != 2.0:
        notes.append(f"alpha = {problem.alpha} != 2")
    if problem.beta != 1.0:
        notes.append(f"beta = {problem.beta} != 1")
    if not getattr(problem.regularizer, "one_homogeneous", False):
        notes.append("regularizer is not positively 1-homogeneous")
    if trace.mode != "multiscale":
        notes.append(f"trace mode is {trace.mode!r}, identity stated for multiscale")
    if len(trace.increments) != len(trace.steps):
        notes.append("trace does not store all increments")
    terms: List[Tuple[float, float]] = []
    for step, u in zip(trace.steps, trace.increments):
        fwd = _norm(problem.forward.apply(u))
        terms.append((fwd**2, float(problem.regularizer.value(u)) / step.lambda_n))
    tail = trace.steps[-1].residual_norm ** 2 if trace.steps else 0.0
    lhs = trace.data_norm**2
    gap = parseval_gap(lhs, terms, tail)
    return ParsevalReport(lhs=lhs, rhs_terms=terms, tail=tail, relative_gap=gap,
                          identity_guaranteed=not notes, notes=notes)


@dataclass
class MonotonicityViolation:
    n: int
    increase: float
    relative_increase: float


@dataclass
class MonotonicityReport:
    violations: List[MonotonicityViolation]
    worst_relative: float

    @property
    def clean(self) -> bool:
        return not self.violations


def check_residual_monotonicity(trace: MultiscaleTrace) -> MonotonicityReport:
    """List the steps whose residual exceeded the previous one, with
    magnitudes.  Purely a report; asserting is left to callers."""
    if not trace.steps:
        raise ValueError("empty trace")
    violations: List[MonotonicityViolation] = []
    worst = 0.0
    res = trace.residuals()
    for n in range(1, len(res)):
        if res[n] > res[n - 1]:
            inc = res[n] - res[n - 1]
            rel = inc / res[n - 1] if res[n - 1] > 0 else float("inf")
            violations.append(MonotonicityViolation(n=n, increase=inc,
                                                    relative_increase=rel))
            worst = max(worst, rel)
    return MonotonicityReport(violations=violations, worst_relative=worst)


# ---------------------------------------------------------------------------
# serialisation


TRACE_CSV_HEADER = "n,lambda,residual,increment_R,error"


def trace_to_csv(trace: MultiscaleTrace, out: Union[str, IO[str]]) -> None:
    """CSV with header ``n,lambda,residual,increment_R,error``; floats are
    written in shortest round-trip form, a missing error column stays empty."""
    own = isinstance(out, str)
    fh = open(out, "w", newline="") if own else out
    try:
        fh.write(TRACE_CSV_HEADER + "\n")
        for s in trace.steps:
            err = "" if s.error_vs_truth is None else repr(s.error_vs_truth)
            fh.write(f"{s.n},{s.lambda_n!r},{s.residual_norm!r},"
                     f"{s.increment_R!r},{err}\n")
    finally:
        if own:
            fh.close()


def trace_to_json(trace: MultiscaleTrace, metadata: Optional[dict] = None) -> dict:
    """JSON-ready dict with the per-step scalars and caller metadata
    (schedule, solver parameters, seeds, ...)."""
    return {
        "mode": trace.mode,
        "snapshot_every": trace.snapshot_every,
        "data_norm": trace.data_norm,
        "steps": [
            {
                "n": s.n,
                "lambda": s.lambda_n,
                "residual": s.residual_norm,
                "increment_R": s.increment_R,
                "forward_increment_norm": s.forward_increment_norm,
                "error": s.error_vs_truth,
            }
            for s in trace.steps
        ],
        "metadata": metadata or {},
    }


def write_trace_json(trace: MultiscaleTrace, path: str,
                     metadata: Optional[dict] = None) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(trace_to_json(trace, metadata), fh, indent=2, sort_keys=True)
        fh.write("\n")


def parseval_from_trace_json(doc: dict) -> ParsevalReport:
    """Recompute the energy split from a serialised trace (the per-step
    forward increment norms carry everything needed)."""
    steps = doc["steps"]
    terms = [(s["forward_increment_norm"] ** 2, s["increment_R"] / s["lambda"])
             for s in steps]
    tail = steps[-1]["residual"] ** 2 if steps else 0.0
    lhs = doc["data_norm"] ** 2
    notes: List[str] = []
    meta = doc.get("metadata", {})
    if doc.get("mode") != "multiscale":
        notes.append(f"trace mode is {doc.get('mode')!r}")
    if meta.get("delta") not in (0, 0.0, None):
        notes.append(f"regularizer smoothing delta = {meta.get('delta')} != 0")
    gap = parseval_gap(lhs, terms, tail)
    return ParsevalReport(lhs=lhs, rhs_terms=terms, tail=tail, relative_gap=gap,
                          identity_guaranteed=not notes, notes=notes)


# ---------------------------------------------------------------------------
# operator checks and solver adapters


def adjoint_defect(forward: object, shape_in: Tuple[int, ...],
                   shape_out: Optional[Tuple[int, ...]] = None,
                   trials: int = 20, seed: int = 0) -> float:
    """Max over random pairs of |<Au, v> - <u, A*v>| / (||Au|| ||v|| + eps)."""
    shape_out = shape_out or shape_in
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(shape_in)
        v = rng.standard_normal(shape_out)
        au = forward.apply(u)
        atv = forward.adjoint(v)
        lhs = float(np.dot(np.ravel(au), np.ravel(v)))
        rhs = float(np.dot(np.ravel(u), np.ravel(atv)))
        scale = float(np.linalg.norm(np.ravel(u)) * np.linalg.norm(np.ravel(v)))
        worst = max(worst, abs(lhs - rhs) / (scale + 1e-300))
    return worst


def gradient_solver(params) -> Solver:
    """Wrap :func:`msdecomp.gradsolve.minimize` as an engine solver handle."""
    from .gradsolve import minimize

    def solve(sp: StepProblem):
        return minimize(sp.objective, sp.init, params, value_fn=sp.value)

    return solve
