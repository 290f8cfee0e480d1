"""Smooth convex inner solver: Barzilai-Borwein gradient descent with Armijo
backtracking and a composite relative stopping test.

The update is ``x <- x - step_scale * alpha * grad`` where ``alpha`` is a
safeguarded BB steplength (adaptive alternation between the two classical
rules by default) and ``step_scale`` in (0, 1] comes from an Armijo
linesearch along the scaled negative gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]

BB_RULES = ("adaptive", "alternate", "bb1", "bb2")


class NonFiniteError(RuntimeError):
    """Objective or gradient became non-finite; carries the iterate index."""

    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


class LinesearchStagnation(RuntimeError):
    """Armijo backtracking exhausted its shrink budget."""


@dataclass
class SolverParams:
    tau: float = 1e-4
    max_iters: int = 20000
    alpha_min: float = 1e-8
    alpha_max: float = 1e8
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    bb_switch_rule: str = "adaptive"
    max_backtracks: int = 60
    keep_history: bool = False

    def __post_init__(self) -> None:
        if not (0 < self.alpha_min < self.alpha_max):
            raise ValueError("need 0 < alpha_min < alpha_max")
        if not (0 < self.armijo_c < 1):
            raise ValueError("need 0 < armijo_c < 1")
        if not (0 < self.armijo_shrink < 1):
            raise ValueError("need 0 < armijo_shrink < 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.bb_switch_rule not in BB_RULES:
            raise ValueError(f"bb_switch_rule must be one of {BB_RULES}")


@dataclass
class SolveResult:
    minimizer: np.ndarray
    final_value: float
    iterations: int
    converged: bool
    stop_reason: str  # "tolerance" | "max_iters" | "stagnation"
    history: Optional[List[Tuple[int, float, float, float]]] = None


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def bb_steplength(s: np.ndarray, y: np.ndarray, rule: str = "bb1",
                  bounds: Tuple[float, float] = (1e-8, 1e8)) -> float:
    """Barzilai-Borwein steplength from the last step s and gradient change y.

    BB1 = <s,s>/<s,y>, BB2 = <s,y>/<y,y>, clamped into ``bounds``.  When the
    curvature estimate <s,y> is not positive the safeguard value alpha_max is
    returned, keeping this a total function.
    """
    s = np.asarray(s, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if s.shape != y.shape:
        raise ValueError("s and y must have the same dimension")
    lo, hi = bounds
    sy = float(np.dot(s, y))
    if sy <= 0.0:
        return hi
    if rule == "bb1":
        return _clamp(float(np.dot(s, s)) / sy, lo, hi)
    if rule == "bb2":
        return _clamp(sy / float(np.dot(y, y)), lo, hi)
    raise ValueError("rule must be 'bb1' or 'bb2'")


def armijo_search(objective: Objective, point: np.ndarray, direction: np.ndarray,
                  initial_step: float = 1.0,
                  params: Optional[SolverParams] = None) -> float:
    """Backtracking linesearch: largest tried step in (0, 1]*initial_step with
    f(x + t*d) <= f(x) + c*t*<grad, d>.  Raises on non-descent directions and
    on stagnation after the shrink budget."""
    params = params or SolverParams()
    f0, g0 = objective(point)
    slope = float(np.vdot(g0, direction).real)
    if not slope < 0:
        raise ValueError(f"not a descent direction: <grad, d> = {slope}")
    step = float(initial_step)
    for _ in range(params.max_backtracks):
        f_trial, _ = objective(point + step * direction)
        if np.isfinite(f_trial) and f_trial <= f0 + params.armijo_c * step * slope:
            return step
        step *= params.armijo_shrink
    raise LinesearchStagnation(
        f"no sufficient decrease after {params.max_backtracks} shrinks")


def _choose_bb(s: np.ndarray, y: np.ndarray, iteration: int,
               params: SolverParams) -> float:
    bounds = (params.alpha_min, params.alpha_max)
    rule = params.bb_switch_rule
    if rule == "bb1":
        return bb_steplength(s, y, "bb1", bounds)
    if rule == "bb2":
        return bb_steplength(s, y, "bb2", bounds)
    if rule == "alternate":
        return bb_steplength(s, y, "bb1" if iteration % 2 == 0 else "bb2", bounds)
    a1 = bb_steplength(s, y, "bb1", bounds)
    a2 = bb_steplength(s, y, "bb2", bounds)
    # adaptive alternation: prefer the small (BB2) step when the two rules
    # disagree strongly, a standard switching criterion
    if a2 / a1 < 0.5:
        return a2
    return a1


def minimize(objective: Objective, init: np.ndarray,
             params: Optional[SolverParams] = None,
             value_fn: Optional[Callable[[np.ndarray], float]] = None
             ) -> SolveResult:
    """Minimise a continuously differentiable convex objective.

    Stops at the first iterate satisfying both relative conditions
    |F(x+) - F(x)| / |F(x+)| <= tau and ||grad F(x+)|| / ||grad F(x0)|| <= tau,
    or at the iteration cap, or when the linesearch stagnates.  The returned
    point never has a larger objective value than the initial guess.

    ``value_fn`` optionally evaluates the objective value alone; when given,
    backtracking trials past the first skip the gradient.
    """
    params = params or SolverParams()
    x = np.asarray(init, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial guess must be finite")
    f, g = objective(x)
    if not np.isfinite(f):
        raise NonFiniteError(0, "objective value")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(0, "gradient")
    g0_norm = float(np.linalg.norm(g.ravel()))
    history: Optional[List[Tuple[int, float, float, float]]] = \
        [(0, f, g0_norm, 0.0)] if params.keep_history else None
    if g0_norm == 0.0:
        return SolveResult(minimizer=x, final_value=f, iterations=0,
                           converged=True, stop_reason="tolerance",
                           history=history)

    s_prev: Optional[np.ndarray] = None
    y_prev: Optional[np.ndarray] = None
    iterations = 0
    for it in range(params.max_iters):
        if s_prev is None:
            alpha = _clamp(1.0 / g0_norm, params.alpha_min, params.alpha_max)
        else:
            alpha = _choose_bb(s_prev, y_prev, it, params)
        d = -alpha * g
        slope = float(np.vdot(g, d).real)

        step = 1.0
        accepted = False
        f_new = f
        g_new = g
        x_new = x
        for trial in range(params.max_backtracks):
            x_try = x + step * d
            if trial == 0 or value_fn is None:
                f_try, g_try = objective(x_try)
            else:
                f_try, g_try = value_fn(x_try), None
            if np.isfinite(f_try) and \
                    f_try <= f + params.armijo_c * step * slope:
                if g_try is None:
                    f_try, g_try = objective(x_try)
                x_new, f_new, g_new = x_try, f_try, g_try
                accepted = True
                break
            step *= params.armijo_shrink
        if not accepted:
            return SolveResult(minimizer=x, final_value=f, iterations=iterations,
                               converged=False, stop_reason="stagnation",
                               history=history)
        if not np.all(np.isfinite(g_new)):
            raise NonFiniteError(it + 1, "gradient")

        s_prev = (x_new - x).ravel()
        y_prev = (g_new - g).ravel()
        iterations = it + 1
        grad_norm = float(np.linalg.norm(g_new.ravel()))
        if params.keep_history:
            history.append((iterations, f_new, grad_norm, step * alpha))

        f_old, x, f, g = f, x_new, f_new, g_new
        if f != 0.0:
            rel_dec = abs(f - f_old) / abs(f)
        else:
            rel_dec = 0.0 if f == f_old else float("inf")
        if rel_dec <= params.tau and grad_norm / g0_norm <= params.tau:
            return SolveResult(minimizer=x, final_value=f, iterations=iterations,
                               converged=True, stop_reason="tolerance",
                               history=history)

    return SolveResult(minimizer=x, final_value=f, iterations=iterations,
                       converged=False, stop_reason="max_iters", history=history)


def history_to_csv(history, out) -> None:
    """Write an iteration log as CSV ``iter,f,grad_norm,step`` (requires a
    solve run with ``keep_history``)."""
    if history is None:
        raise ValueError("no history recorded; set SolverParams.keep_history")
    own = isinstance(out, str)
    fh = open(out, "w", newline="") if own else out
    try:
        fh.write("iter,f,grad_norm,step\n")
        for it, f, gn, step in history:
            fh.write(f"{it},{f!r},{gn!r},{step!r}\n")
    finally:
        if own:
            fh.close()


def grad_check(objective: Objective, point: np.ndarray,
               epsilon: float = 1e-5) -> float:
    """Max relative discrepancy between the analytic gradient and central
    finite differences of the objective value at ``point``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    _, g = objective(x)
    g = np.asarray(g, dtype=float)
    fd = np.zeros_like(x, dtype=float)
    flat = x.ravel()
    fd_flat = fd.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + epsilon
        f_plus, _ = objective(x)
        flat[i] = keep - epsilon
        f_minus, _ = objective(x)
        flat[i] = keep
        fd_flat[i] = (f_plus - f_minus) / (2.0 * epsilon)
    scale = max(float(np.max(np.abs(g))), float(np.max(np.abs(fd))), 1e-300)
    return float(np.max(np.abs(g - fd))) / scale
