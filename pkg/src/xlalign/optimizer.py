"""Riemannian conjugate gradient with Armijo backtracking line search.

Solver for smooth cost functions over a ProductManifold.  The search
direction is Polak-Ribiere+ conjugate gradient with automatic restart
to steepest descent whenever conjugacy produces a non-descent
direction, which keeps every accepted step a strict decrease.
"""

import sys

import numpy as np

from dataclasses import dataclass, field
from typing import Callable, Optional

from .manifolds import NumericalError, ProductManifold


@dataclass
class Problem:
    """Cost and Euclidean gradient of a function on a product manifold.

    ``egrad`` returns the ambient (Euclidean) gradient as a tuple
    aligned with the manifold factors; the solver converts it to the
    Riemannian gradient itself.
    """

    manifold: ProductManifold
    cost: Callable
    egrad: Callable


@dataclass
class SolverOptions:
    max_iters: int = 500
    grad_tol: float = 1e-6        # stop when |grad| <= grad_tol * (1 + |cost|)
    step_tol: float = 1e-10       # line search gives up below this trial step
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 25
    verbosity: int = 0

    def validate(self) -> None:
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not 0 < self.armijo_slope < 1:
            raise ValueError("armijo_slope must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.grad_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class LineSearchResult:
    step: float
    point: tuple
    cost: float
    evaluations: int
    failed: bool


@dataclass
class SolverReport:
    point: tuple
    cost: float
    grad_norm: float
    iterations: int
    termination: str              # gradient_tolerance | max_iterations | line_search_failed
    cost_history: list = field(default_factory=list)


def _backtrack(problem, point, direction, cost0, slope0, initial_step, options):
    """Armijo backtracking core.  slope0 must be the (negative)
    directional derivative of the cost along ``direction``."""
    step = initial_step
    evaluations = 0
    for _ in range(options.max_backtracks + 1):
        if step < options.step_tol:
            break
        try:
            trial = problem.manifold.retract(point, direction, step)
            trial_cost = problem.cost(trial)
        except NumericalError:
            trial_cost = np.inf
        evaluations += 1
        if np.isfinite(trial_cost) and trial_cost <= cost0 + options.armijo_slope * step * slope0:
            return LineSearchResult(step, trial, float(trial_cost), evaluations, False)
        step *= options.backtrack_factor
    return LineSearchResult(0.0, point, cost0, evaluations, True)


def line_search_armijo(problem: Problem, point, direction,
                       initial_step: Optional[float] = None,
                       options: Optional[SolverOptions] = None) -> LineSearchResult:
    """Standalone Armijo search along ``direction`` from ``point``.

    Raises ValueError if ``direction`` is not a descent direction at
    ``point`` (nonnegative directional derivative).
    """
    options = options or SolverOptions()
    options.validate()
    m = problem.manifold
    cost0 = float(problem.cost(point))
    grad = m.egrad_to_rgrad(point, problem.egrad(point))
    slope0 = m.inner(point, grad, direction)
    if not slope0 < 0:
        raise ValueError(f"not a descent direction (directional derivative {slope0:.3e})")
    if initial_step is None:
        initial_step = 1.0 / max(m.norm(point, direction), np.finfo(float).tiny)
    return _backtrack(problem, point, direction, cost0, slope0, initial_step, options)


def _finite_tangent(xi) -> bool:
    return all(np.all(np.isfinite(x)) for x in xi)


def rcg_minimize(problem: Problem, init, options: Optional[SolverOptions] = None,
                 callback: Optional[Callable] = None) -> SolverReport:
    """Minimize ``problem`` starting at ``init``.

    Returns a SolverReport whose ``point`` is feasible (each factor on
    its manifold) and whose ``cost_history`` is strictly decreasing
    after the initial entry.  ``callback(point, cost)`` runs after
    every accepted iterate.
    """
    options = options or SolverOptions()
    options.validate()
    m = problem.manifold
    m.check_point(init)

    point = tuple(np.array(p, dtype=float) for p in init)
    cost = float(problem.cost(point))
    if not np.isfinite(cost):
        raise ValueError("cost is not finite at the initial point")
    grad = m.egrad_to_rgrad(point, problem.egrad(point))
    if not _finite_tangent(grad):
        raise ValueError("gradient is not finite at the initial point")
    grad_sq = m.inner(point, grad, grad)
    grad_norm = float(np.sqrt(max(grad_sq, 0.0)))

    history = [cost]
    direction = m.lincomb(-1.0, grad)
    prev_step = None
    iterations = 0
    termination = "max_iterations"

    for _ in range(options.max_iters):
        if grad_norm <= options.grad_tol * (1.0 + abs(cost)):
            termination = "gradient_tolerance"
            break

        slope = m.inner(point, grad, direction)
        if not (np.isfinite(slope) and slope < 0):
            # conjugacy went stale; fall back to steepest descent
            direction = m.lincomb(-1.0, grad)
            slope = -grad_sq

        if prev_step is not None:
            initial_step = 2.0 * prev_step
        else:
            initial_step = 1.0 / max(m.norm(point, direction), np.finfo(float).tiny)

        result = _backtrack(problem, point, direction, cost, slope, initial_step, options)
        if result.failed and slope != -grad_sq:
            # retry once from scratch along steepest descent
            direction = m.lincomb(-1.0, grad)
            slope = -grad_sq
            initial_step = 1.0 / max(grad_norm, np.finfo(float).tiny)
            result = _backtrack(problem, point, direction, cost, slope, initial_step, options)
        if result.failed:
            termination = "line_search_failed"
            break

        new_point = result.point
        new_grad = m.egrad_to_rgrad(new_point, problem.egrad(new_point))
        if not _finite_tangent(new_grad):
            termination = "line_search_failed"
            break
        new_grad_sq = m.inner(new_point, new_grad, new_grad)

        # Polak-Ribiere+ with transported previous gradient and direction
        grad_old_moved = m.transport(new_point, grad)
        diff = m.lincomb(1.0, new_grad, -1.0, grad_old_moved)
        beta = max(0.0, m.inner(new_point, new_grad, diff) / grad_sq) if grad_sq > 0 else 0.0
        direction = m.lincomb(-1.0, new_grad, beta, m.transport(new_point, direction))

        point, cost = new_point, result.cost
        grad, grad_sq = new_grad, new_grad_sq
        grad_norm = float(np.sqrt(max(grad_sq, 0.0)))
        prev_step = result.step
        iterations += 1
        history.append(cost)
        if options.verbosity >= 1:
            print(f"iter={iterations} cost={cost:.10e} grad_norm={grad_norm:.3e} "
                  f"step={result.step:.3e}", file=sys.stderr)
        if callback is not None:
            callback(point, cost)
    else:
        # loop ran out; re-check the gradient test so a point that is
        # already converged at the boundary reports the right reason
        if grad_norm <= options.grad_tol * (1.0 + abs(cost)):
            termination = "gradient_tolerance"

    return SolverReport(point=point, cost=cost, grad_norm=grad_norm,
                        iterations=iterations, termination=termination,
                        cost_history=history)
