"""Two-step fixed-point proximity solver for the lifted problem.

One iteration updates the triple (w, fidelity dual, range dual):

* the lifted iterate ``w`` through a block soft threshold fed with a
  two-step combination of the duals, ``(theta-2) * current + (1-theta) *
  previous``;
* the fidelity dual through the conjugate-prox step ``rho * (zeta -
  prox_{(1/rho) psi}(zeta))`` at ``zeta = a/rho + lift @ (w + theta dw)``;
* the range dual through ``beta * (zeta - P_M(zeta))`` at ``zeta = c/beta +
  (w + theta dw)``, with P_M the range-space projection.

With theta = 1 the previous duals drop out and the scheme is the plain
three-line iteration used throughout the experiments. The scalar step
weights (alpha, rho, beta) correspond to diagonally weighted prox metrics;
non-diagonal weightings are out of scope.

Convergence is guaranteed when ``theta^2 * alpha * (rho sigma^2 + beta) < 1``
(sigma the operator norm of the lift matrix in use) and, for theta != 1, a
second ratio bound; see :func:`check_convergence_condition`. The solver warns
but proceeds when the check fails, which keeps deliberate sweep studies
possible.

There is no stopping rule in the underlying scheme itself; we stop when the
max relative change of the triple drops below ``tol`` and then certify the
result by evaluating the three fixed-point residuals.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .prox import (block_soft_threshold, per_entry_thresholds,
                   project_constraint, soft_threshold)


class DivergenceError(RuntimeError):
    def __init__(self, iteration):
        super().__init__(f"divergence detected at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class FppaParams:
    """Scalar step weights and stopping controls.

    The two-step scheme consumes a previous iterate at its first step; we
    bootstrap by taking the previous duals equal to the initial ones, i.e.
    the first computed triple is one plain theta-step from the start.
    """

    alpha: float
    rho: float
    beta: float
    theta: float = 1.0
    max_iter: int = 100_000
    tol: float = 1e-9
    fixed_point_tol: float = 1e-6

    def __post_init__(self):
        if min(self.alpha, self.rho, self.beta) <= 0:
            raise ValueError("alpha, rho, beta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class FppaState:
    """Warm-start triple for a solve."""

    w: np.ndarray
    fid_dual: np.ndarray
    range_dual: np.ndarray


@dataclass
class FppaResult:
    w: np.ndarray
    fid_dual: np.ndarray          # model-space dual (pulled back when composite)
    range_dual: np.ndarray
    iterations: int
    converged: bool
    fixed_point_residuals: tuple
    rel_change: float
    sample_dual: np.ndarray | None = None   # raw sample-space dual (composite only)
    history: list = field(default_factory=list)

    def state(self) -> FppaState:
        """Triple usable as a warm start (raw, pre-pullback duals)."""
        raw = self.sample_dual if self.sample_dual is not None else self.fid_dual
        return FppaState(self.w.copy(), raw.copy(), self.range_dual.copy())


@dataclass(frozen=True)
class ConditionReport:
    satisfied: bool
    margin: float
    contraction: float            # theta^2 alpha (rho sigma^2 + beta)
    ratio: float                  # second-condition ratio, 0 when theta == 1


def check_convergence_condition(params: FppaParams, sigma_bprime: float) -> ConditionReport:
    """Evaluate the scalar convergence conditions for the step weights.

    ``sigma_bprime`` is the operator norm of the lift matrix the solver will
    use (the plain reconstruction matrix, or its composite product). The
    first condition is ``theta^2 alpha (rho sigma^2 + beta) < 1``; for
    theta = 1 it is the only binding one and reduces to
    ``rho sigma^2 + beta < 1/alpha``. For general theta the second condition
    bounds ``|1-theta| sqrt(1+sigma^2) max(alpha, rho, beta)`` against half
    the remaining contraction slack. Both inequalities are strict.
    """
    a, r, b, th = params.alpha, params.rho, params.beta, params.theta
    s2 = sigma_bprime ** 2
    contraction = th * th * a * (r * s2 + b)
    slack1 = 1.0 - contraction
    if th == 1.0:
        return ConditionReport(satisfied=slack1 > 0.0, margin=slack1,
                               contraction=contraction, ratio=0.0)
    denom = 1.0 - abs(th) * np.sqrt(a * (r * s2 + b))
    if denom <= 0.0 or slack1 <= 0.0:
        return ConditionReport(satisfied=False, margin=min(slack1, denom),
                               contraction=contraction, ratio=np.inf)
    ratio = abs(1.0 - th) * np.sqrt(1.0 + s2) * max(a, r, b) / denom
    slack2 = 0.5 - ratio
    return ConditionReport(satisfied=slack1 > 0.0 and slack2 > 0.0,
                           margin=min(slack1, slack2),
                           contraction=contraction, ratio=ratio)


def fixed_point_residuals(w, fid_dual, range_dual, prox_rule, lift, stack,
                          lambdas, params) -> tuple:
    """Sup-norm residuals of the three coupled prox equations at a triple.

    ``fid_dual`` is the raw dual in the space the prox rule acts on (sample
    space when composite). Zero residuals characterize an exact fixed point.
    """
    a, r, b = params.alpha, params.rho, params.beta
    w = np.asarray(w, dtype=float)
    arg_w = w - a * (lift.T @ fid_dual) - a * range_dual
    res_w = float(np.max(np.abs(w - block_soft_threshold(arg_w, lambdas, a, stack.layout))))
    zeta_a = fid_dual / r + lift @ w
    res_a = float(np.max(np.abs(fid_dual - r * (zeta_a - prox_rule(r, zeta_a)))))
    zeta_c = range_dual / b + w
    res_c = float(np.max(np.abs(range_dual - b * (zeta_c - project_constraint(zeta_c, stack)))))
    return (res_w, res_a, res_c)


def _rel_change(new, old):
    return float(np.max(np.abs(new - old)) / (1.0 + np.max(np.abs(new))))


def solve(prox_rule, lift, stack, lambdas, params: FppaParams, init=None,
          pullback=None, objective_fn=None, history_every=0,
          trace_path=None) -> FppaResult:
    """Run the two-step iteration until the triple stops moving.

    Parameters
    ----------
    prox_rule : callable(rho, z) -> ndarray
        Prox of the (possibly sample-space) fidelity scaled by 1/rho.
    lift : ndarray
        Effective reconstruction matrix (stack.lift_matrix, or the composite
        product for the hinge model).
    stack : TransformStack
    lambdas : array of d positive penalties.
    params : FppaParams
    init : FppaState, optional
        Warm start; zeros otherwise.
    pullback : callable, optional
        Maps the raw fidelity dual to model space on output (composite mode).
    objective_fn : callable(w) -> float, optional
        Only evaluated for history/trace records.
    history_every : int
        Record residuals every k iterations (0 = off).
    trace_path : str or Path, optional
        CSV sink with columns iter, rel_change, residuals, objective.

    Raises
    ------
    DivergenceError
        When a non-finite value shows up in the iterate.
    """
    layout = stack.layout
    m_lift = lift.shape[0]
    if init is None:
        w = np.zeros(layout.lifted_dim)
        a_cur = np.zeros(m_lift)
        c_cur = np.zeros(layout.lifted_dim)
    else:
        w = init.w.copy()
        a_cur = init.fid_dual.copy()
        c_cur = init.range_dual.copy()
    a_old = a_cur.copy()
    c_old = c_cur.copy()

    al, rh, be, th = params.alpha, params.rho, params.beta, params.theta
    thr = al * per_entry_thresholds(lambdas, layout)
    liftT = np.ascontiguousarray(lift.T)
    p_d = layout.total_rows

    history = []
    trace_rows = []

    def _record(k, rel):
        res = fixed_point_residuals(w, a_cur, c_cur, prox_rule, lift, stack,
                                    lambdas, params)
        obj = float(objective_fn(w)) if objective_fn is not None else float("nan")
        row = (k, rel, *res, obj)
        history.append(row)
        if trace_path is not None:
            trace_rows.append(row)

    rel = np.inf
    iterations = params.max_iter
    stopped = False
    for k in range(params.max_iter):
        comb_a = (th - 2.0) * a_cur + (1.0 - th) * a_old
        comb_c = (th - 2.0) * c_cur + (1.0 - th) * c_old
        arg = w + al * (liftT @ comb_a) + al * comb_c
        w_new = arg.copy()
        w_new[:p_d] = soft_threshold(arg[:p_d], thr)

        t = w_new + th * (w_new - w)
        zeta_a = a_cur / rh + lift @ t
        if not np.isfinite(zeta_a).all():
            raise DivergenceError(k)
        a_new = rh * (zeta_a - prox_rule(rh, zeta_a))
        zeta_c = c_cur / be + t
        c_new = be * (zeta_c - project_constraint(zeta_c, stack))

        if not np.isfinite(w_new).all() or not np.isfinite(a_new).all() \
                or not np.isfinite(c_new).all():
            raise DivergenceError(k)

        rel = max(_rel_change(w_new, w), _rel_change(a_new, a_cur),
                  _rel_change(c_new, c_cur))
        a_old, c_old = a_cur, c_cur
        w, a_cur, c_cur = w_new, a_new, c_new

        if history_every and (k % history_every == 0):
            _record(k, rel)
        if rel <= params.tol:
            iterations = k + 1
            stopped = True
            break

    if history_every:
        _record(iterations if stopped else params.max_iter, rel)
    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "rel_change", "res_w", "res_fid",
                             "res_range", "objective"])
            writer.writerows(trace_rows)

    residuals = fixed_point_residuals(w, a_cur, c_cur, prox_rule, lift, stack,
                                      lambdas, params)
    converged = stopped and max(residuals) <= params.fixed_point_tol
    fid_model = pullback(a_cur) if pullback is not None else a_cur
    return FppaResult(w=w, fid_dual=fid_model, range_dual=c_cur,
                      iterations=iterations, converged=converged,
                      fixed_point_residuals=residuals, rel_change=rel,
                      sample_dual=a_cur.copy() if pullback is not None else None,
                      history=history)


def solver_warning_check(params, sigma):
    report = check_convergence_condition(params, sigma)
    if not report.satisfied:
        warnings.warn(
            f"step weights violate the convergence condition "
            f"(margin {report.margin:.3e}); proceeding anyway",
            RuntimeWarning, stacklevel=3)
    return report
