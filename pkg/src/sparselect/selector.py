"""Sparsity-level-guided selection of the penalty weights.

The iterative scheme solves the lifted problem at the current penalties,
counts exact nonzeros per penalized block, and walks each penalty down the
sorted certificate values

    cert[j][i] = | column_i(lift_matrix)^T fid_dual + range_dual_i |

restricted to the penalized rows, until the attained levels match the
targets within the tolerance. Two corrections keep the walk moving:

* invalid update: when the sorted pick equals the current penalty, take the
  largest certificate strictly below it instead (strict decrease or flag
  stagnation when no smaller value exists);
* overshoot fallback: when a block has more nonzeros than targeted, the
  penalty was too small; re-pick from the previously recorded table at a
  position shifted up by the accumulated overshoot and re-solve until the
  level falls back under the target. When no previous table exists (too-small
  start) or the shifted pick cannot increase the penalty, the penalty is
  doubled instead, which restores progress in the direction the correction
  needs.

Every inner solve starts cold. Warm-starting from the previous triple looks
like a free speedup but is not: the range-constraint dual is not unique at a
fixed point, and a warm-started run lands on the dual nearest the previous
one, which keeps the certificates of boundary coordinates saturated at the
old penalty. The walk then takes vanishing steps and stalls short of the
targets. Cold starts reproduce the spread-out certificates the update rule
needs.

Certificates come out of an iterative solver, so values that are equal in
exact arithmetic differ by the solver tolerance here. Two constants keep the
update rule off that knife edge: comparisons against the current penalty use
a relative tie band (``TIE_REL_TOL``), and every updated penalty is scaled up
by ``BOUNDARY_REL_NUDGE`` so the coordinate whose certificate was picked
lands strictly inside the soft-threshold dead zone at the next solve, as it
would in exact arithmetic. The nudge must dominate the solver's certificate
error, so selection runs want an inner tolerance well below 1e-9.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .solver import FppaParams


class NotBlockSeparableError(ValueError):
    """Design matrix fails the separability check; use select() instead."""


TIE_REL_TOL = 1e-7
BOUNDARY_REL_NUDGE = 1e-9


@dataclass(frozen=True)
class SelectorConfig:
    targets: tuple
    lambda0: tuple
    epsilon: int = 2
    max_outer: int = 50
    max_fallback: int = 20
    fppa: FppaParams = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.fppa is None:
            raise ValueError("fppa parameters are required")


@dataclass
class CertificateTable:
    """Per-block certificate magnitudes with stable nondecreasing order."""

    values: list                 # list of per-block arrays, natural order
    order: list                  # argsort per block, ties by ascending index
    provenance: str = ""

    def sorted_values(self, j):
        return self.values[j][self.order[j]]


@dataclass
class OuterRecord:
    index: int
    lambdas: np.ndarray
    levels: np.ndarray
    cert_sorted: list
    supports: list
    stagnated: list
    fallback: bool = False


@dataclass
class SelectionResult:
    lambda_star: np.ndarray
    levels: np.ndarray
    outer_iterations: int
    total_solves: int
    total_solver_time: float
    trace: list
    terminated_by: str
    final: object                 # FppaResult of the last solve
    best_lambdas: np.ndarray = None
    best_levels: np.ndarray = None
    best_gap: int = None


def count_sparsity(w, layout) -> np.ndarray:
    """Exact nonzero count of each penalized block of a lifted vector.

    The solver's soft threshold writes exact floating-point zeros inside the
    dead zone, so no tolerance enters here.
    """
    w = np.asarray(w)
    return np.array([int(np.count_nonzero(w[layout.block_slice(j)]))
                     for j in range(layout.d)])


def certificates(stack, fid_dual, range_dual, provenance="") -> CertificateTable:
    """Certificate magnitudes |lift_col^T a + c_i| over the penalized rows."""
    full = stack.lift_matrix.T @ np.asarray(fid_dual, dtype=float)
    layout = stack.layout
    g = np.abs(full[:layout.total_rows] + np.asarray(range_dual, dtype=float)[:layout.total_rows])
    values = [g[layout.block_slice(j)].copy() for j in range(layout.d)]
    order = [np.argsort(v, kind="stable") for v in values]
    return CertificateTable(values=values, order=order, provenance=provenance)


def update_lambda(sorted_certs, lam, target, tie_rel_tol=TIE_REL_TOL,
                  boundary_rel_nudge=BOUNDARY_REL_NUDGE):
    """Undershoot update: pick the (m - target)-th smallest certificate,
    corrected by the largest value strictly below the current penalty.

    Values within ``tie_rel_tol * lam`` of the current penalty count as ties
    (they are equal up to solver error), and the result is scaled up by
    ``boundary_rel_nudge``; see the module docstring. Returns
    (new_lambda, stagnated). Stagnation means no certificate lies strictly
    below the current penalty, so no valid decrease exists; the penalty is
    returned unchanged.
    """
    sorted_certs = np.asarray(sorted_certs, dtype=float)
    m = sorted_certs.size
    candidate = float(sorted_certs[m - target])
    below = sorted_certs[sorted_certs < lam * (1.0 - tie_rel_tol)]
    if below.size == 0:
        return lam, True
    if candidate >= lam * (1.0 - tie_rel_tol):
        candidate = np.inf          # tied with the current penalty: invalid
    new = min(candidate, float(below[-1]))
    if new <= 0.0:
        # all certificates under lam are exactly zero; nothing to walk to
        return lam, True
    return new * (1.0 + boundary_rel_nudge), False


def _fallback_candidate(table_entry, lam_cur, target, shift,
                        tie_rel_tol=TIE_REL_TOL,
                        boundary_rel_nudge=BOUNDARY_REL_NUDGE):
    """Overshoot re-pick from a previously recorded sorted table.

    Falls back to doubling when no table exists or the pick cannot strictly
    increase the penalty (the recorded values never exceed the penalty they
    were computed against).
    """
    if table_entry is None:
        return 2.0 * lam_cur
    sorted_certs, lam_ref = table_entry
    m = sorted_certs.size
    idx = min(m - 1, m - target + shift)
    candidate = float(sorted_certs[idx])
    below = sorted_certs[sorted_certs < lam_ref * (1.0 - tie_rel_tol)]
    if below.size:
        candidate = min(candidate, float(below[-1]))
    candidate *= 1.0 + boundary_rel_nudge
    if candidate > lam_cur * (1.0 + tie_rel_tol):
        return candidate
    # the shifted pick cannot raise the penalty; take the smallest recorded
    # value that can, and only double when the whole table sits at or below
    above = sorted_certs[sorted_certs > lam_cur * (1.0 + tie_rel_tol)]
    if above.size:
        return float(above[0]) * (1.0 + boundary_rel_nudge)
    return 2.0 * lam_cur


def select(problem, config: SelectorConfig) -> SelectionResult:
    """Iterate penalty updates until the sparsity targets are met.

    Terminates with status ``tolerance`` when ``sum_j |level_j - target_j|
    <= epsilon``, with ``stagnation`` when no block can move, and with
    ``max_outer`` otherwise; in the latter case the best iterate seen (by
    level gap) is reported alongside the final one.
    """
    layout = problem.stack.layout
    targets = np.asarray(config.targets, dtype=int)
    if targets.shape != (layout.d,) or np.any(targets < 0) or np.any(targets > layout.m):
        raise ValueError("targets must satisfy 0 <= target_j <= m_j")
    lam = np.asarray(config.lambda0, dtype=float).copy()
    if lam.shape != (layout.d,) or np.any(lam <= 0):
        raise ValueError("lambda0 must be d positive values")

    tables = [None] * layout.d
    trace = []
    t_start = time.perf_counter()
    solves = 0
    best = (np.inf, lam.copy(), None)

    def run_solve():
        nonlocal solves
        solves += 1
        return problem.solve(lam, config.fppa, check=(solves == 1))

    def record(idx, res, levels, stagnated=None, fallback=False):
        table = certificates(problem.stack, res.fid_dual, res.range_dual,
                             provenance=f"outer {idx}")
        supports = [np.flatnonzero(res.w[layout.block_slice(j)])
                    for j in range(layout.d)]
        trace.append(OuterRecord(
            index=idx, lambdas=lam.copy(), levels=levels.copy(),
            cert_sorted=[table.sorted_values(j) for j in range(layout.d)],
            supports=supports,
            stagnated=list(stagnated) if stagnated is not None else [False] * layout.d,
            fallback=fallback))
        return table

    res = run_solve()
    levels = count_sparsity(res.w, layout)
    table = record(0, res, levels)
    if int(np.sum(levels > targets)):
        warnings.warn("initial penalties overshoot some targets; engaging the "
                      "fallback immediately", RuntimeWarning, stacklevel=2)

    terminated = "max_outer"
    outer = 0
    for outer in range(config.max_outer):
        gap = int(np.abs(levels - targets).sum())
        if gap < best[0]:
            best = (gap, lam.copy(), levels.copy())
        if gap <= config.epsilon:
            terminated = "tolerance"
            break

        stagnated = [False] * layout.d
        any_progress = False
        for j in range(layout.d):
            if levels[j] < targets[j]:
                sorted_j = table.sorted_values(j)
                tables[j] = (sorted_j, lam[j])
                new, stag = update_lambda(sorted_j, lam[j], int(targets[j]))
                stagnated[j] = stag
                if not stag:
                    lam[j] = new
                    any_progress = True
            elif levels[j] > targets[j]:
                shift = 0
                for _ in range(config.max_fallback):
                    shift += int(levels[j] - targets[j])
                    lam[j] = _fallback_candidate(tables[j], lam[j],
                                                 int(targets[j]), shift)
                    any_progress = True
                    res = run_solve()
                    levels = count_sparsity(res.w, layout)
                    table = record(outer + 1, res, levels, fallback=True)
                    if levels[j] <= targets[j]:
                        break
        if not any_progress:
            trace[-1].stagnated = stagnated
            terminated = "stagnation"
            break

        res = run_solve()
        levels = count_sparsity(res.w, layout)
        table = record(outer + 1, res, levels, stagnated=stagnated)
    else:
        gap = int(np.abs(levels - targets).sum())
        if gap < best[0]:
            best = (gap, lam.copy(), levels.copy())
        if gap <= config.epsilon:
            terminated = "tolerance"

    elapsed = time.perf_counter() - t_start
    n_outer = sum(1 for rec in trace if not rec.fallback)
    return SelectionResult(
        lambda_star=lam.copy(), levels=levels.copy(),
        outer_iterations=n_outer, total_solves=solves,
        total_solver_time=elapsed, trace=trace, terminated_by=terminated,
        final=res, best_lambdas=best[1],
        best_levels=best[2] if best[2] is not None else levels.copy(),
        best_gap=int(best[0]) if np.isfinite(best[0]) else int(np.abs(levels - targets).sum()))


# --- closed-form rule for separable designs ---------------------------------

def closed_form_select(A, x, targets, partitions, tol=1e-8,
                       boundary_rel_nudge=1e-12) -> np.ndarray:
    """Direct penalty choice when the quadratic fidelity splits per column.

    ``partitions`` lists the column-index arrays of the blocks. The design
    must have a diagonal Gram matrix to tolerance ``tol`` (columns orthogonal
    within and across blocks); that is verified, not assumed. Per block the
    rule sorts ``|A_col^T x|`` and returns the value at position
    ``m_j - target_j`` (the whole-block case ``target_j == m_j`` returns a
    tenth of the smallest value instead).

    The returned value is scaled up by ``boundary_rel_nudge`` so the
    coefficient sitting exactly at the cut lands strictly inside the
    soft-threshold dead zone in floating point; without it the boundary
    entry resolves to zero or not depending on last-bit rounding.
    """
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    G = A.T @ A
    off = G - np.diag(np.diag(G))
    scale = max(1.0, float(np.max(np.abs(np.diag(G)))))
    worst = float(np.max(np.abs(off))) if off.size else 0.0
    if worst > tol * scale:
        raise NotBlockSeparableError(
            f"Gram off-diagonal magnitude {worst:.3e} exceeds tolerance; "
            "the fidelity does not separate over these blocks -- use select()")
    corr = np.abs(A.T @ x)
    lambdas = np.empty(len(partitions))
    for j, cols in enumerate(partitions):
        cols = np.asarray(cols, dtype=int)
        g = np.sort(corr[cols])
        m = g.size
        lj = int(targets[j])
        if not 0 <= lj <= m:
            raise ValueError(f"target {lj} outside [0, {m}] for block {j}")
        if lj == m:
            lam = 0.1 * g[0]
        else:
            lam = g[m - lj - 1] * (1.0 + boundary_rel_nudge)
        lambdas[j] = max(lam, np.finfo(float).tiny)
    return lambdas


# --- post-hoc certificates and diagnostics ----------------------------------

@dataclass
class PatternReport:
    ok: bool
    max_equality_dev: float       # worst |cert - lambda| over nonzero entries
    max_inequality_excess: float  # worst cert - lambda over zero entries
    per_block: list


def sparsity_pattern_check(stack, w, fid_dual, range_dual, lambdas,
                           rtol=1e-5) -> PatternReport:
    """Optimality pattern at a solved triple.

    At every nonzero penalized entry the certificate must equal the block
    penalty to ``rtol * (1 + lambda_j)``; at zero entries it must not exceed
    ``lambda_j + rtol``; and the non-penalized tail of ``lift^T fid_dual``
    must vanish to ``rtol * (1 + ||fid_dual||_inf)``.
    """
    layout = stack.layout
    lambdas = np.asarray(lambdas, dtype=float)
    table = certificates(stack, fid_dual, range_dual)
    full = stack.lift_matrix.T @ np.asarray(fid_dual, dtype=float)
    tail = float(np.max(np.abs(full[layout.total_rows:]))) if layout.lifted_dim > layout.total_rows else 0.0
    tail_ok = tail <= rtol * (1.0 + float(np.max(np.abs(fid_dual))))
    worst_eq = 0.0
    worst_ineq = -np.inf
    per_block = []
    ok = tail_ok
    for j in range(layout.d):
        z = np.asarray(w)[layout.block_slice(j)]
        certs = table.values[j]
        nz = z != 0.0
        eq_dev = float(np.max(np.abs(certs[nz] - lambdas[j]))) if nz.any() else 0.0
        ineq_excess = float(np.max(certs[~nz] - lambdas[j])) if (~nz).any() else -np.inf
        blk_ok = (eq_dev <= rtol * (1.0 + lambdas[j])) and (ineq_excess <= rtol)
        ok = ok and blk_ok
        worst_eq = max(worst_eq, eq_dev)
        worst_ineq = max(worst_ineq, ineq_excess)
        per_block.append({"equality_dev": eq_dev, "inequality_excess": ineq_excess,
                          "ok": blk_ok})
    return PatternReport(ok=ok, max_equality_dev=worst_eq,
                         max_inequality_excess=worst_ineq, per_block=per_block)


@dataclass
class AssumptionReport:
    level_bound_per_iter: list    # levels <= targets at each recorded solve
    level_bound_ok: bool
    lambda_monotone: list         # per block: nonincreasing over the trace
    lambda_monotone_ok: bool
    lambda_diffs: list            # per block: successive |differences|
    cert_deviation: list          # per record: max |sorted certs - terminal|
    support_inclusion: list       # per step, per block: supp_k subset supp_{k+1}
    support_inclusion_ok: bool

    def to_dict(self):
        return {
            "level_bound_per_iter": [list(map(bool, row)) for row in self.level_bound_per_iter],
            "level_bound_ok": bool(self.level_bound_ok),
            "lambda_monotone": list(map(bool, self.lambda_monotone)),
            "lambda_monotone_ok": bool(self.lambda_monotone_ok),
            "lambda_diffs": [[float(v) for v in row] for row in self.lambda_diffs],
            "cert_deviation": [float(v) for v in self.cert_deviation],
            "support_inclusion": [[bool(b) for b in row] for row in self.support_inclusion],
            "support_inclusion_ok": bool(self.support_inclusion_ok),
        }


def verify_assumptions(trace, targets) -> AssumptionReport:
    """Observational report over a selection trace.

    Checks, per recorded solve: whether every block stayed at or under its
    target; whether each penalty sequence is nonincreasing (with their
    successive differences for decay inspection); how far the sorted
    certificates sit from the terminal snapshot; and whether the per-block
    supports grow by inclusion from step to step. A single-record trace
    passes vacuously. Nothing here is enforced; the quantities mirror the
    behavior the outer loop relies on but cannot guarantee a priori.
    """
    targets = np.asarray(targets, dtype=int)
    if isinstance(trace, SelectionResult):
        trace = trace.trace
    records = list(trace)
    d = targets.size
    level_rows = [list(rec.levels <= targets) for rec in records]
    level_ok = all(all(row) for row in level_rows)

    lam_seq = np.array([rec.lambdas for rec in records])
    monotone = []
    diffs = []
    for j in range(d):
        seq = lam_seq[:, j]
        step = np.diff(seq)
        tol = 1e-12 * (1.0 + np.abs(seq[:-1]))
        monotone.append(bool(np.all(step <= tol)) if step.size else True)
        diffs.append(list(np.abs(step)))

    terminal = records[-1].cert_sorted
    cert_dev = []
    for rec in records:
        dev = max(float(np.max(np.abs(rec.cert_sorted[j] - terminal[j])))
                  for j in range(d))
        cert_dev.append(dev)

    inclusion = []
    for prev, nxt in zip(records, records[1:]):
        inclusion.append([bool(np.isin(prev.supports[j], nxt.supports[j]).all())
                          for j in range(d)])
    inclusion_ok = all(all(row) for row in inclusion)

    return AssumptionReport(
        level_bound_per_iter=level_rows, level_bound_ok=level_ok,
        lambda_monotone=monotone, lambda_monotone_ok=all(monotone),
        lambda_diffs=diffs, cert_deviation=cert_dev,
        support_inclusion=inclusion, support_inclusion_ok=inclusion_ok)
