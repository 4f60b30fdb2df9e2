"""Problem container binding a fidelity term to a transform stack."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fidelity import CompositePlan, HingeComposite, make_composite_plan, prox_fidelity
from .solver import FppaParams, FppaResult, solve, solver_warning_check


@dataclass(frozen=True)
class Problem:
    """A multi-penalty instance: fidelity + stacked transform (+ plan).

    For the hinge model the plan swaps in the sample-space loss with the
    effective lift matrix and pulls the fidelity dual back afterwards; all
    other variants run directly on the reconstruction matrix.
    """

    fidelity: object
    stack: object
    plan: CompositePlan | None = None

    @classmethod
    def build(cls, fidelity, stack):
        plan = make_composite_plan(fidelity, stack) if isinstance(fidelity, HingeComposite) else None
        return cls(fidelity=fidelity, stack=stack, plan=plan)

    @property
    def lift(self):
        return self.plan.lift if self.plan is not None else self.stack.lift_matrix

    @property
    def sigma(self):
        """Operator norm of the lift matrix the solver will use."""
        if self.plan is not None:
            return self.plan.sigma
        return self.stack.lift_operator_norm()

    def prox_rule(self, rho, z):
        if self.plan is not None:
            return self.plan.prox_rule(rho, z)
        return prox_fidelity(self.fidelity, rho, z)

    def pullback(self, a):
        return self.plan.pullback(a) if self.plan is not None else a

    def recover(self, w):
        return self.stack.lift(w)

    def objective(self, lambdas, u) -> float:
        """psi(u) + sum_j lambda_j ||B_j u||_1 evaluated at a model vector."""
        lambdas = np.asarray(lambdas, dtype=float)
        Bu = self.stack.B @ np.asarray(u, dtype=float)
        layout = self.stack.layout
        reg = sum(lambdas[j] * np.sum(np.abs(Bu[layout.block_slice(j)]))
                  for j in range(layout.d))
        return self.fidelity.value(u) + float(reg)

    def solve(self, lambdas, params: FppaParams, init=None, check=True,
              **solve_kwargs) -> FppaResult:
        if check:
            solver_warning_check(params, self.sigma)
        pullback = self.plan.pullback if self.plan is not None else None
        objective_fn = None
        if solve_kwargs.get("history_every") or solve_kwargs.get("trace_path"):
            objective_fn = lambda w: self.objective(lambdas, self.recover(w))
        return solve(self.prox_rule, self.lift, self.stack, lambdas, params,
                     init=init, pullback=pullback, objective_fn=objective_fn,
                     **solve_kwargs)
