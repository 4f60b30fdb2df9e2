"""Fidelity terms: tagged data-fit functionals with their prox rules.

Four variants cover the supported models:

* ``LeastSquares(A, x)``      -- 0.5 ||A u - x||^2
* ``OrthogonalLS(A, x)``      -- same with A^T A = I, cheaper prox
* ``FilteredLS(H, y)``        -- 0.5 ||H (y - u)||^2
* ``HingeComposite(X, labels)`` -- sum_j max(0, 1 - y_j u^T x_j)

The hinge case has no standalone prox; the solver runs against the sample
loss with the reconstruction matrix replaced by ``F @ lift`` (F = diag(y) X)
and the fidelity dual is pulled back through ``F^T`` afterwards. That wiring
lives in :class:`CompositePlan` so the solver keeps a single code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import prox
from .matio import load_labeled_samples

HINGE_KINK_TOL = 1e-6


class CompositePlanRequired(TypeError):
    """The hinge fidelity has no direct prox; build a composite plan."""


@dataclass(frozen=True)
class LeastSquares:
    A: np.ndarray
    x: np.ndarray

    def value(self, u):
        return 0.5 * float(np.sum((self.A @ u - self.x) ** 2))

    def gradient(self, u):
        return self.A.T @ (self.A @ u - self.x)

    def prox(self, rho, z):
        return prox.prox_quadratic(self.A, self.x, rho, z)


@dataclass(frozen=True)
class OrthogonalLS:
    """Least squares with an orthogonal design; checked at construction."""

    A: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        gram_err = np.max(np.abs(self.A.T @ self.A - np.eye(self.A.shape[1])))
        if gram_err > 1e-8:
            raise ValueError(f"matrix is not orthogonal (||A^T A - I||_inf = {gram_err:.3e})")

    def value(self, u):
        return 0.5 * float(np.sum((self.A @ u - self.x) ** 2))

    def gradient(self, u):
        return self.A.T @ (self.A @ u - self.x)

    def prox(self, rho, z):
        return prox.prox_quadratic_orthogonal(self.A, self.x, rho, z)


@dataclass(frozen=True)
class FilteredLS:
    H: np.ndarray
    y: np.ndarray

    def value(self, u):
        return 0.5 * float(np.sum((self.H @ (self.y - u)) ** 2))

    def gradient(self, u):
        return self.H.T @ (self.H @ (u - self.y))

    def prox(self, rho, z):
        return prox.prox_filtered_quadratic(self.H, self.y, rho, z)


@dataclass(frozen=True)
class HingeComposite:
    """Hinge loss over labeled samples: rows of X are samples, labels +-1."""

    X: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] != self.labels.shape[0]:
            raise ValueError("one label per sample row required")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")

    @cached_property
    def F(self):
        """Composition matrix diag(labels) @ X."""
        return self.labels[:, None] * self.X

    def value(self, u):
        return float(np.sum(np.maximum(0.0, 1.0 - self.F @ u)))

    def prox(self, rho, z):
        raise CompositePlanRequired(
            "hinge fidelity requires a composition plan; see make_composite_plan")

    @classmethod
    def from_csv(cls, path):
        X, labels = load_labeled_samples(path)
        return cls(X=X, labels=labels)


DIFFERENTIABLE = (LeastSquares, OrthogonalLS, FilteredLS)


def prox_fidelity(f, rho, z):
    """Prox of (1/rho) psi for the direct (non-composite) variants."""
    return f.prox(rho, z)


@dataclass(frozen=True)
class CompositePlan:
    """Run the solver on the sample loss through an effective lift matrix.

    ``lift = F @ recon`` replaces the reconstruction matrix, the sample-space
    prox is the hinge prox, and the fidelity dual in model space is the
    pullback ``F^T a``.
    """

    F: np.ndarray
    lift: np.ndarray
    sigma: float

    def pullback(self, a):
        return self.F.T @ a

    @staticmethod
    def prox_rule(rho, z):
        return prox.prox_hinge(z, rho)


def make_composite_plan(f: HingeComposite, stack) -> CompositePlan:
    if f.X.shape[1] != stack.layout.n:
        raise ValueError("sample feature count does not match the transform")
    lift = np.ascontiguousarray(f.F @ stack.lift_matrix)
    sigma = float(np.linalg.norm(lift, 2))
    return CompositePlan(F=f.F, lift=lift, sigma=sigma)


def subgradient_residual(f, u, a, dual=None) -> float:
    """Distance of ``a`` from the fidelity subdifferential at ``u``.

    Differentiable variants return ``||a - grad psi(u)||_inf``. For the hinge
    composite, ``dual`` must carry the sample-space coefficients whose
    pullback is ``a``; the residual combines the pullback consistency error
    with the componentwise distance to the interval-valued subdifferential
    (kink width ``HINGE_KINK_TOL``).
    """
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    if isinstance(f, DIFFERENTIABLE):
        return float(np.max(np.abs(a - f.gradient(u))))
    if not isinstance(f, HingeComposite):
        raise TypeError(f"unsupported fidelity {type(f).__name__}")
    if dual is None:
        raise ValueError("hinge residual needs the sample-space dual vector")
    dual = np.asarray(dual, dtype=float)
    consistency = float(np.max(np.abs(f.F.T @ dual - a)))
    margins = f.F @ u
    lo = np.where(margins < 1.0 - HINGE_KINK_TOL, -1.0, np.where(margins > 1.0 + HINGE_KINK_TOL, 0.0, -1.0))
    hi = np.where(margins < 1.0 - HINGE_KINK_TOL, -1.0, np.where(margins > 1.0 + HINGE_KINK_TOL, 0.0, 0.0))
    interval = float(np.max(np.maximum(lo - dual, dual - hi).clip(min=0.0))) if dual.size else 0.0
    return max(consistency, interval)
