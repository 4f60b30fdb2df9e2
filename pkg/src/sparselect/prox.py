"""Closed-form proximity operators used by the fixed-point solver.

Everything here is a pure function. The quadratic operators cache one
Cholesky factorization per (matrix, rho) pair; the cache holds a strong
reference to the keyed matrix, so identity-based keys cannot be recycled
while an entry is alive.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

_FACTOR_CACHE = {}


def clear_factor_cache():
    _FACTOR_CACHE.clear()


def _gram_factor(A, rho):
    key = (id(A), float(rho))
    hit = _FACTOR_CACHE.get(key)
    if hit is not None and hit[0] is A:
        return hit[1]
    A = np.asarray(A, dtype=float)
    G = rho * np.eye(A.shape[1]) + A.T @ A
    fac = cho_factor(G)
    _FACTOR_CACHE[key] = (A, fac)
    return fac


def per_entry_thresholds(lambdas, layout) -> np.ndarray:
    """Expand per-block penalties to one threshold per penalized entry."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != (layout.d,):
        raise ValueError(f"expected {layout.d} penalties")
    if np.any(lambdas <= 0):
        raise ValueError("penalties must be strictly positive")
    return np.repeat(lambdas, layout.m)


def soft_threshold(x, thresholds) -> np.ndarray:
    """Componentwise soft threshold; dead-zone outputs are exact zeros."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - thresholds, 0.0)


def block_soft_threshold(w, lambdas, alpha, layout) -> np.ndarray:
    """Soft-threshold the penalized part of a lifted vector.

    Entry i of block j is shrunk with threshold alpha * lambda_j; the
    trailing nullspace coordinates pass through unchanged.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    w = np.asarray(w, dtype=float)
    p_d = layout.total_rows
    out = w.copy()
    out[:p_d] = soft_threshold(w[:p_d], alpha * per_entry_thresholds(lambdas, layout))
    return out


def project_constraint(w, stack) -> np.ndarray:
    """Prox of the scaled range-constraint indicator: project the penalized
    part onto range(B), keep the nullspace part. Independent of the scale."""
    w = np.asarray(w, dtype=float)
    p_d = stack.layout.total_rows
    out = w.copy()
    out[:p_d] = stack.project_range(w[:p_d])
    return out


def prox_quadratic(A, x, rho, z) -> np.ndarray:
    """Prox of (1/(2 rho)) ||A u - x||^2: solve (rho I + A^T A) mu = rho z + A^T x."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    fac = _gram_factor(A, rho)
    return cho_solve(fac, rho * np.asarray(z, dtype=float) + A.T @ np.asarray(x, dtype=float))


def prox_quadratic_orthogonal(A, x, rho, z) -> np.ndarray:
    """Orthogonal special case of :func:`prox_quadratic`: (rho z + A^T x)/(rho+1)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return (rho * np.asarray(z, dtype=float) + A.T @ np.asarray(x, dtype=float)) / (rho + 1.0)


def prox_filtered_quadratic(H, y, rho, z) -> np.ndarray:
    """Prox of (1/(2 rho)) ||H (y - u)||^2: (rho I + H^T H)^{-1} (rho z + H^T H y)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    fac = _gram_factor(H, rho)
    return cho_solve(fac, rho * np.asarray(z, dtype=float) + H.T @ (H @ np.asarray(y, dtype=float)))


def prox_hinge(z, rho) -> np.ndarray:
    """Prox of (1/rho) sum_j max(0, 1 - z_j), componentwise three-case map."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    z = np.asarray(z, dtype=float)
    return np.where(z < 1.0 - 1.0 / rho, z + 1.0 / rho, np.where(z > 1.0, z, 1.0))


def conjugate_prox_from_primal(prox_scaled, mu, zeta) -> np.ndarray:
    """Conjugate prox step built from a primal prox rule.

    Given the prox of (1/mu) f and the pre-scaled input zeta, returns
    ``mu * (zeta - prox(zeta))``, which is the conjugate prox of f with
    metric weight 1/mu evaluated at ``mu * zeta``. This is the exact form
    the dual updates of the solver consume.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    zeta = np.asarray(zeta, dtype=float)
    return mu * (zeta - prox_scaled(zeta))
