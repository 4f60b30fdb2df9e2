"""Stacked penalty transforms and the SVD-based change of variables.

A problem ``min psi(u) + sum_j lam_j ||B_j u||_1`` is handled through the
stacked matrix ``B`` obtained by concatenating the blocks ``B_j`` row-wise.
From the SVD ``B = U diag(sigma) V^T`` (rank ``r``) we build the n x (p+n-r)
reconstruction matrix that maps the lifted variable ``w = [z; v]`` back to
``u``, where ``z = B u`` and ``v`` holds the nullspace coordinates of ``u``.

The v-recovery rule is ``v = (V^T u)[r:]``: the reconstruction matrix applied
to ``[B u; v]`` first maps ``z`` through ``Ur^T`` and the inverse singular
values, which reproduces the leading ``r`` coordinates of ``V^T u``, so the
trailing ``n - r`` coordinates must be supplied directly for the round trip
``lift(encode(u)) == u`` to hold.

All objects here are immutable after assembly and safe to share across
threads; every operation is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_RANK_TOL = 1e-10


class DegenerateTransformError(ValueError):
    """Stacked transform is numerically zero (largest singular value is 0)."""


@dataclass(frozen=True)
class BlockLayout:
    """Row-block structure of a stacked transform.

    Attributes
    ----------
    m : tuple of int
        Row count of each block.
    n : int
        Column count shared by all blocks.
    r : int
        Numerical rank of the stack.
    """

    m: tuple
    n: int
    r: int

    def __post_init__(self):
        if any(mj < 1 for mj in self.m):
            raise ValueError("every block needs at least one row")
        total = sum(self.m)
        if not (0 < self.r <= min(total, self.n)):
            raise ValueError(f"rank {self.r} outside (0, min({total}, {self.n})]")

    @property
    def d(self):
        return len(self.m)

    @property
    def p(self):
        """Cumulative row offsets, p[0] = 0, p[d] = total rows."""
        return (0,) + tuple(np.cumsum(self.m).tolist())

    @property
    def total_rows(self):
        return sum(self.m)

    @property
    def lifted_dim(self):
        """Dimension of the lifted variable: total rows + n - r."""
        return self.total_rows + self.n - self.r

    def block_slice(self, j):
        p = self.p
        return slice(p[j], p[j + 1])


@dataclass(frozen=True)
class TransformBlock:
    """One penalty transform, stored structurally and expanded on demand.

    ``kind`` is one of ``dense``, ``identity``, ``difference`` (first-order,
    rows ``[..., -1, 1, ...]``) or ``selector`` (rows of an identity).
    """

    kind: str
    rows: int
    cols: int
    data: object = None

    def materialize(self) -> np.ndarray:
        if self.kind == "dense":
            return np.array(self.data, dtype=float)
        if self.kind == "identity":
            return np.eye(self.cols)
        if self.kind == "difference":
            n = self.cols
            D = np.zeros((n - 1, n))
            idx = np.arange(n - 1)
            D[idx, idx] = -1.0
            D[idx, idx + 1] = 1.0
            return D
        if self.kind == "selector":
            M = np.zeros((self.rows, self.cols))
            M[np.arange(self.rows), np.asarray(self.data, dtype=int)] = 1.0
            return M
        raise ValueError(f"unknown block kind {self.kind!r}")


def dense_block(M) -> TransformBlock:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return TransformBlock("dense", M.shape[0], M.shape[1], M)


def identity_block(n) -> TransformBlock:
    return TransformBlock("identity", n, n)


def difference_block(n) -> TransformBlock:
    """First-order difference rows: d[i, i] = -1, d[i, i+1] = 1."""
    if n < 2:
        raise ValueError("difference block needs n >= 2")
    return TransformBlock("difference", n - 1, n)


def selector_block(indices, n) -> TransformBlock:
    indices = np.asarray(indices, dtype=int)
    if indices.size == 0 or indices.min() < 0 or indices.max() >= n:
        raise ValueError("selector indices out of range")
    return TransformBlock("selector", indices.size, n, indices)


@dataclass(frozen=True)
class TransformStack:
    """Stacked transform with its SVD and reconstruction matrix.

    ``lift_matrix`` is the n x (p+n-r) matrix sending ``[z; v]`` to ``u``.
    Its singular values are exactly ``(1/sigma_1, ..., 1/sigma_r, 1, ..., 1)``.
    """

    layout: BlockLayout
    B: np.ndarray
    U: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    lift_matrix: np.ndarray = field(repr=False)

    @property
    def Ur(self):
        return self.U[:, : self.layout.r]

    def encode(self, u) -> np.ndarray:
        """Map u to the lifted variable w = [B u; nullspace coords of u]."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.layout.n,):
            raise ValueError(f"expected length-{self.layout.n} vector")
        z = self.B @ u
        v = self.V[:, self.layout.r:].T @ u
        return np.concatenate([z, v])

    def lift(self, w) -> np.ndarray:
        """Reconstruct u from the lifted variable."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.layout.lifted_dim,):
            raise ValueError(f"expected length-{self.layout.lifted_dim} vector")
        return self.lift_matrix @ w

    def project_range(self, z) -> np.ndarray:
        """Orthogonal projection onto range(B); equals B (B^T B)^+ B^T z."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.layout.total_rows,):
            raise ValueError(f"expected length-{self.layout.total_rows} vector")
        Ur = self.Ur
        return Ur @ (Ur.T @ z)

    def lift_operator_norm(self) -> float:
        """Largest singular value of the reconstruction matrix.

        The singular values are the inverted nonzero singular values of B
        padded with ones, so this is max(1/sigma_r, 1) when n > r and
        1/sigma_r otherwise.
        """
        inv_smallest = 1.0 / self.sigma[self.layout.r - 1]
        if self.layout.n > self.layout.r:
            return max(inv_smallest, 1.0)
        return inv_smallest


def assemble_stack(blocks, rank_tolerance=DEFAULT_RANK_TOL) -> TransformStack:
    """Stack transform blocks, compute the SVD and the reconstruction matrix.

    Rank is counted as the number of singular values above
    ``rank_tolerance * sigma_1``; exact-rank assumptions need a cutoff in
    floating point.
    """
    if not blocks:
        raise ValueError("need at least one transform block")
    mats = [b.materialize() for b in blocks]
    n = mats[0].shape[1]
    for M in mats:
        if M.shape[1] != n:
            raise ValueError("all blocks must share the column count")
    B = np.ascontiguousarray(np.vstack(mats))
    U, s, Vt = np.linalg.svd(B, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateTransformError("stacked transform is numerically zero")
    r = int(np.count_nonzero(s > rank_tolerance * s[0]))
    layout = BlockLayout(m=tuple(M.shape[0] for M in mats), n=n, r=r)
    V = Vt.T
    p_d = layout.total_rows
    lift_matrix = np.zeros((n, layout.lifted_dim))
    lift_matrix[:, :p_d] = (V[:, :r] / s[:r]) @ U[:, :r].T
    lift_matrix[:, p_d:] = V[:, r:]
    return TransformStack(layout=layout, B=B, U=U, sigma=s, V=V,
                          lift_matrix=np.ascontiguousarray(lift_matrix))
