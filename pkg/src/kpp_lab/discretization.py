"""Cell-centred finite differences with no-flux boundaries.

The 1D stencil reflects the boundary cell into a ghost cell, so boundary rows
read ``(-u_0 + u_1) / h^2``.  Every row sums to zero, the matrix is
symmetric, and its eigenvectors are the cosine modes
``cos(k pi (i + 1/2) / m)`` with eigenvalues ``(2 / h^2)(cos(k pi / m) - 1)``.
The 2D operator is the Kronecker sum of the two 1D operators (x fastest).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ShapeMismatchError, SingularJacobianError
from .model import DomainGrid, StateField, SystemSpec


def laplacian_1d(cells: int, h: float) -> sp.csr_matrix:
    if cells == 1:
        return sp.csr_matrix((1, 1))
    main = np.full(cells, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(cells - 1)
    return (sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)).tocsr()


def assemble_neumann_laplacian(grid: DomainGrid) -> sp.csr_matrix:
    """Discrete Neumann Laplacian ``Delta_h`` (negative semidefinite)."""
    mats = [laplacian_1d(c, h) for c, h in zip(grid.cells, grid.spacing)]
    if grid.dimension == 1:
        return mats[0]
    Lx, Ly = mats
    Ix, Iy = sp.identity(grid.cells[0]), sp.identity(grid.cells[1])
    return (sp.kron(Iy, Lx) + sp.kron(Ly, Ix)).tocsr()


def laplacian_eigenvalues(grid: DomainGrid) -> np.ndarray:
    """All eigenvalues ``mu <= 0`` of ``Delta_h`` from the cosine-mode formula."""
    per_axis = [(2.0 / h ** 2) * (np.cos(np.pi * np.arange(c) / c) - 1.0)
                for c, h in zip(grid.cells, grid.spacing)]
    if grid.dimension == 1:
        return per_axis[0]
    return (per_axis[0][None, :] + per_axis[1][:, None]).ravel()


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Fused sparse operator on stacked species vectors (species-major)."""

    matrix: sp.csr_matrix
    grid: DomainGrid
    n: int

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def symmetric(self) -> bool:
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or np.abs(diff.data).max() == 0.0

    def matvec(self, u):
        vals = u.values if isinstance(u, StateField) else np.asarray(u, dtype=float)
        return self.matrix @ vals

    def block(self, i: int, j: int) -> sp.csr_matrix:
        N = self.grid.n_nodes
        return self.matrix[i * N:(i + 1) * N, j * N:(j + 1) * N]

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def write_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(path), self.matrix.tocoo())


def _nodal_blocks(blocks: np.ndarray) -> sp.csr_matrix:
    """Fuse ``(N, n, n)`` nodewise matrices into an ``nN x nN`` sparse matrix."""
    N, n, _ = blocks.shape
    nodes = np.arange(N)
    rows = (np.arange(n)[:, None, None] * N + nodes[None, None, :]).repeat(n, axis=1)
    cols = (np.arange(n)[None, :, None] * N + nodes[None, None, :]).repeat(n, axis=0)
    vals = np.transpose(blocks, (1, 2, 0))
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n * N, n * N))


def diffusion_operator(spec: SystemSpec, grid: DomainGrid) -> sp.csr_matrix:
    """``-diag(d_i Delta_h)`` on the stacked vector."""
    lap = assemble_neumann_laplacian(grid)
    return sp.kron(sp.diags(-spec.d), lap, format="csr")


def assemble_linearized(spec: SystemSpec, grid: DomainGrid) -> BlockOperator:
    """``L = -diag(d_i Delta_h) - A(x)``, the linearisation at ``u = 0``."""
    A = spec.coupling_at_nodes(grid)
    mat = (diffusion_operator(spec, grid) - _nodal_blocks(np.asarray(A))).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return BlockOperator(mat, grid, spec.n)


def reaction(spec: SystemSpec, grid: DomainGrid, U: np.ndarray) -> np.ndarray:
    """``A(x) u - b(u)`` nodewise for ``U`` of shape ``(n, N)``."""
    A = spec.coupling
    out = np.empty_like(U)
    for i in range(spec.n):
        if A.ndim == 2:
            acc = A[i, 0] * U[0]
            for j in range(1, spec.n):
                acc = acc + A[i, j] * U[j]
        else:
            acc = A[:, i, 0] * U[0]
            for j in range(1, spec.n):
                acc = acc + A[:, i, j] * U[j]
        out[i] = acc
    return out - spec.nonlinearity(U)


def _check(spec, grid, u):
    if u.n != spec.n or u.grid != grid:
        raise ShapeMismatchError("state does not match spec/grid")


def residual_array(spec: SystemSpec, grid: DomainGrid, U: np.ndarray, lap=None) -> np.ndarray:
    lap = assemble_neumann_laplacian(grid) if lap is None else lap
    diff = -(spec.d[:, None] * (lap @ U.T).T)
    return diff - reaction(spec, grid, U)


def residual(spec: SystemSpec, grid: DomainGrid, u: StateField) -> StateField:
    """``R_i = -d_i Delta_h u_i - sum_j a_ij u_j + b_i(u)`` at every node."""
    _check(spec, grid, u)
    return StateField.from_array(grid, residual_array(spec, grid, u.as_array()))


def residual_jacobian(spec: SystemSpec, grid: DomainGrid, u: StateField, lap=None) -> sp.csr_matrix:
    """Exact Jacobian of :func:`residual`: diffusion blocks plus ``Db(u) - A(x)`` nodewise."""
    _check(spec, grid, u)
    lap = assemble_neumann_laplacian(grid) if lap is None else lap
    diff = sp.kron(sp.diags(-spec.d), lap, format="csr")
    Db = spec.nonlinearity.jacobian(u.as_array())
    nodal = Db - np.asarray(spec.coupling_at_nodes(grid))
    return (diff + _nodal_blocks(nodal)).tocsr()


def solve(M: sp.spmatrix, rhs: np.ndarray, dimension: int = 1, tol: float = 1e-12) -> np.ndarray:
    """Solve ``M x = rhs``: sparse LU in 1D, Jacobi-preconditioned BiCGSTAB in 2D.

    BiCGSTAB falls back to sparse LU on breakdown or stagnation.
    """
    M = sp.csc_matrix(M)
    if dimension == 2 and M.shape[0] > 64:
        diag = M.diagonal()
        if np.all(diag != 0):
            P = sp.diags(1.0 / diag)
            x, info = spla.bicgstab(M, rhs, rtol=tol, atol=0.0, M=P, maxiter=10 * M.shape[0])
            if info == 0 and np.all(np.isfinite(x)):
                return x
    try:
        x = spla.splu(M).solve(rhs)
    except RuntimeError as exc:
        raise SingularJacobianError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularJacobianError("non-finite solution")
    return x
