import numpy as np
import pytest
import scipy.sparse as sp

from kpp_lab import dense
from kpp_lab.discretization import (assemble_linearized, assemble_neumann_laplacian, diffusion_operator,
                                    laplacian_eigenvalues, reaction, residual, residual_array,
                                    residual_jacobian, solve)
from kpp_lab.errors import SingularJacobianError
from kpp_lab.model import DomainGrid, StateField, SystemSpec


def test_three_cell_stencil_by_hand():
    L = assemble_neumann_laplacian(DomainGrid.line(3, 1.0)).toarray()
    expected = 9.0 * np.array([[-1, 1, 0], [1, -2, 1], [0, 1, -1]])
    np.testing.assert_array_equal(L, expected)


def test_single_cell_is_zero():
    L = assemble_neumann_laplacian(DomainGrid.line(1))
    assert L.shape == (1, 1) and L.nnz == 0


@pytest.mark.parametrize("grid", [DomainGrid.line(7, 2.0), DomainGrid.rectangle((4, 5), (1.0, 3.0))])
def test_laplacian_structure(grid):
    L = assemble_neumann_laplacian(grid)
    assert isinstance(L, sp.csr_matrix)
    assert abs(L - L.T).max() == 0
    np.testing.assert_allclose(L @ np.ones(grid.n_nodes), 0.0, atol=1e-12)
    off = L.toarray() - np.diag(L.diagonal())
    assert off.min() >= 0


@pytest.mark.parametrize("grid", [DomainGrid.line(9, 1.5), DomainGrid.rectangle((4, 3), (1.0, 2.0))])
def test_cosine_eigenvalues_match_dense(grid):
    L = assemble_neumann_laplacian(grid).toarray()
    ev = np.sort(dense.eigvals(L).real)
    np.testing.assert_allclose(ev, np.sort(laplacian_eigenvalues(grid)), atol=1e-10 * np.abs(ev).max())


def test_cosine_modes_are_eigenvectors():
    m, h = 10, 0.1
    g = DomainGrid.line(m, 1.0)
    L = assemble_neumann_laplacian(g)
    x = g.coordinates()[:, 0]
    for k in range(m):
        v = np.cos(k * np.pi * x)
        mu = 2 / h ** 2 * (np.cos(k * np.pi / m) - 1)
        np.testing.assert_allclose(L @ v, mu * v, atol=1e-9)


def test_green_identity():
    # sum v Lap u = -sum grad u . grad v, symmetric and nonpositive
    rng = np.random.default_rng(11)
    g = DomainGrid.rectangle((6, 5))
    L = assemble_neumann_laplacian(g)
    u, v = rng.random(g.n_nodes), rng.random(g.n_nodes)
    assert v @ (L @ u) == pytest.approx(u @ (L @ v), rel=1e-12)
    assert u @ (L @ u) <= 0


def test_second_order_consistency():
    errs = []
    for m in (16, 32, 64):
        g = DomainGrid.line(m)
        x = g.coordinates()[:, 0]
        u = np.cos(np.pi * x)
        errs.append(np.abs(assemble_neumann_laplacian(g) @ u + np.pi ** 2 * u).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_one_cell_linearization_is_minus_A(spec):
    op = assemble_linearized(spec, DomainGrid.line(1))
    np.testing.assert_allclose(op.to_dense(), -spec.coupling, rtol=0, atol=0)


def test_linearized_blocks(spec):
    g = DomainGrid.line(5)
    op = assemble_linearized(spec, g)
    lap = assemble_neumann_laplacian(g).toarray()
    assert op.shape == (10, 10) and op.symmetric
    np.testing.assert_allclose(op.block(0, 0).toarray(), -lap - 0.8 * np.eye(5))
    np.testing.assert_allclose(op.block(0, 1).toarray(), -0.2 * np.eye(5))
    u = np.arange(10.0)
    np.testing.assert_allclose(op.matvec(u), op.to_dense() @ u)


def test_nodal_coupling_blocks():
    g = DomainGrid.line(3)
    A = np.array([[[1.0, 0.1], [0.3, 1.0]], [[2.0, 0.2], [0.4, 1.0]], [[3.0, 0.5], [0.6, 1.0]]])
    op = assemble_linearized(SystemSpec([1.0, 2.0], A, np.ones((2, 2))), g)
    np.testing.assert_allclose(op.block(0, 1).diagonal(), [-0.1, -0.2, -0.5])
    np.testing.assert_allclose(op.block(1, 0).diagonal(), [-0.3, -0.4, -0.6])
    assert not op.symmetric
    D = diffusion_operator(SystemSpec([1.0, 2.0], A, np.ones((2, 2))), g).toarray()
    np.testing.assert_allclose(D[3:, 3:], -2 * assemble_neumann_laplacian(g).toarray())


def test_matrix_market_roundtrip(tmp_path, spec):
    import scipy.io
    op = assemble_linearized(spec, DomainGrid.line(4))
    p = tmp_path / "L.mtx"
    op.write_matrix_market(p)
    np.testing.assert_array_equal(scipy.io.mmread(p).toarray(), op.to_dense())


def test_listed_states_have_tiny_residual(spec, listed_states):
    g = DomainGrid.line(8)
    for v in listed_states:
        r = residual(spec, g, StateField.constant(g, v))
        assert np.abs(r.values).max() <= 1e-14


def test_residual_of_nonconstant_field_by_hand():
    g = DomainGrid.line(3)
    s = SystemSpec([2.0], [[1.0]], [[0.5]])
    U = np.array([[1.0, 2.0, 4.0]])
    lapU = 9.0 * np.array([1.0, 1.0, -2.0])
    F = U[0] - 0.5 * U[0] ** 2
    np.testing.assert_allclose(residual_array(s, g, U)[0], -2.0 * lapU - F)
    np.testing.assert_allclose(reaction(s, g, U)[0], F)


def test_residual_jacobian_by_finite_differences(spec):
    g = DomainGrid.line(4)
    rng = np.random.default_rng(5)
    u = StateField.from_array(g, rng.uniform(0.5, 3.0, (2, 4)))
    J = residual_jacobian(spec, g, u).toarray()
    h = 1e-6
    fd = np.empty_like(J)
    for k in range(8):
        e = np.zeros(8)
        e[k] = h
        rp = residual(spec, g, StateField(g, 2, u.values + e)).values
        rm = residual(spec, g, StateField(g, 2, u.values - e)).values
        fd[:, k] = (rp - rm) / (2 * h)
    np.testing.assert_allclose(J, fd, atol=1e-6)


@pytest.mark.parametrize("dim", [1, 2])
def test_solve_paths(dim):
    g = DomainGrid.line(100) if dim == 1 else DomainGrid.rectangle((12, 12))
    M = (sp.identity(g.n_nodes) - 0.01 * assemble_neumann_laplacian(g)).tocsr()
    x = np.random.default_rng(0).random(g.n_nodes)
    b = M @ x
    xs = solve(M, b, dimension=dim)
    assert np.linalg.norm(M @ xs - b) <= 1e-11 * np.linalg.norm(b)
    np.testing.assert_allclose(xs, x, rtol=0, atol=1e-10)


def test_solve_singular():
    with pytest.raises(SingularJacobianError):
        solve(sp.csr_matrix((3, 3)), np.ones(3))
