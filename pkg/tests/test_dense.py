import numpy as np
import pytest

from kpp_lab import dense


def _sorted(z):
    return np.array(sorted(z, key=lambda c: (round(c.real, 8), round(c.imag, 8))))


def test_two_by_two_closed_form():
    ev = dense.eigvals_2x2(np.array([[-3.0, 1.0], [1.0, -3.0]]))
    np.testing.assert_allclose(sorted(ev.real), [-4.0, -2.0])
    rot = dense.eigvals_2x2(np.array([[0.0, -2.0], [2.0, 0.0]]))
    np.testing.assert_allclose(sorted(rot.imag), [-2.0, 2.0])


def test_hessenberg_similarity():
    A = np.random.default_rng(1).normal(size=(7, 7))
    H = dense.hessenberg(A)
    assert np.all(np.tril(H, -2) == 0)
    assert np.trace(H) == pytest.approx(np.trace(A))
    np.testing.assert_allclose(_sorted(dense.eigvals(H)), _sorted(np.linalg.eigvals(A)), atol=1e-10)


@pytest.mark.parametrize("n, seed", [(1, 0), (3, 1), (10, 2), (40, 3), (120, 4)])
def test_general_matrices_match_numpy(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    ours = _sorted(dense.eigvals(A))
    ref = _sorted(np.linalg.eigvals(A))
    np.testing.assert_allclose(ours, ref, atol=1e-9 * max(1.0, np.abs(ref).max()))


def test_known_spectra():
    # companion of (z-1)(z-2)(z-3)
    C = np.array([[6.0, -11.0, 6.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(np.sort(dense.eigvals(C).real), [1, 2, 3], atol=1e-12)
    T = np.diag(np.arange(5.0)) + np.diag(np.ones(4), 1)
    np.testing.assert_allclose(np.sort(dense.eigvals(T).real), np.arange(5.0), atol=1e-12)


def test_extreme_parts():
    A = np.diag([-5.0, 2.0, -1.0])
    assert dense.rightmost(A).real == pytest.approx(2.0)
    assert dense.leftmost_real(A) == pytest.approx(-5.0)


def test_size_guard():
    with pytest.raises(ValueError):
        dense.eigvals(np.zeros((dense.MAX_DENSE + 1, dense.MAX_DENSE + 1)))
