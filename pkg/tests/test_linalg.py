import numpy as np
import pytest

from cfgnn.errors import DomainError, ShapeMismatchError, SingularSystemError
from cfgnn.linalg import hermitian_solve, psd_sqrt


def random_hpd(gen, n, ill=0.0):
    b = gen.normal(size=(n, n)) + 1j * gen.normal(size=(n, n))
    a = b.conj().T @ b + (1e-3 + ill) * np.eye(n)
    return (a + a.conj().T) / 2


class TestHermitianSolve:
    def test_multiply_back_residual(self):
        """The oracle is multiplication: A @ X must reproduce B."""
        gen = np.random.default_rng(0)
        for trial in range(25):
            n = int(gen.integers(1, 12))
            m = int(gen.integers(1, 5))
            a = random_hpd(gen, n)
            b = gen.normal(size=(n, m)) + 1j * gen.normal(size=(n, m))
            x = hermitian_solve(a, b)
            residual = np.max(np.abs(a @ x - b))
            assert residual <= 1e-9 * max(np.max(np.abs(b)), 1e-30)

    def test_vector_rhs(self):
        gen = np.random.default_rng(1)
        a = random_hpd(gen, 6)
        b = gen.normal(size=6) + 1j * gen.normal(size=6)
        x = hermitian_solve(a, b)
        assert x.shape == (6,)
        assert np.max(np.abs(a @ x - b)) <= 1e-9 * np.max(np.abs(b))

    def test_identity(self):
        b = np.arange(8.0).reshape(4, 2) + 0j
        np.testing.assert_allclose(hermitian_solve(np.eye(4), b), b)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeMismatchError) as err:
            hermitian_solve(np.ones((2, 3)), np.ones(2))
        assert "(2, 3)" in str(err.value)

    def test_rhs_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            hermitian_solve(np.eye(3), np.ones(4))

    def test_asymmetry_rejected(self):
        a = np.eye(3, dtype=complex)
        a[0, 1] = 1e-6
        with pytest.raises(DomainError):
            hermitian_solve(a, np.ones(3))

    def test_rank_deficient_recovered_by_ridge(self):
        v = np.array([1.0, 2.0, -1.0]) + 1j * np.array([0.5, 0.0, 1.0])
        a = np.outer(v, v.conj())
        a = (a + a.conj().T) / 2
        x = hermitian_solve(a, v)
        assert np.all(np.isfinite(x))

    def test_negative_definite_reported_singular(self):
        with pytest.raises(SingularSystemError):
            hermitian_solve(-np.eye(3), np.ones(3))


class TestPsdSqrt:
    def test_square_reproduces(self):
        gen = np.random.default_rng(2)
        a = random_hpd(gen, 5)
        s = psd_sqrt(a)
        np.testing.assert_allclose(s @ s, a, atol=1e-10)
        np.testing.assert_allclose(s, s.conj().T, atol=1e-12)

    def test_non_psd_rejected(self):
        a = np.diag([1.0, -0.5, 2.0]).astype(complex)
        with pytest.raises(DomainError):
            psd_sqrt(a)

    def test_tiny_negative_dust_clipped(self):
        a = np.diag([1.0, -1e-15, 2.0]).astype(complex)
        s = psd_sqrt(a)
        assert np.all(np.isfinite(s))
