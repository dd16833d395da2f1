import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from rigged_dmd.dmd_core import RankDeficientError, edmd, gram, mpedmd, resolvent_apply
from rigged_dmd.systems import diagonal_model, shift_model


def random_isometry_data(M, N, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(M, N)) + 1j * rng.normal(size=(M, N))
    Q, _ = np.linalg.qr(A)
    U = unitary_group.rvs(N, random_state=seed)
    return Q, Q @ U, U


class TestGram:
    def test_scalar_example(self):
        np.testing.assert_allclose(gram([[1.0], [2.0]], [0.5, 0.5]), [[2.5]])

    def test_orthonormal_identity(self):
        Q, _, _ = random_isometry_data(20, 4, 0)
        np.testing.assert_allclose(gram(Q, np.ones(20)), np.eye(4), atol=1e-14)

    def test_hermitian(self):
        rng = np.random.default_rng(2)
        P = rng.normal(size=(10, 3)) + 1j * rng.normal(size=(10, 3))
        G = gram(P, rng.uniform(0.1, 1, size=10))
        np.testing.assert_array_equal(G, G.conj().T)


class TestEdmd:
    def test_identity_dynamics(self):
        rng = np.random.default_rng(3)
        P = rng.normal(size=(12, 4))
        np.testing.assert_allclose(edmd(P, P, np.ones(12)), np.eye(4), atol=1e-13)

    def test_scalar_example(self):
        np.testing.assert_allclose(edmd([[1.0], [2.0]], [[2.0], [4.0]], [0.5, 0.5]), [[2.0]])

    def test_shift_is_jordan(self):
        sm = shift_model(5)
        K = edmd(sm.PsiX, sm.PsiY, sm.weights)
        np.testing.assert_allclose(K, np.diag(np.ones(10), 1), atol=1e-14)

    def test_dictionary_order_with_pivoting(self):
        # columns of very different scale force a non-trivial pivot order
        rng = np.random.default_rng(4)
        P = rng.normal(size=(30, 3)) * np.array([1e-3, 1.0, 1e2])
        Ktrue = rng.normal(size=(3, 3))
        K = edmd(P, P @ Ktrue, np.ones(30))
        np.testing.assert_allclose(K, Ktrue, rtol=1e-9, atol=1e-9)

    def test_rank_deficient(self):
        P = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(RankDeficientError) as info:
            edmd(P, P, np.ones(3))
        assert info.value.rank == 1 and info.value.n == 2
        assert isinstance(info.value, ValueError)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            edmd(np.ones((3, 2)), np.ones((3, 3)), np.ones(3))
        with pytest.raises(ValueError):
            edmd(np.ones((3, 2)), np.ones((3, 2)), np.ones(2))


class TestMpEdmd:
    def test_shift_is_circulant(self):
        sm = shift_model(5)
        model = mpedmd(sm.PsiX, sm.PsiY, sm.weights)
        C = np.diag(np.ones(10), 1)
        C[-1, 0] = 1
        np.testing.assert_allclose(model.K_dictionary(), C, atol=1e-13)

    def test_isometry_recovers_unitary(self):
        Q, Y, U = random_isometry_data(40, 5, 7)
        model = mpedmd(Q, Y, np.ones(40))
        np.testing.assert_allclose(model.K_dictionary(), U, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), N=st.integers(1, 8), extra=st.integers(0, 20))
    def test_invariants_on_random_data(self, seed, N, extra):
        rng = np.random.default_rng(seed)
        M = N + extra + 1
        PX = rng.normal(size=(M, N)) + 1j * rng.normal(size=(M, N))
        PY = rng.normal(size=(M, N)) + 1j * rng.normal(size=(M, N))
        w = rng.uniform(0.1, 2.0, size=M)
        model = mpedmd(PX, PY, w)
        assert model.circle_defect() <= 1e-10
        assert model.unitarity_defect() <= 1e-8
        assert model.eigen_residual() <= 1e-9
        # V is G-orthonormal
        V, G = model.V, model.gram()
        np.testing.assert_allclose(V.conj().T @ G @ V, np.eye(model.rank), atol=1e-8)

    def test_truncation(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(20, 2))
        PX = np.column_stack([A, A[:, 0] + A[:, 1]])
        PY = np.roll(PX, 1, axis=0)
        model = mpedmd(PX, PY, np.ones(20))
        assert model.rank == 2 and model.truncated and model.n == 3
        assert model.circle_defect() <= 1e-10
        with pytest.raises(RankDeficientError):
            mpedmd(PX, PY, np.ones(20), truncate=False)

    def test_zero_rank(self):
        with pytest.raises(RankDeficientError):
            mpedmd(np.zeros((4, 2)), np.zeros((4, 2)), np.ones(4))

    def test_orthonormal_factor_recomputed(self):
        rng = np.random.default_rng(6)
        PX = rng.normal(size=(15, 4)) + 0j
        PY = rng.normal(size=(15, 4)) + 0j
        w = rng.uniform(0.5, 1, size=15)
        model = mpedmd(PX, PY, w)
        Q_cached = model.Q
        model.Q = None
        np.testing.assert_allclose(model.orthonormal_factor(PX, w), Q_cached, atol=1e-12)

    def test_frame_conversion_round_trip(self):
        sm = shift_model(3)
        model = mpedmd(sm.PsiX, sm.PsiY, sm.weights)
        c = np.arange(model.n) + 1j
        np.testing.assert_array_equal(model.to_dictionary(model.from_dictionary(c)), c)


class TestResolvent:
    def test_zero_shift_is_inverse(self):
        model, co = diagonal_model([0.3, -1.2, 2.0], [1.0, 2.0, 1j])
        np.testing.assert_allclose(resolvent_apply(model, 0.0, co.g_eig), np.conj(model.Lambda) * co.g_eig)

    def test_diagonal_example(self):
        model, co = diagonal_model([np.pi / 2, -np.pi / 2], [1.0, 1.0])
        np.testing.assert_allclose(resolvent_apply(model, 2.0, co.g_eig), [1 / (1j - 2), 1 / (-1j - 2)], atol=1e-15)

    def test_matrix_argument(self):
        model, _ = diagonal_model([0.1, 0.2], [1.0, 1.0])
        out = resolvent_apply(model, 0.5, np.ones((2, 3)))
        assert out.shape == (2, 3)

    def test_errors(self):
        model, co = diagonal_model([0.0], [1.0])
        with pytest.raises(ValueError):
            resolvent_apply(model, 1.0, co.g_eig)
        with pytest.raises(ValueError):
            resolvent_apply(model, 0.5, np.ones(3))

    def test_shift_series_improves_with_N(self):
        z = 0.5 * np.exp(1j * np.pi / 4)
        errs = []
        for N in (10, 20, 40):
            sm = shift_model(N)
            model = mpedmd(sm.PsiX, sm.PsiY, sm.weights)
            e0 = np.zeros(sm.size)
            e0[sm.center] = 1
            v = model.to_dictionary(model.V @ resolvent_apply(model, z, np.linalg.solve(model.V, model.from_dictionary(e0))))
            exact = np.zeros(sm.size, dtype=complex)
            exact[sm.center + 1 :] = z ** np.arange(N)
            errs.append(np.linalg.norm(v - exact))
        assert errs[0] > errs[1] > errs[2]
