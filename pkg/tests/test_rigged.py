import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigged_dmd.dictionary import Dictionary, SnapshotSet, evaluate_feature_matrix, parse_dictionary
from rigged_dmd.dmd_core import mpedmd
from rigged_dmd.kernels import SmoothingConfig, eval_periodic_kernel, make_rational_kernel, theta_grid
from rigged_dmd.oracles import diagonal_functional_calculus
from rigged_dmd.rigged import (
    EPSILON_FLOOR,
    coherency_residual,
    evaluate_packet,
    observable_coefficients,
    subspace_angle,
    trajectory_subspace_angle,
    wave_packets,
)
from rigged_dmd.systems import cat_map_snapshots, diagonal_model, shift_model


def rotation_data(M=200, seed=0):
    """Circle rotation sampled at random points with a Fourier dictionary."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, size=M)
    snaps = SnapshotSet(x, np.mod(x + 0.7 + np.pi, 2 * np.pi) - np.pi, np.full(M, 1 / M))
    d = parse_dictionary("fourier:4")
    PsiX, PsiY, w = evaluate_feature_matrix(d, snaps)
    return d, snaps, PsiX, PsiY, w


class TestObservableCoefficients:
    def test_dictionary_member(self):
        d, snaps, PsiX, PsiY, w = rotation_data()
        model = mpedmd(PsiX, PsiY, w)
        co = observable_coefficients(model, PsiX, w, PsiX[:, 2])
        e = np.zeros(model.n)
        e[2] = 1
        np.testing.assert_allclose(co.g_eig, np.linalg.solve(model.V, model.from_dictionary(e)), atol=1e-10)

    def test_span_reconstruction(self):
        d, snaps, PsiX, PsiY, w = rotation_data()
        model = mpedmd(PsiX, PsiY, w)
        rng = np.random.default_rng(1)
        c = rng.normal(size=model.n) + 1j * rng.normal(size=model.n)
        g = PsiX @ c
        co = observable_coefficients(model, PsiX, w, g)
        rec = PsiX[:, model.pivots] @ (model.V @ co.g_eig)
        assert np.linalg.norm(rec - g) <= 1e-10 * np.linalg.norm(g)
        assert co.norm_sq == pytest.approx(float(np.sum(w * np.abs(g) ** 2)), rel=1e-10)

    def test_orthogonal_residual(self):
        d, snaps, PsiX, PsiY, w = rotation_data()
        model = mpedmd(PsiX, PsiY, w)
        g = np.exp(9j * snaps.X[:, 0])
        co = observable_coefficients(model, PsiX, w, g)
        proj = PsiX[:, model.pivots] @ (model.V @ co.g_eig)
        resid = np.sqrt(np.sum(w * np.abs(g - proj) ** 2))
        coef, *_ = np.linalg.lstsq(np.sqrt(w)[:, None] * PsiX, np.sqrt(w) * g, rcond=None)
        best = np.sqrt(np.sum(w * np.abs(g - PsiX @ coef) ** 2))
        assert resid == pytest.approx(best, rel=1e-10)

    def test_length_mismatch(self):
        d, snaps, PsiX, PsiY, w = rotation_data()
        model = mpedmd(PsiX, PsiY, w)
        with pytest.raises(ValueError):
            observable_coefficients(model, PsiX, w, np.ones(3))


class TestWavePackets:
    @settings(max_examples=30, deadline=None)
    @given(
        n=st.integers(1, 40),
        m=st.integers(1, 6),
        eps=st.floats(0.05, 1.0),
        seed=st.integers(0, 2**31),
    )
    def test_diagonal_oracle(self, n, m, eps, seed):
        rng = np.random.default_rng(seed)
        angles = rng.uniform(-np.pi, np.pi, size=n)
        g = rng.normal(size=n) + 1j * rng.normal(size=n)
        g /= np.linalg.norm(g)
        model, co = diagonal_model(angles, g)
        k = make_rational_kernel(m)
        th = theta_grid(64)
        wp = wave_packets(model, co, k, SmoothingConfig(eps, th))
        packet, meas = diagonal_functional_calculus(angles, g, k, eps, th)
        np.testing.assert_allclose(wp.packets_eig, packet, rtol=0, atol=1e-12)
        np.testing.assert_allclose(wp.xi, meas, rtol=0, atol=1e-12)

    def test_single_eigenvalue(self):
        model, co = diagonal_model([0.4], [1.0])
        k = make_rational_kernel(3)
        th = theta_grid(512)
        wp = wave_packets(model, co, k, SmoothingConfig(0.1, th))
        np.testing.assert_allclose(wp.packets_eig[0].real, eval_periodic_kernel(k, 0.1, th - 0.4), atol=1e-12)
        assert abs(th[np.argmax(wp.xi)] - 0.4) <= np.pi / 512

    def test_additivity(self):
        k = make_rational_kernel(2)
        th = theta_grid(128)
        model, co = diagonal_model([0.0, np.pi - 1e-15], [1.0, 1.0])
        xi = wave_packets(model, co, k, SmoothingConfig(0.2, th)).xi
        expected = eval_periodic_kernel(k, 0.2, th) + eval_periodic_kernel(k, 0.2, th - np.pi)
        np.testing.assert_allclose(xi, expected, atol=1e-12)

    @pytest.mark.parametrize("m", [1, 3, 6])
    def test_measure_mass(self, m):
        rng = np.random.default_rng(m)
        angles = rng.uniform(-np.pi, np.pi, 30)
        g = rng.normal(size=30) + 1j * rng.normal(size=30)
        model, co = diagonal_model(angles, g)
        th = theta_grid(4096)
        xi = wave_packets(model, co, make_rational_kernel(m), SmoothingConfig(0.05, th)).xi
        assert xi.sum() * 2 * np.pi / th.size == pytest.approx(co.norm_sq, abs=1e-6)

    def test_linear_in_g(self):
        rng = np.random.default_rng(3)
        angles = rng.uniform(-np.pi, np.pi, 8)
        g1, g2 = rng.normal(size=(2, 8)) + 0j
        k = make_rational_kernel(4)
        cfg = SmoothingConfig(0.3, theta_grid(16))
        m1, c1 = diagonal_model(angles, g1)
        _, c2 = diagonal_model(angles, g2)
        _, c3 = diagonal_model(angles, 2 * g1 - 3j * g2)
        p = [wave_packets(m1, c, k, cfg, with_measure=False).packets_eig for c in (c1, c2, c3)]
        np.testing.assert_allclose(p[2], 2 * p[0] - 3j * p[1], atol=1e-12)

    def test_normalize(self):
        model, co = diagonal_model([0.0, 1.0], [1.0, 0.5])
        cfg = SmoothingConfig(0.2, [0.0, 1.0])
        raw = wave_packets(model, co, make_rational_kernel(2), cfg)
        nrm = wave_packets(model, co, make_rational_kernel(2), cfg, normalize=True)
        np.testing.assert_allclose(nrm.packets_eig, raw.packets_eig / raw.xi, rtol=1e-14)
        assert nrm.normalized and raw.xi is not None

    def test_without_measure(self):
        model, co = diagonal_model([0.0], [1.0])
        wp = wave_packets(model, co, make_rational_kernel(1), SmoothingConfig(0.1, [0.0]), with_measure=False)
        assert wp.xi is None

    def test_epsilon_floor(self):
        model, co = diagonal_model([0.0], [1.0])
        with pytest.raises(ValueError):
            wave_packets(model, co, make_rational_kernel(1), SmoothingConfig(EPSILON_FLOOR / 2, [0.0]))

    def test_dictionary_coordinates_on_shift(self):
        # packet of e_0 on the circulant model has e_j coefficient
        # (1/n) sum_p K(theta - phi_p) exp(i j phi_p)
        sm = shift_model(6)
        model = mpedmd(sm.PsiX, sm.PsiY, sm.weights)
        co = observable_coefficients(model, sm.PsiX, sm.weights, sm.PsiX[:, sm.center])
        k = make_rational_kernel(2)
        wp = wave_packets(model, co, k, SmoothingConfig(0.3, [0.5]), with_measure=False)
        phi = 2 * np.pi * np.arange(sm.size) / sm.size
        for j in (-2, 0, 3):
            expected = np.mean(eval_periodic_kernel(k, 0.3, 0.5 - phi) * np.exp(1j * j * phi))
            assert wp.packets_dict[sm.index(j), 0] == pytest.approx(expected, abs=1e-13)


class TestEvaluatePacket:
    def test_unit_vector(self):
        d = parse_dictionary("explicit:1;x1;x1**2")
        pts = np.array([[0.5], [2.0]])
        np.testing.assert_allclose(evaluate_packet(d, [0, 1, 0], pts), [0.5, 2.0])
        np.testing.assert_allclose(evaluate_packet(d, np.eye(3), pts), [[1, 0.5, 0.25], [1, 2, 4]])

    def test_snapshot_input_for_delay(self):
        snaps = cat_map_snapshots(6, 4)
        d = Dictionary.delay(["sin(x1)"], 4)
        PsiX, _, _ = evaluate_feature_matrix(d, snaps)
        c = np.arange(4.0)
        np.testing.assert_allclose(evaluate_packet(d, c, snaps), PsiX @ c)

    def test_size_mismatch(self):
        d = parse_dictionary("explicit:1;x1")
        with pytest.raises(ValueError):
            evaluate_packet(d, [1, 2, 3], np.zeros((2, 1)))


class TestCoherency:
    def test_eigenvector(self):
        model, _ = diagonal_model([0.3, 1.0], [1.0, 1.0])
        assert coherency_residual(model, [1.0, 0.0], 0.3) == pytest.approx(0.0, abs=1e-15)

    def test_single_coordinate(self):
        model, _ = diagonal_model([0.3, 1.0], [1.0, 1.0])
        assert coherency_residual(model, [0.0, 2.0], 0.1) == pytest.approx(abs(np.exp(1j) - np.exp(0.1j)))

    def test_zero_packet(self):
        model, _ = diagonal_model([0.3], [1.0])
        with pytest.raises(ValueError):
            coherency_residual(model, [0.0], 0.3)

    def test_subspace_angle_eigenvector(self):
        model, _ = diagonal_model([0.3, 1.0], [1.0, 1.0])
        np.testing.assert_allclose(subspace_angle(model, [0.0, 1.0], 5), 0.0, atol=1e-7)

    def test_subspace_angle_half_turn(self):
        model, _ = diagonal_model([0.0, np.pi], [1.0, 1.0])
        assert subspace_angle(model, [1.0, 1.0], 1)[0] == pytest.approx(np.pi / 2)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(1, 10))
    def test_angles_in_range(self, seed, n):
        rng = np.random.default_rng(seed)
        model, _ = diagonal_model(rng.uniform(-np.pi, np.pi, n), np.ones(n))
        p = rng.normal(size=n) + 1j * rng.normal(size=n)
        a = subspace_angle(model, p, 6)
        assert np.all((a >= 0) & (a <= np.pi / 2))

    def test_trajectory_angles(self):
        t = np.arange(200)
        vals = np.exp(0.4j * t)
        np.testing.assert_allclose(trajectory_subspace_angle(vals, 5), 0.0, atol=1e-7)
        with pytest.raises(ValueError):
            trajectory_subspace_angle(vals, 200)
