import numpy as np
import pytest

from rigged_dmd.dictionary import SnapshotSet, evaluate_feature_matrix, parse_dictionary
from rigged_dmd.dmd_core import mpedmd
from rigged_dmd.kernels import SmoothingConfig, make_rational_kernel, theta_grid
from rigged_dmd.modes import generalized_modes
from rigged_dmd.rigged import observable_coefficients, wave_packets


@pytest.fixture(scope="module")
def rotation():
    rng = np.random.default_rng(11)
    x = rng.uniform(-np.pi, np.pi, size=300)
    snaps = SnapshotSet(x, np.mod(x + 1.1 + np.pi, 2 * np.pi) - np.pi, np.full(300, 1 / 300))
    PsiX, PsiY, w = evaluate_feature_matrix(parse_dictionary("fourier:3"), snaps)
    return mpedmd(PsiX, PsiY, w), PsiX, w, snaps.X[:, 0]


class TestModes:
    def test_single_observable_is_packet_norm(self, rotation):
        model, PsiX, w, x = rotation
        g = np.cos(x) + 0.3 * np.sin(2 * x)
        k = make_rational_kernel(2)
        cfg = SmoothingConfig(0.2, theta_grid(32))
        sweep = generalized_modes(model, [g], PsiX, w, k, cfg)
        p = wave_packets(model, observable_coefficients(model, PsiX, w, g), k, cfg).packets_eig
        np.testing.assert_allclose(sweep.c[0], np.sum(np.abs(p) ** 2, axis=0), rtol=1e-12)
        assert np.all(sweep.c[0].real >= 0)
        np.testing.assert_allclose(sweep.c[0].imag, 0, atol=1e-14)

    def test_duplicated_observables(self, rotation):
        model, PsiX, w, x = rotation
        g = np.exp(1j * x)
        sweep = generalized_modes(model, [g, g], PsiX, w, make_rational_kernel(3), SmoothingConfig(0.1, theta_grid(16)))
        np.testing.assert_array_equal(sweep.c[0], sweep.c[1])

    def test_matrix_input_matches_list(self, rotation):
        model, PsiX, w, x = rotation
        G = np.column_stack([np.cos(x), np.sin(3 * x), x])
        k = make_rational_kernel(2)
        cfg = SmoothingConfig(0.3, [0.0, 1.1])
        a = generalized_modes(model, G, PsiX, w, k, cfg)
        b = generalized_modes(model, [G[:, 0], G[:, 1], G[:, 2]], PsiX, w, k, cfg)
        np.testing.assert_allclose(a.c, b.c)
        assert a.c.shape == (3, 2) and a.mean_packets.shape == (model.rank, 2)

    def test_empty(self, rotation):
        model, PsiX, w, _ = rotation
        with pytest.raises(ValueError):
            generalized_modes(model, [], PsiX, w, make_rational_kernel(1), SmoothingConfig(0.1, [0.0]))


@pytest.fixture(scope="module")
def pod():
    """A synthetic flow field reduced to POD coefficients, as for measured data."""
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    t = 0.25 * np.arange(400)
    freqs = np.array([0.9, 1.7])
    field = (np.cos(x[:, None] - freqs[0] * t) + 0.4 * np.sin(3 * x[:, None] - freqs[1] * t))  # (64, T)
    U, s, Vt = np.linalg.svd(field, full_matrices=False)
    coeffs = (s[:4, None] * Vt[:4]).T  # (T, 4) POD time coefficients
    snaps = SnapshotSet(coeffs[:-1], coeffs[1:], np.full(399, 1 / 399))
    PsiX, PsiY, w = evaluate_feature_matrix(parse_dictionary("explicit:x1;x2;x3;x4"), snaps)
    return mpedmd(PsiX, PsiY, w), PsiX, w, field[:, :-1].T, freqs * 0.25


class TestDataDefinedObservables:
    def test_eigenvalues_recover_frequencies(self, pod):
        model, *_, angles = pod
        found = np.sort(np.abs(np.angle(model.Lambda)))
        np.testing.assert_allclose(found, np.repeat(np.sort(angles), 2), atol=1e-4)

    def test_raw_columns_as_observables(self, pod):
        model, PsiX, w, probes, angles = pod
        cfg = SmoothingConfig(0.05, [angles[0], angles[1]])
        sweep = generalized_modes(model, probes[:, ::8], PsiX, w, make_rational_kernel(4), cfg)
        assert sweep.c.shape == (8, 2)
        assert np.all(np.isfinite(sweep.c))
