"""Wave packets, smoothed spectral measures and coherency diagnostics.

Everything here works in mpEDMD eigencoordinates: because ``Vhat`` is
unitary, the eigencoordinates are orthonormal in the empirical Gram inner
product, and the resolvent acts diagonally.  Each angle costs ``O(m N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dictionary import Dictionary, SnapshotSet, evaluate_feature_matrix
from .dmd_core import MpEdmdModel
from .kernels import KernelSpec, SmoothingConfig

__all__ = [
    "EPSILON_FLOOR",
    "ObservableCoeffs",
    "WavePacketSet",
    "observable_coefficients",
    "wave_packets",
    "evaluate_packet",
    "coherency_residual",
    "subspace_angle",
    "trajectory_subspace_angle",
]

EPSILON_FLOOR = 1e-4


@dataclass
class ObservableCoeffs:
    """An observable in eigencoordinates and its empirical squared norm."""

    g_eig: np.ndarray
    norm_sq: float


@dataclass
class WavePacketSet:
    """Smoothed packets over an angle grid.

    ``packets_eig[:, t]`` is the packet at ``thetas[t]`` in eigencoordinates
    and ``packets_dict`` the same packet in dictionary coordinates.
    """

    thetas: np.ndarray
    packets_eig: np.ndarray
    packets_dict: np.ndarray
    kernel: KernelSpec
    epsilon: float
    xi: Optional[np.ndarray] = None
    normalized: bool = False


def observable_coefficients(model: MpEdmdModel, PsiX, weights, g_samples) -> ObservableCoeffs:
    """Least-squares expansion of ``g`` in the model eigenvectors.

    Computes ``Vhat^* Q^* W^{1/2} g``, which equals
    ``(W^{1/2} Psi_X V)^+ W^{1/2} g`` because ``W^{1/2} Psi_X V = Q Vhat``.
    """
    g = np.asarray(g_samples, dtype=complex).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if g.shape[0] != np.shape(PsiX)[0] or w.shape[0] != g.shape[0]:
        raise ValueError(
            f"g has {g.shape[0]} samples but PsiX has {np.shape(PsiX)[0]} rows "
            f"and there are {w.shape[0]} weights"
        )
    Q = model.orthonormal_factor(PsiX, w)
    g_eig = model.Vhat.conj().T @ (Q.conj().T @ (np.sqrt(w) * g))
    return ObservableCoeffs(g_eig=g_eig, norm_sq=float(np.vdot(g_eig, g_eig).real))


def _check_epsilon(eps: float):
    if eps < EPSILON_FLOOR:
        raise ValueError(
            f"epsilon {eps} is below the floor {EPSILON_FLOOR}; the finite model cannot resolve it"
        )


def wave_packets(
    model: MpEdmdModel,
    coeffs: ObservableCoeffs,
    kernel: KernelSpec,
    config: SmoothingConfig,
    with_measure: bool = True,
    normalize: bool = False,
) -> WavePacketSet:
    """Resolvent-sampled wave packets ``g_theta`` and the smoothed measure.

    For each pole ``a_j`` and angle ``theta`` the Caratheodory ratios
    ``(Lambda + z)/(Lambda - z)`` are applied at ``z = exp(i theta - i eps a_j)``
    and at the conjugate pole, then combined with the residues.  The ratios
    are evaluated as ``coth(log(Lambda / z) / 2)``, which is the same
    quantity computed without cancellation near ``Lambda = z``.  The
    smoothed measure pairs the ``+`` packets with ``g`` in eigencoordinates.

    Parameters
    ----------
    normalize : bool
        Divide each packet by the smoothed measure at its angle.
    """
    eps = config.epsilon
    _check_epsilon(eps)
    g = np.asarray(coeffs.g_eig, dtype=complex)
    thetas = np.asarray(config.thetas)
    packets = np.zeros((g.size, thetas.size), dtype=complex)
    xi = np.zeros(thetas.size) if (with_measure or normalize) else None
    gcol = g[:, None]
    # (Lambda + z)/(Lambda - z) = coth(u/2) with u = log(Lambda / z); forming
    # u directly avoids the cancellation in Lambda - z when theta is near an
    # eigenvalue angle.  The angle difference is wrapped (coth(u/2) has
    # period 2 pi i in u).
    lam = model.Lambda
    dphi = np.mod(np.angle(lam)[:, None] - thetas[None, :] + np.pi, 2 * np.pi) - np.pi
    base = np.log(np.abs(lam))[:, None] + 1j * dphi
    for a, alpha in zip(kernel.poles, kernel.residues):
        if np.exp(-eps * a.imag) > 1 - 1e-14:
            raise ValueError("resolvent point too close to the unit circle")
        g_plus = gcol / np.tanh((base + 1j * eps * a) / 2)
        g_minus = gcol / np.tanh((base + 1j * eps * np.conj(a)) / 2)
        packets += alpha * g_plus - np.conj(alpha) * g_minus
        if xi is not None:
            xi += (alpha * (g.conj() @ g_plus)).real
    packets *= -1.0 / (4 * np.pi)
    if xi is not None:
        xi *= -1.0 / (2 * np.pi)
    if normalize:
        if np.any(xi == 0):
            raise ValueError("cannot normalise packets where the smoothed measure vanishes")
        packets = packets / xi[None, :]
    packets_dict = model.to_dictionary(model.V @ packets)
    return WavePacketSet(
        thetas=thetas.copy(),
        packets_eig=packets,
        packets_dict=packets_dict,
        kernel=kernel,
        epsilon=eps,
        xi=xi if with_measure else None,
        normalized=normalize,
    )


def evaluate_packet(dictionary: Dictionary, packet_dict_coords, points) -> np.ndarray:
    """Evaluate ``Psi(x_p) . packet`` at state-space points.

    Parameters
    ----------
    dictionary : Dictionary
    packet_dict_coords : array_like, shape (N,) or (N, T)
        Packet(s) in dictionary coordinates.
    points : ndarray or SnapshotSet
        (P, d) points for explicit dictionaries, (P, depth, d) trajectory
        segments for delay dictionaries, or a snapshot set whose feature
        rows are used directly.
    """
    if isinstance(points, SnapshotSet):
        rows, _, _ = evaluate_feature_matrix(dictionary, points)
    else:
        rows = dictionary.evaluate_rows(points)
    c = np.asarray(packet_dict_coords, dtype=complex)
    if c.shape[0] != dictionary.N:
        raise ValueError(f"packet has {c.shape[0]} coordinates, dictionary has {dictionary.N}")
    return rows @ c


def _packet_norm_sq(p):
    nrm = float(np.vdot(p, p).real)
    if nrm == 0.0:
        raise ValueError("packet is zero")
    return nrm


def coherency_residual(model: MpEdmdModel, packet_eig, theta: float) -> float:
    """Relative residual ``||(K - e^{i theta}) p||_G / ||p||_G``.

    The metric is Euclidean in eigencoordinates since ``V^* G V = I``.
    """
    p = np.asarray(packet_eig, dtype=complex)
    denom = _packet_norm_sq(p)
    num = float(np.sum(np.abs(model.Lambda - np.exp(1j * theta)) ** 2 * np.abs(p) ** 2))
    return float(np.sqrt(num / denom))


def subspace_angle(model: MpEdmdModel, packet_eig, n_steps: int) -> np.ndarray:
    """Angles between ``p`` and ``K^n p`` for n = 1..n_steps."""
    p = np.asarray(packet_eig, dtype=complex)
    nrm = _packet_norm_sq(p)
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    n = np.arange(1, n_steps + 1)
    mass = np.abs(p) ** 2
    # ||K^n p|| = ||p|| since |Lambda| = 1 up to rounding; keep it explicit
    powers = model.Lambda[None, :] ** n[:, None]
    inner = powers @ mass
    norms = np.sqrt((np.abs(powers) ** 2 @ mass) * nrm)
    return np.arccos(np.clip(np.abs(inner) / norms, 0.0, 1.0))


def trajectory_subspace_angle(values, n_steps: int, weights=None) -> np.ndarray:
    """Subspace angles measured along a held-out trajectory.

    ``values[t]`` is the packet evaluated at the ``t``-th state of a single
    trajectory, so ``K^n p`` at state ``t`` is ``values[t + n]``.  Inner
    products are time averages over the overlapping window.
    """
    f = np.asarray(values, dtype=complex).ravel()
    if n_steps < 1 or n_steps >= f.size:
        raise ValueError("n_steps must lie in [1, len(values) - 1]")
    w = np.ones(f.size) if weights is None else np.asarray(weights, dtype=float)
    out = np.empty(n_steps)
    for n in range(1, n_steps + 1):
        a, b, ww = f[n:], f[:-n], w[:-n]
        inner = np.sum(ww * a * np.conj(b))
        den = np.sqrt(np.sum(ww * np.abs(a) ** 2) * np.sum(ww * np.abs(b) ** 2))
        if den == 0:
            raise ValueError("packet vanishes along the trajectory")
        out[n - 1] = np.arccos(min(1.0, abs(inner) / den))
    return out
