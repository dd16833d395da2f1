"""Independent reference values for tests and acceptance runs.

None of these routines call the Stage B code in :mod:`rigged_dmd.rigged`;
the only shared primitive is :func:`rigged_dmd.kernels.eval_periodic_kernel`,
itself checked against real-line quadrature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate

from .kernels import KernelSpec, eval_periodic_kernel

__all__ = [
    "shift_resolvent_oracle",
    "shift_resolvent_tail_bound",
    "shift_generalized_eigenfunction",
    "smoothed_shift_coefficient",
    "OrbitExpansion",
    "cat_map_observable",
    "fourier_coefficients_2d",
    "orbit_expansion",
    "cat_map_orbit_expansion",
    "cat_map_density",
    "diagonal_functional_calculus",
    "kernel_moment_oracle",
]


# --- bilateral shift ------------------------------------------------------------


def shift_resolvent_oracle(z: complex, N: int) -> np.ndarray:
    """Coefficients ``(1, z, ..., z^{N-1})`` of ``(K - z)^{-1} e_0`` on ``e_1..e_N``.

    Raises
    ------
    ValueError
        If ``|z| >= 1 - 1e-6``, where the series converges too slowly.
    """
    z = complex(z)
    if abs(z) >= 1 - 1e-6:
        raise ValueError(f"|z| = {abs(z)} is too close to the unit circle")
    if N < 1:
        raise ValueError("N must be positive")
    return z ** np.arange(N)


def shift_resolvent_tail_bound(z: complex, N: int) -> float:
    """Geometric tail ``|z|^N / (1 - |z|)`` of the truncated series."""
    r = abs(complex(z))
    return r**N / (1 - r)


def shift_generalized_eigenfunction(theta: float, j_range) -> np.ndarray:
    """Coefficients ``exp(i j theta)`` of the generalised eigenfunction."""
    j = np.asarray(j_range)
    return np.exp(1j * j * theta)


def smoothed_shift_coefficient(kernel: KernelSpec, epsilon: float, theta: float, k: int) -> complex:
    """``(1/2pi) int K_eps(theta - phi) exp(i k phi) dphi`` by adaptive quadrature."""

    def part(f):
        val, _ = integrate.quad(
            f, -np.pi, np.pi, points=[wrap(theta)], limit=400, epsabs=1e-14, epsrel=1e-13
        )
        return val

    def wrap(t):
        return float(np.mod(t + np.pi, 2 * np.pi) - np.pi)

    re = part(lambda p: eval_periodic_kernel(kernel, epsilon, theta - p) * np.cos(k * p))
    im = part(lambda p: eval_periodic_kernel(kernel, epsilon, theta - p) * np.sin(k * p))
    return complex(re, im) / (2 * np.pi)


# --- cat map ----------------------------------------------------------------------


def cat_map_observable(X) -> np.ndarray:
    """``sin(x) + sin(2x + y)/2 + (i/4) sin(5x + 3y)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x, y = X[:, 0], X[:, 1]
    return np.sin(x) + 0.5 * np.sin(2 * x + y) + 0.25j * np.sin(5 * x + 3 * y)


def fourier_coefficients_2d(func: Callable, n: int = 32, tol: float = 1e-13) -> Dict[Tuple[int, int], complex]:
    """Fourier coefficients of a trigonometric polynomial on the torus via FFT.

    Valid when every frequency satisfies ``|m|, |n| < n/2``.
    """
    t = 2 * np.pi * np.arange(n) / n
    A, B = np.meshgrid(t, t, indexing="ij")
    vals = np.asarray(func(np.column_stack([A.ravel(), B.ravel()]))).reshape(n, n)
    F = np.fft.fft2(vals) / n**2
    out = {}
    for a in range(n):
        for b in range(n):
            if abs(F[a, b]) > tol:
                fa = a if a < n // 2 else a - n
                fb = b if b < n // 2 else b - n
                out[(fa, fb)] = complex(F[a, b])
    return out


def _cat_forward(mode):
    m, n = mode
    return (2 * m + n, m + n)


def _cat_backward(mode):
    m, n = mode
    return (m - n, 2 * n - m)


@dataclass
class OrbitExpansion:
    """An observable split across orbits of the Koopman action on Fourier modes.

    ``orbits`` lists ``(base_mode, coefficients)`` pairs; coefficient ``j``
    multiplies the mode at shift position ``j`` (``j`` forward steps from
    the base mode).
    """

    orbits: List[Tuple[Tuple[int, int], np.ndarray]]

    def total_mass(self) -> float:
        return float(sum(np.sum(np.abs(c) ** 2) for _, c in self.orbits))


def _orbit_base(mode, search: int = 16):
    """Smallest-norm mode on the orbit through ``mode`` within ``search`` steps."""
    best = mode
    cur = mode
    for _ in range(search):
        cur = _cat_backward(cur)
        if abs(cur[0]) + abs(cur[1]) < abs(best[0]) + abs(best[1]):
            best = cur
    return best


def orbit_expansion(coeffs: Dict[Tuple[int, int], complex], span: int = 16) -> OrbitExpansion:
    """Group Fourier coefficients into cat-map orbits.

    Each non-constant mode is traced back to the smallest-norm mode of its
    orbit; positions are counted forward from that base.
    """
    groups: Dict[Tuple[int, int], Dict[int, complex]] = {}
    for mode, c in coeffs.items():
        if mode == (0, 0):
            continue
        base = _orbit_base(mode, span)
        cur, pos = base, 0
        while cur != mode:
            cur = _cat_forward(cur)
            pos += 1
            if pos > 2 * span:
                raise ValueError(f"could not place mode {mode} on an orbit")
        groups.setdefault(base, {})[pos] = c
    orbits = []
    for base in sorted(groups):
        entries = groups[base]
        seq = np.zeros(max(entries) + 1, dtype=complex)
        for p, c in entries.items():
            seq[p] = c
        orbits.append((base, seq))
    return OrbitExpansion(orbits=orbits)


def cat_map_orbit_expansion() -> OrbitExpansion:
    """Orbit expansion of the cat-map test observable, computed from its FFT."""
    return orbit_expansion(fourier_coefficients_2d(cat_map_observable))


def cat_map_density(theta, expansion: Optional[OrbitExpansion] = None):
    """Spectral density ``(1/2pi) sum_orbits |sum_j c_j exp(i j theta)|^2``.

    Each orbit is a copy of the bilateral shift with the Koopman operator
    moving position ``j`` to ``j + 1``, so the ``n``-th Fourier moment of the
    density is ``<K^n g, g>``.
    """
    exp_ = expansion or cat_map_orbit_expansion()
    th = np.asarray(theta, dtype=float)
    total = np.zeros(th.shape)
    for _, c in exp_.orbits:
        j = np.arange(c.size)
        total += np.abs(np.exp(1j * j * th[..., None]) @ c) ** 2
    out = total / (2 * np.pi)
    return float(out) if out.ndim == 0 else out


# --- diagonal functional calculus -------------------------------------------------


def diagonal_functional_calculus(angles, g, kernel: KernelSpec, epsilon: float, theta):
    """Exact smoothed packet and measure for a diagonal unitary.

    Returns
    -------
    packet : ndarray, shape (N,) or (N, T)
        ``K_eps(theta - phi_k) g_k``.
    measure : float or ndarray, shape (T,)
        ``sum_k K_eps(theta - phi_k) |g_k|^2``.
    """
    phi = np.asarray(angles, dtype=float).ravel()
    gv = np.asarray(g, dtype=complex).ravel()
    th = np.asarray(theta, dtype=float)
    Kmat = eval_periodic_kernel(kernel, epsilon, np.subtract.outer(th, phi))  # (..., N)
    packet = np.moveaxis(Kmat * gv, -1, 0)
    measure = Kmat @ (np.abs(gv) ** 2)
    return packet, measure


# --- kernel moments -----------------------------------------------------------------


def kernel_moment_oracle(kernel: KernelSpec, j: int) -> float:
    """``int K(x) x^j dx`` over the whole line by QUADPACK on infinite ranges.

    Evaluates the kernel from its partial fractions directly, independent
    of the evaluator in :mod:`rigged_dmd.kernels`.  Intended for ``j < m``
    where the integral converges absolutely.
    """
    a = np.asarray(kernel.poles)
    alpha = np.asarray(kernel.residues)

    def K(x):
        s = 0.0
        for aj, al in zip(a, alpha):
            s += (al / (x - aj)).imag
        return s / np.pi * x**j

    lo, hi = float(np.min(a.real)) - 1, float(np.max(a.real)) + 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        mid, _ = integrate.quad(K, lo, hi, points=sorted(a.real), limit=400, epsabs=1e-13)
        # the direct sum cancels badly at large |x|; shift to the Laurent tail there
        def tail(x):
            k = np.arange(kernel.m, kernel.m + 40)
            mu = (alpha[:, None] * a[:, None] ** k).sum(axis=0).imag
            return float((mu / x ** (k + 1 - j)).sum()) / np.pi

        far = 4.0 * float(np.max(np.abs(a)))
        near_r, _ = integrate.quad(K, hi, far, limit=400, epsabs=1e-13)
        near_l, _ = integrate.quad(K, -far, lo, limit=400, epsabs=1e-13)
        right, _ = integrate.quad(tail, far, np.inf, limit=400, epsabs=1e-13)
        left, _ = integrate.quad(tail, -np.inf, -far, limit=400, epsabs=1e-13)
    return mid + near_r + near_l + right + left
