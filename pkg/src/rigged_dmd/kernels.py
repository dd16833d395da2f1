"""Rational smoothing kernels on the real line and on the periodic interval.

A kernel of order ``m`` is built from ``m`` poles ``a_j`` in the upper half
plane and residues ``alpha_j`` chosen so that the first ``m`` moments match
those of a delta function.  Lower half-plane poles are always the complex
conjugates, which keeps every kernel real-valued.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "KernelSpec",
    "SmoothingConfig",
    "KernelOrderReport",
    "MAX_ORDER",
    "make_rational_kernel",
    "default_poles",
    "eval_real_line_kernel",
    "eval_periodic_kernel",
    "kernel_fourier_transform",
    "poisson_kernel",
    "verify_kernel_order",
    "theta_grid",
]

MAX_ORDER = 12
_RESIDUAL_TOL = 1e-10
_IMAG_TOL = 1e-12


def _freeze(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelSpec:
    """An m-th order rational kernel.

    Attributes
    ----------
    m : int
        Kernel order.
    poles : ndarray of complex, shape (m,)
        Upper half-plane poles ``a_j``.
    residues : ndarray of complex, shape (m,)
        Residues ``alpha_j`` solving the Vandermonde moment system.
    """

    m: int
    poles: np.ndarray
    residues: np.ndarray

    def __post_init__(self):
        poles = _freeze(self.poles)
        residues = _freeze(self.residues)
        if poles.shape != (self.m,) or residues.shape != (self.m,):
            raise ValueError("poles and residues must both have length m")
        if np.any(poles.imag <= 0):
            raise ValueError("kernel poles must lie strictly in the upper half plane")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "residues", residues)

    def residual(self) -> float:
        """Relative residual of the moment system ``sum alpha_j a_j^k = delta_k0``."""
        vander = np.vander(self.poles, self.m, increasing=True).T
        rhs = np.zeros(self.m, dtype=complex)
        rhs[0] = 1.0
        return float(np.linalg.norm(vander @ self.residues - rhs))


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing parameter and the angles at which Stage B is evaluated."""

    epsilon: float
    thetas: np.ndarray = field(default_factory=lambda: theta_grid(2048))

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (0.0 < eps <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
        thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        if thetas.ndim != 1 or thetas.size == 0:
            raise ValueError("theta grid must be a non-empty 1-D sequence")
        if np.any(thetas < -np.pi) or np.any(thetas >= np.pi):
            raise ValueError("theta grid angles must lie in [-pi, pi)")
        thetas = thetas.copy()
        thetas.setflags(write=False)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "thetas", thetas)


def theta_grid(n: int) -> np.ndarray:
    """``n`` equispaced angles on [-pi, pi)."""
    if n < 1:
        raise ValueError("theta grid needs at least one point")
    return -np.pi + 2 * np.pi * np.arange(n) / n


def default_poles(m: int) -> np.ndarray:
    """Equispaced poles ``a_j = 2j/(m+1) - 1 + i`` for j = 1..m."""
    j = np.arange(1, m + 1)
    return 2.0 * j / (m + 1) - 1.0 + 1j


def make_rational_kernel(m: int, poles: Optional[Sequence[complex]] = None) -> KernelSpec:
    """Construct an m-th order rational kernel.

    Parameters
    ----------
    m : int
        Order, 1 <= m <= 12.  Beyond 12 the Vandermonde system for
        equispaced poles is too ill-conditioned to meet the residual check.
    poles : sequence of complex, optional
        Distinct poles with positive imaginary part.  Defaults to
        :func:`default_poles`.

    Returns
    -------
    KernelSpec

    Raises
    ------
    ValueError
        If ``m`` is out of range, the poles are invalid, or the residue
        solve fails its residual check.
    """
    if int(m) != m or not (1 <= m <= MAX_ORDER):
        raise ValueError(f"kernel order must be an integer in [1, {MAX_ORDER}], got {m}")
    m = int(m)
    a = default_poles(m) if poles is None else np.asarray(poles, dtype=complex)
    if a.shape != (m,):
        raise ValueError(f"expected {m} poles, got shape {a.shape}")
    if np.any(a.imag <= 0):
        raise ValueError("poles must have strictly positive imaginary part")
    diffs = np.abs(a[:, None] - a[None, :]) + np.eye(m)
    if np.any(diffs < 1e-12):
        raise ValueError("poles must be pairwise distinct")
    vander = np.vander(a, m, increasing=True).T
    rhs = np.zeros(m, dtype=complex)
    rhs[0] = 1.0
    alpha = np.linalg.solve(vander, rhs)
    spec = KernelSpec(m=m, poles=a, residues=alpha)
    if spec.residual() > _RESIDUAL_TOL:
        raise ValueError(f"residue system residual {spec.residual():.2e} exceeds tolerance")
    return spec


_FAR_TERMS = 40


def eval_real_line_kernel(spec: KernelSpec, x):
    """Evaluate ``K(x) = (1/pi) sum_j Im(alpha_j / (x - a_j))`` on the real line.

    For ``|x| > 4 max|a_j|`` the partial fractions cancel to ``O(|x|^-(m+1))``
    and the direct sum loses all accuracy, so the far field is evaluated from
    the Laurent series ``sum_k Im(mu_k) / x^(k+1)`` with
    ``mu_k = sum_j alpha_j a_j^k``, starting at ``k = m``.
    """
    x = np.asarray(x, dtype=float)
    radius = 4.0 * np.max(np.abs(spec.poles))
    far = np.abs(x) > radius
    xs = np.where(far, radius, x)
    out = (spec.residues / (xs[..., None] - spec.poles)).imag.sum(axis=-1) / np.pi
    if np.any(far):
        k = np.arange(spec.m, spec.m + _FAR_TERMS)
        mu = (spec.residues[:, None] * spec.poles[:, None] ** k).sum(axis=0).imag
        xf = x[far]
        inv = 1.0 / xf
        series = (mu * inv[:, None] ** (k + 1)).sum(axis=-1)
        out = np.array(out, dtype=float)
        out[far] = series / np.pi
    return float(out) if np.ndim(out) == 0 else out


def eval_periodic_kernel(spec: KernelSpec, epsilon: float, theta):
    """Evaluate the periodised kernel ``K_eps^T(theta)`` in closed form.

    Uses ``(1 + e^w) / (1 - e^w) = -coth(w/2)`` for each pole, which avoids
    forming ``1 - e^w`` explicitly when ``w`` is small.

    Parameters
    ----------
    spec : KernelSpec
    epsilon : float
        Smoothing parameter in (0, 1].
    theta : array_like
        Angles (any real values; the kernel is 2*pi periodic).

    Returns
    -------
    ndarray or float
        Real kernel values with the same shape as ``theta``.
    """
    eps = float(epsilon)
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
    theta = np.asarray(theta, dtype=float)
    th = theta[..., None]
    a = spec.poles
    alpha = spec.residues
    w_plus = 1j * th - 1j * eps * a
    w_minus = 1j * th - 1j * eps * np.conj(a)
    # |w| bounded below by eps*Im(a) since Re(w) = +-eps*Im(a)
    if np.min(np.abs(w_plus.real)) < 1e-14:
        raise ValueError("resolvent point too close to the unit circle")
    t_plus = alpha / np.tanh(w_plus / 2)
    t_minus = np.conj(alpha) / np.tanh(w_minus / 2)
    total = (t_plus - t_minus).sum(axis=-1) / (4 * np.pi)
    scale = (np.abs(t_plus) + np.abs(t_minus)).sum(axis=-1) / (4 * np.pi)
    if np.any(np.abs(total.imag) > _IMAG_TOL * np.maximum(scale, 1e-300)):
        raise ValueError("periodic kernel has a non-negligible imaginary part; residues corrupted?")
    out = total.real
    return float(out) if out.ndim == 0 else out


def kernel_fourier_transform(spec: KernelSpec, xi):
    """Fourier transform ``int K(x) exp(-i xi x) dx`` of the real-line kernel.

    Closing the contour in the half plane where ``exp(-i xi x)`` decays picks
    up the conjugate poles for ``xi > 0`` and the upper poles for ``xi < 0``.
    The Fourier coefficient of the periodic kernel at integer ``n`` equals
    this transform at ``xi = n * epsilon``.
    """
    xi = np.asarray(xi, dtype=float)
    x = xi[..., None]
    a = spec.poles
    alpha = spec.residues
    pos = (np.conj(alpha) * np.exp(-1j * x * np.conj(a))).sum(axis=-1)
    neg = (alpha * np.exp(-1j * x * a)).sum(axis=-1)
    out = np.where(xi > 0, pos, np.where(xi < 0, neg, 1.0 + 0j))
    return complex(out) if out.ndim == 0 else out


def poisson_kernel(epsilon: float, theta):
    """Poisson kernel of the unit disc at radius ``r = 1/(1 + epsilon)``."""
    eps = float(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    r = 1.0 / (1.0 + eps)
    theta = np.asarray(theta, dtype=float)
    out = (1 - r**2) / (1 + r**2 - 2 * r * np.cos(theta)) / (2 * np.pi)
    return float(out) if out.ndim == 0 else out


@dataclass
class KernelOrderReport:
    """Numerical check of kernel normalisation, moments and decay."""

    m: int
    normalization_error: float
    moment_errors: np.ndarray
    decay_constant: float
    truncation: float

    @property
    def max_moment_error(self) -> float:
        return float(np.max(self.moment_errors)) if self.moment_errors.size else 0.0

    def passed(self, tol: float) -> bool:
        return self.normalization_error <= tol and self.max_moment_error <= 10 * tol

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "normalization_error": self.normalization_error,
            "moment_errors": [float(e) for e in self.moment_errors],
            "max_moment_error": self.max_moment_error,
            "decay_constant": self.decay_constant,
            "truncation": self.truncation,
        }


def _decay_constant(spec: KernelSpec) -> float:
    x = np.concatenate([-np.logspace(6, -3, 2000), [0.0], np.logspace(-3, 6, 2000)])

    def scaled(t):
        return np.abs(eval_real_line_kernel(spec, t)) * (1 + np.abs(t)) ** (spec.m + 1)

    vals = scaled(x)
    k = int(np.argmax(vals))
    # polish the sampled maximum between its neighbours
    lo, hi = x[max(k - 1, 0)], x[min(k + 1, x.size - 1)]
    res = optimize.minimize_scalar(lambda t: -scaled(t), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return float(max(vals[k], -res.fun))


def verify_kernel_order(spec: KernelSpec, tol: float = 1e-8) -> KernelOrderReport:
    """Check normalisation and vanishing moments of the real-line kernel.

    Integrates over ``[-T, T]`` with ``T`` large enough that the integrated
    tail ``2 C T^(j-m) / (m-j)`` of each moment lies below ``tol / 10``,
    where ``C`` is the empirical decay constant
    ``sup |K(x)| (1 + |x|)^(m+1)``.  The substitution ``x = tan(t)`` keeps
    the adaptive quadrature well behaved for very large ``T``.

    Returns
    -------
    KernelOrderReport
    """
    m = spec.m
    C = _decay_constant(spec)
    T = max((2 * C / (tol / 10)) ** (1.0 / max(m - j, 1)) for j in range(m))
    t_max = np.arctan(T)
    breaks = sorted(set(np.arctan(spec.poles.real).round(12)))

    def moment(j):
        def f(t):
            x = np.tan(t)
            return eval_real_line_kernel(spec, x) * x**j * (1 + x * x)

        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(
                f, -t_max, t_max, points=breaks, limit=1000, epsabs=tol / 100, epsrel=1e-13
            )
        return val

    norm_err = abs(moment(0) - 1.0)
    moments = np.array([abs(moment(j)) for j in range(1, m)])
    return KernelOrderReport(
        m=m, normalization_error=norm_err, moment_errors=moments, decay_constant=C, truncation=T
    )
