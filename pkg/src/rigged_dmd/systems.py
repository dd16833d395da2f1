"""Built-in dynamical systems that generate snapshot data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .dictionary import SnapshotSet, expand_trajectory_weights, quadrature_weights
from .dmd_core import MpEdmdModel
from .rigged import ObservableCoeffs

__all__ = [
    "wrap_angle",
    "cat_map",
    "cat_map_grid_orbits",
    "cat_map_snapshots",
    "pendulum_rhs",
    "pendulum_trajectories",
    "LorenzData",
    "lorenz_rhs",
    "lorenz_trajectory",
    "lorenz_observable",
    "ShiftModel",
    "shift_model",
    "diagonal_model",
]


def wrap_angle(x):
    """Map angles into [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi


# --- cat map ------------------------------------------------------------------


def cat_map(points):
    """Arnold's cat map ``(x, y) -> (2x + y, x + y)`` on [-pi, pi)^2."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([wrap_angle(2 * x + y), wrap_angle(x + y)])


def cat_map_grid_orbits(n: int, steps: int) -> np.ndarray:
    """Exact orbits of the equispaced ``n x n`` grid, as integer indices.

    Grid point ``(i, j)`` sits at ``(-pi + 2 pi i/n, -pi + 2 pi j/n)``.  For
    even ``n`` the grid is invariant: ``2x + y`` lands on index ``2i + j``
    and ``x + y`` on index ``i + j + n/2`` (mod ``n``).  Iterating on
    integers avoids the exponential growth of rounding error along chaotic
    orbits.

    Returns
    -------
    ndarray of int, shape (n*n, steps + 1, 2)
    """
    if n < 2 or n % 2:
        raise ValueError("exact grid orbits need an even grid size n >= 2")
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = I.ravel(), J.ravel()
    out = np.empty((n * n, steps + 1, 2), dtype=np.int64)
    for s in range(steps + 1):
        out[:, s, 0], out[:, s, 1] = i, j
        i, j = (2 * i + j) % n, (i + j + n // 2) % n
    return out


def cat_map_snapshots(n: int = 50, depth: int = 1) -> SnapshotSet:
    """Trajectories of length ``depth + 1`` from every point of an ``n x n`` grid.

    Row order is grid-point major, ``x`` index slowest.  Each row carries
    weight ``1/M``, so once a depth-``depth`` delay dictionary drops the
    final ``depth`` rows of each trajectory every remaining row weighs
    ``1/n^2``.  Even ``n`` uses exact integer orbits; odd ``n`` falls back
    to floating-point iteration, which drifts off the grid.
    """
    if n < 2:
        raise ValueError("grid needs at least two points per axis")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    L = depth + 1
    if n % 2 == 0:
        orbits = cat_map_grid_orbits(n, L)
        states = -np.pi + 2 * np.pi * orbits / n
    else:
        g = -np.pi + 2 * np.pi * np.arange(n) / n
        X0 = np.column_stack([a.ravel() for a in np.meshgrid(g, g, indexing="ij")])
        states = np.empty((n * n, L + 1, 2))
        states[:, 0] = X0
        for s in range(L):
            states[:, s + 1] = cat_map(states[:, s])
    X = states[:, :L].reshape(-1, 2)
    Y = states[:, 1:].reshape(-1, 2)
    M = X.shape[0]
    return SnapshotSet(X, Y, np.full(M, 1.0 / M), trajectory_layout=(L,) * (n * n))


# --- pendulum -----------------------------------------------------------------


def pendulum_rhs(t, u):
    """Vectorised pendulum field for a flat state ``[x1..., x2...]``."""
    h = u.size // 2
    return np.concatenate([u[h:], -np.sin(u[:h])])


def pendulum_trajectories(
    n1: int = 500,
    n2: int = 500,
    x2_max: float = 4.0,
    dt: float = 1.0,
    depth: int = 1,
    rtol: float = 1e-12,
) -> SnapshotSet:
    """Pendulum trajectories from a periodic x trapezoidal grid.

    Initial angles are ``n1`` periodic points on [-pi, pi); initial momenta
    ``n2`` points on ``[-x2_max, x2_max]`` including the ends.  Each
    trajectory holds ``depth + 1`` samples spaced by ``dt``.  The combined
    system of all initial conditions is integrated with DOP853.  The angle
    is wrapped into [-pi, pi) after integration.

    Each row carries its initial condition's quadrature weight divided by
    ``depth + 1``.
    """
    if n1 < 2 or n2 < 2 or dt <= 0 or depth < 0 or x2_max <= 0:
        raise ValueError("pendulum grid sizes must be >= 2 and dt, x2_max positive")
    L = depth + 1
    a = -np.pi + 2 * np.pi * np.arange(n1) / n1
    b = np.linspace(-x2_max, x2_max, n2)
    A, B = np.meshgrid(a, b, indexing="ij")
    u0 = np.concatenate([A.ravel(), B.ravel()])
    P = A.size
    t_eval = dt * np.arange(L + 1)
    sol = solve_ivp(
        pendulum_rhs, (0.0, t_eval[-1]), u0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=rtol
    )
    if not sol.success:
        raise RuntimeError(f"pendulum integration failed: {sol.message}")
    x1 = wrap_angle(sol.y[:P].T)  # (L+1, P)
    x2 = sol.y[P:].T
    states = np.stack([x1, x2], axis=-1).transpose(1, 0, 2)  # (P, L+1, 2)
    X = states[:, :L].reshape(-1, 2)
    Y = states[:, 1:].reshape(-1, 2)
    w_ic = quadrature_weights(
        "grid_trapezoidal", axes=[(n1, -np.pi, np.pi, True), (n2, -x2_max, x2_max, False)]
    )
    layout = (L,) * P
    w = expand_trajectory_weights(w_ic, layout)
    return SnapshotSet(X, Y, w, trajectory_layout=layout)


# --- Lorenz -------------------------------------------------------------------


def lorenz_rhs(t, u, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    x, y, z = u
    return [sigma * (y - x), x * (rho - z) - y, x * y - beta * z]


def lorenz_observable(X, c: float = 0.0) -> np.ndarray:
    """``tanh((x y - 5 z) / 10) - c``."""
    X = np.atleast_2d(X)
    return np.tanh((X[:, 0] * X[:, 1] - 5 * X[:, 2]) / 10) - c


@dataclass
class LorenzData:
    """A Lorenz trajectory plus the centred observable sampled along it."""

    snapshots: SnapshotSet
    g: np.ndarray
    c: float
    provenance: dict = field(default_factory=dict)


def lorenz_trajectory(
    M: int = 10_000,
    dt: float = 0.05,
    burn_in: float = 100.0,
    depth: int = 0,
    x0: Sequence[float] = (1.0, 1.0, 1.0),
    rtol: float = 1e-9,
    atol: float = 1e-9,
) -> LorenzData:
    """Sample one Lorenz trajectory after a burn-in.

    ``M + depth`` states are produced, so a depth-``depth`` delay
    dictionary keeps exactly ``M`` rows.  Integration uses RK45 (an
    adaptive fifth-order Runge-Kutta pair).  The constant ``c`` is the mean
    of ``tanh((x y - 5 z)/10)`` over the sampled states.
    """
    if M < 1 or dt <= 0 or burn_in < 0 or depth < 0:
        raise ValueError("need M >= 1, dt > 0, burn_in >= 0 and depth >= 0")
    opts = dict(method="RK45", rtol=rtol, atol=atol)
    u = np.asarray(x0, dtype=float)
    if burn_in > 0:
        pre = solve_ivp(lorenz_rhs, (0.0, burn_in), u, **opts)
        if not pre.success:
            raise RuntimeError(f"Lorenz burn-in failed: {pre.message}")
        u = pre.y[:, -1]
    n_states = M + depth + 1
    t_eval = dt * np.arange(n_states)
    sol = solve_ivp(lorenz_rhs, (0.0, t_eval[-1]), u, t_eval=t_eval, **opts)
    if not sol.success:
        raise RuntimeError(f"Lorenz integration failed: {sol.message}")
    states = sol.y.T
    X, Y = states[:-1], states[1:]
    raw = lorenz_observable(X)
    c = float(raw.mean())
    snaps = SnapshotSet(X, Y, np.full(X.shape[0], 1.0 / X.shape[0]), trajectory_layout=(X.shape[0],))
    prov = {
        "integrator": "RK45",
        "rtol": rtol,
        "atol": atol,
        "burn_in": burn_in,
        "x0": [float(v) for v in x0],
        "dt": dt,
        "c": c,
    }
    return LorenzData(snapshots=snaps, g=raw - c, c=c, provenance=prov)


# --- synthetic unitary models ---------------------------------------------------


@dataclass
class ShiftModel:
    """Large-data limit of the truncated bilateral shift on ``e_{-N}..e_N``.

    Feeding ``PsiX = I``, ``PsiY = cross`` and unit weights to EDMD or
    mpEDMD reproduces the exact Gram and cross matrices.  ``center`` is the
    index of ``e_0``.
    """

    N: int
    gram: np.ndarray
    cross: np.ndarray

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @property
    def center(self) -> int:
        return self.N

    @property
    def PsiX(self) -> np.ndarray:
        return np.eye(self.size)

    @property
    def PsiY(self) -> np.ndarray:
        return self.cross.copy()

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.size)

    def index(self, j: int) -> int:
        """Array index of ``e_j``."""
        if abs(j) > self.N:
            raise ValueError(f"e_{j} lies outside the truncation |j| <= {self.N}")
        return self.N + j


def shift_model(N: int) -> ShiftModel:
    """Exact matrices for ``K e_j = e_{j-1}`` truncated to ``|j| <= N``."""
    if N < 1:
        raise ValueError("half-width N must be at least 1")
    n = 2 * N + 1
    cross = np.diag(np.ones(n - 1), 1)
    return ShiftModel(N=N, gram=np.eye(n), cross=cross)


def diagonal_model(angles, g) -> "tuple[MpEdmdModel, ObservableCoeffs]":
    """A diagonal unitary model with eigenvalues ``exp(i phi_k)``.

    All factors are identities, so Stage B on this model realises the
    functional calculus exactly.
    """
    phi = np.asarray(angles, dtype=float).ravel()
    gv = np.asarray(g, dtype=complex).ravel()
    if phi.shape != gv.shape or phi.size == 0:
        raise ValueError("angles and g must be non-empty and of equal length")
    n = phi.size
    lam = np.exp(1j * phi)
    eye = np.eye(n, dtype=complex)
    model = MpEdmdModel(
        n=n, K=np.diag(lam), V=eye.copy(), Lambda=lam, R=eye.copy(), Vhat=eye.copy(),
        pivots=np.arange(n),
    )
    return model, ObservableCoeffs(g_eig=gv.copy(), norm_sq=float(np.vdot(gv, gv).real))
