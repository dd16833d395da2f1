"""EDMD and measure-preserving EDMD.

Both methods start from a pivoted economy QR factorisation
``W^{1/2} Psi_X P = Q R``.  mpEDMD replaces the Galerkin matrix by the
unitary polar factor of ``R^{-*} Psi_Y^* W^{1/2} Q``, so the fitted Koopman
matrix is an isometry in the empirical Gram inner product and its
eigenvalues sit on the unit circle.

Every fitted quantity lives in the *pivoted frame*: row and column ``i``
correspond to dictionary column ``pivots[i]``.  When pivoting is trivial
this is the dictionary order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

__all__ = [
    "RankDeficientError",
    "MpEdmdModel",
    "gram",
    "edmd",
    "mpedmd",
    "resolvent_apply",
    "RANK_RTOL",
]

RANK_RTOL = 1e-12


class RankDeficientError(ValueError):
    """Raised when ``W^{1/2} Psi_X`` is numerically rank deficient."""

    def __init__(self, rank: int, n: int):
        super().__init__(f"weighted feature matrix has numerical rank {rank} < {n}")
        self.rank = rank
        self.n = n


def _check_inputs(PsiX, PsiY, weights):
    PsiX = np.asarray(PsiX, dtype=complex)
    if PsiX.ndim != 2:
        raise ValueError("PsiX must be a 2-D array")
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != (PsiX.shape[0],):
        raise ValueError("need one weight per row of PsiX")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be finite and strictly positive")
    if PsiY is not None:
        PsiY = np.asarray(PsiY, dtype=complex)
        if PsiY.shape != PsiX.shape:
            raise ValueError("PsiX and PsiY must have the same shape")
    return PsiX, PsiY, np.sqrt(w)[:, None]


def _pivoted_qr(A):
    Q, R, piv = sla.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > RANK_RTOL * d[0])) if d.size and d[0] > 0 else 0
    return Q, R, piv, rank


def gram(PsiX, weights) -> np.ndarray:
    """Empirical Gram matrix ``Psi_X^* W Psi_X``."""
    PsiX, _, sw = _check_inputs(PsiX, None, weights)
    A = sw * PsiX
    G = A.conj().T @ A
    G = (G + G.conj().T) / 2
    return G


def edmd(PsiX, PsiY, weights) -> np.ndarray:
    """Least-squares Koopman matrix ``(W^{1/2} Psi_X)^+ W^{1/2} Psi_Y``.

    Returned in dictionary order.

    Raises
    ------
    RankDeficientError
        If the weighted feature matrix is rank deficient.
    """
    PsiX, PsiY, sw = _check_inputs(PsiX, PsiY, weights)
    N = PsiX.shape[1]
    Q, R, piv, rank = _pivoted_qr(sw * PsiX)
    if rank < N:
        raise RankDeficientError(rank, N)
    K = np.empty((N, N), dtype=complex)
    K[piv, :] = sla.solve_triangular(R, Q.conj().T @ (sw * PsiY))
    return K


@dataclass
class MpEdmdModel:
    """Fitted mpEDMD model, in the pivoted frame.

    Attributes
    ----------
    n : int
        Dictionary size before truncation.
    K : ndarray, shape (r, r)
        Koopman matrix ``R^{-1} U R`` with ``U`` the unitary polar factor.
    V : ndarray, shape (r, r)
        Eigenvectors ``R^{-1} Vhat`` (columns).
    Lambda : ndarray, shape (r,)
        Eigenvalues, on the unit circle.
    R : ndarray, shape (r, r)
        Upper-triangular QR factor; the Gram matrix is ``R^* R``.
    Vhat : ndarray, shape (r, r)
        Unitary Schur vectors of ``U``.
    pivots : ndarray of int, shape (r,)
        Dictionary column of each pivoted-frame index.
    Q : ndarray, shape (M, r), optional
        Orthonormal QR factor, cached after fitting.
    """

    n: int
    K: np.ndarray
    V: np.ndarray
    Lambda: np.ndarray
    R: np.ndarray
    Vhat: np.ndarray
    pivots: np.ndarray
    Q: Optional[np.ndarray] = None

    @property
    def rank(self) -> int:
        return self.K.shape[0]

    @property
    def truncated(self) -> bool:
        return self.rank < self.n

    def gram(self) -> np.ndarray:
        return self.R.conj().T @ self.R

    def orthonormal_factor(self, PsiX, weights) -> np.ndarray:
        """``Q = W^{1/2} Psi_X[:, pivots] R^{-1}``, cached when shapes agree."""
        PsiX = np.asarray(PsiX, dtype=complex)
        if self.Q is not None and self.Q.shape[0] == PsiX.shape[0]:
            return self.Q
        if PsiX.ndim != 2 or PsiX.shape[1] != self.n:
            raise ValueError(f"PsiX must have {self.n} columns, got shape {PsiX.shape}")
        sw = np.sqrt(np.asarray(weights, dtype=float))[:, None]
        A = sw * PsiX[:, self.pivots]
        # Q R = A  =>  Q = A R^{-1}, i.e. R^T Q^T = A^T
        return sla.solve_triangular(self.R, A.T, trans="T").T

    def to_dictionary(self, coeffs) -> np.ndarray:
        """Scatter pivoted-frame coefficient vectors into dictionary order."""
        coeffs = np.asarray(coeffs)
        out = np.zeros((self.n,) + coeffs.shape[1:], dtype=complex)
        out[self.pivots] = coeffs
        return out

    def from_dictionary(self, coeffs) -> np.ndarray:
        """Gather dictionary-order coefficients into the pivoted frame."""
        return np.asarray(coeffs)[self.pivots]

    def K_dictionary(self) -> np.ndarray:
        """Koopman matrix embedded in dictionary order (zeros for dropped columns)."""
        out = np.zeros((self.n, self.n), dtype=complex)
        out[np.ix_(self.pivots, self.pivots)] = self.K
        return out

    def unitarity_defect(self) -> float:
        """``||K^* G K - G||_F / ||G||_F``."""
        G = self.gram()
        return float(np.linalg.norm(self.K.conj().T @ G @ self.K - G) / np.linalg.norm(G))

    def circle_defect(self) -> float:
        """``max_k ||Lambda_k| - 1|``."""
        return float(np.max(np.abs(np.abs(self.Lambda) - 1.0)))

    def eigen_residual(self) -> float:
        """``||K V - V diag(Lambda)||_F / ||V||_F``."""
        res = self.K @ self.V - self.V * self.Lambda
        return float(np.linalg.norm(res) / np.linalg.norm(self.V))


def mpedmd(PsiX, PsiY, weights, truncate: bool = True) -> MpEdmdModel:
    """Fit a measure-preserving EDMD model.

    Parameters
    ----------
    PsiX, PsiY : array_like, shape (M, N)
    weights : array_like, shape (M,)
    truncate : bool
        If true, drop pivoted columns with ``|R_ii| <= 1e-12 |R_11|`` and
        fit on the remaining ones.  If false, rank deficiency is an error.

    Returns
    -------
    MpEdmdModel

    Raises
    ------
    RankDeficientError
        If ``truncate`` is false and the weighted feature matrix is rank
        deficient, or the rank is zero.
    """
    PsiX, PsiY, sw = _check_inputs(PsiX, PsiY, weights)
    N = PsiX.shape[1]
    Q, R, piv, rank = _pivoted_qr(sw * PsiX)
    if rank == 0 or (rank < N and not truncate):
        raise RankDeficientError(rank, N)
    if rank < N:
        piv = piv[:rank]
        Q, R = sla.qr(sw * PsiX[:, piv], mode="economic")
    B = sw * PsiY[:, piv]
    # C = R^{-*} B^* Q
    C = sla.solve_triangular(R, B.conj().T @ Q, trans="C")
    try:
        U1, _, U2h = np.linalg.svd(C)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"SVD did not converge: {err}") from None
    U = U2h.conj().T @ U1.conj().T
    T, Vhat = sla.schur(U, output="complex")
    lam = np.diag(T).copy()
    K = sla.solve_triangular(R, U @ R)
    V = sla.solve_triangular(R, Vhat)
    return MpEdmdModel(
        n=N, K=K, V=V, Lambda=lam, R=R, Vhat=Vhat, pivots=np.asarray(piv, dtype=int), Q=Q
    )


def resolvent_apply(model: MpEdmdModel, z: complex, coeffs_eig) -> np.ndarray:
    """Apply ``(K - z I)^{-1}`` to eigencoordinates: ``c_k / (Lambda_k - z)``.

    Raises
    ------
    ValueError
        If ``z`` lies within 1e-14 of an eigenvalue.
    """
    coeffs = np.asarray(coeffs_eig, dtype=complex)
    if coeffs.shape[0] != model.Lambda.size:
        raise ValueError(f"expected {model.Lambda.size} eigencoordinates, got {coeffs.shape[0]}")
    gap = model.Lambda - z
    if np.min(np.abs(gap)) <= 1e-14:
        raise ValueError("z coincides with an eigenvalue of the model")
    if coeffs.ndim == 1:
        return coeffs / gap
    return coeffs / gap[:, None]
