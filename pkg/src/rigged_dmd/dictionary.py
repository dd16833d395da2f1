"""Snapshot containers, observables and feature matrices.

Two dictionary kinds are supported.  An *explicit* dictionary evaluates a
fixed list of observables at every snapshot.  A *delay* dictionary stacks
base observables along trajectories, so that column ``j*k + i`` holds
observable ``i`` evaluated ``j`` steps ahead; its span is a Krylov space of
the Koopman operator.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "SnapshotSet",
    "Observable",
    "Dictionary",
    "parse_observable",
    "parse_dictionary",
    "evaluate_feature_matrix",
    "kept_rows",
    "quadrature_weights",
    "parse_weight_spec",
    "expand_trajectory_weights",
]


@dataclass
class SnapshotSet:
    """Paired states ``x_m`` and images ``y_m = F(x_m)`` with quadrature weights.

    Parameters
    ----------
    X, Y : ndarray, shape (M, d)
    weights : ndarray, shape (M,)
        Strictly positive quadrature weights.
    trajectory_layout : sequence of int, optional
        Lengths of consecutive trajectories in row order.  Within a
        trajectory row ``m + 1`` is ``F`` applied to row ``m``.
    """

    X: np.ndarray
    Y: np.ndarray
    weights: np.ndarray
    trajectory_layout: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape != Y.shape:
            raise ValueError(f"X and Y must have the same shape, got {X.shape} and {Y.shape}")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape != (X.shape[0],):
            raise ValueError(f"need one weight per snapshot ({X.shape[0]}), got {w.size}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("quadrature weights must be finite and strictly positive")
        layout = self.trajectory_layout
        if layout is not None:
            layout = tuple(int(n) for n in layout)
            if any(n < 1 for n in layout) or sum(layout) != X.shape[0]:
                raise ValueError("trajectory lengths must be positive and sum to the number of rows")
        self.X, self.Y, self.weights, self.trajectory_layout = X, Y, w, layout

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def trajectory_slices(self) -> List[slice]:
        if self.trajectory_layout is None:
            raise ValueError("snapshot set has no trajectory layout")
        bounds = np.concatenate([[0], np.cumsum(self.trajectory_layout)])
        return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


# --- observable expressions -------------------------------------------------

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arctan": np.arctan,
    "abs": np.abs,
    "real": np.real,
    "imag": np.imag,
    "conj": np.conj,
}
_CONSTS = {"pi": math.pi, "e": math.e, "i": 1j}
_ALIASES = {"x": 1, "y": 2, "z": 3}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _compile(node, names):
    """Turn a restricted AST into a closure ``f(X) -> array``."""
    if isinstance(node, ast.Expression):
        return _compile(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        v = node.value
        return lambda X: v
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            v = _CONSTS[node.id]
            return lambda X: v
        m = re.fullmatch(r"x(\d+)", node.id)
        if m:
            col = int(m.group(1))
        elif node.id in _ALIASES:
            col = _ALIASES[node.id]
        else:
            raise ValueError(f"unknown name {node.id!r} in observable expression")
        if col < 1:
            raise ValueError("state coordinates are numbered from x1")
        names.add(col)
        return lambda X, c=col - 1: X[:, c]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs, rhs = _compile(node.left, names), _compile(node.right, names)
        return lambda X: op(lhs(X), rhs(X))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, names)
        if isinstance(node.op, ast.USub):
            return lambda X: np.negative(inner(X))
        return inner
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        if node.func.id not in _FUNCS or len(node.args) != 1:
            raise ValueError(f"unsupported function call {ast.unparse(node)!r}")
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0], names)
        return lambda X: fn(arg(X))
    raise ValueError(f"unsupported construct {ast.unparse(node)!r} in observable expression")


@dataclass(frozen=True)
class Observable:
    """A named scalar function of the state, vectorised over rows."""

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    min_dim: int = 0

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] < self.min_dim:
            raise ValueError(f"observable {self.name!r} needs at least {self.min_dim} coordinates")
        out = np.asarray(self.func(X), dtype=complex)
        return np.broadcast_to(out, (X.shape[0],)).copy()


def parse_observable(expr: str) -> Observable:
    """Parse an arithmetic expression in the state coordinates.

    Coordinates are ``x1, x2, ...`` (``x, y, z`` alias the first three).
    Allowed: numeric literals, ``pi``, ``e``, ``i`` (imaginary unit),
    ``+ - * / **`` and the functions sin, cos, tan, exp, log, sqrt, tanh,
    sinh, cosh, arctan, abs, real, imag, conj.

    >>> g = parse_observable("sin(x1) + 0.5*sin(2*x1 + x2)")
    >>> g(np.array([[0.0, 0.0]]))
    array([0.+0.j])
    """
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as err:
        raise ValueError(f"cannot parse observable {expr!r}: {err.msg}") from None
    names: set = set()
    func = _compile(tree, names)
    return Observable(name=expr.strip(), func=func, min_dim=max(names, default=0))


def _indicator(k: int) -> Observable:
    return Observable(
        name=f"ind({k})",
        func=lambda X, k=k: (np.rint(X[:, 0]) == k).astype(float),
        min_dim=1,
    )


@dataclass(frozen=True)
class Dictionary:
    """Feature map: explicit observables or a time-delay stack."""

    kind: str
    observables: Tuple[Observable, ...]
    depth: int = 1
    descriptor: str = ""

    def __post_init__(self):
        if self.kind not in ("explicit", "delay"):
            raise ValueError(f"dictionary kind must be 'explicit' or 'delay', got {self.kind!r}")
        if len(self.observables) == 0:
            raise ValueError("dictionary needs at least one observable")
        if self.kind == "explicit" and self.depth != 1:
            raise ValueError("explicit dictionaries have depth 1")
        if self.depth < 1:
            raise ValueError("delay depth must be at least 1")
        object.__setattr__(self, "observables", tuple(self.observables))

    @classmethod
    def explicit(cls, observables: Sequence, descriptor: str = "") -> "Dictionary":
        obs = tuple(parse_observable(o) if isinstance(o, str) else o for o in observables)
        desc = descriptor or "explicit:" + ";".join(o.name for o in obs)
        return cls("explicit", obs, 1, desc)

    @classmethod
    def delay(cls, observables: Sequence, depth: int, descriptor: str = "") -> "Dictionary":
        obs = tuple(parse_observable(o) if isinstance(o, str) else o for o in observables)
        desc = descriptor or f"delay:{int(depth)}:" + ";".join(o.name for o in obs)
        return cls("delay", obs, int(depth), desc)

    @property
    def k(self) -> int:
        """Number of base observables."""
        return len(self.observables)

    @property
    def N(self) -> int:
        return self.k * self.depth

    def base_values(self, X) -> np.ndarray:
        """Base observables at each row of ``X``, shape (rows, k)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([o(X) for o in self.observables])

    def evaluate_rows(self, points) -> np.ndarray:
        """Feature rows ``Psi(x_p)``.

        For explicit dictionaries ``points`` has shape (P, d).  For delay
        dictionaries it must be a stack of trajectory segments of shape
        (P, depth, d), segment ``p`` listing ``x_p, F(x_p), ...``.
        """
        pts = np.asarray(points, dtype=float)
        if self.kind == "explicit":
            return self.base_values(pts)
        if pts.ndim != 3 or pts.shape[1] < self.depth:
            raise ValueError(
                f"delay dictionary needs segments of shape (P, >= {self.depth}, d), got {pts.shape}"
            )
        P, _, d = pts.shape
        vals = self.base_values(pts[:, : self.depth, :].reshape(P * self.depth, d))
        return vals.reshape(P, self.depth * self.k)


def parse_dictionary(spec: str) -> Dictionary:
    """Build a dictionary from its string form.

    Forms
    -----
    ``explicit:<expr>;<expr>;...``
        One column per expression.
    ``delay:<depth>:<expr>;...``
        Time-delay stack of the base expressions.
    ``indicator:<lo>:<hi>``
        Indicators of the integer states ``lo..hi`` of the first coordinate.
    ``fourier:<K>``
        One-dimensional Fourier modes ``exp(i k x1)`` for ``|k| <= K``.
    """
    spec = spec.strip()
    head, _, rest = spec.partition(":")
    if head == "explicit":
        exprs = [e for e in rest.split(";") if e.strip()]
        return Dictionary.explicit(exprs, descriptor=spec)
    if head == "delay":
        depth, _, body = rest.partition(":")
        try:
            depth_i = int(depth)
        except ValueError:
            raise ValueError(f"bad delay depth in {spec!r}") from None
        exprs = [e for e in body.split(";") if e.strip()]
        return Dictionary.delay(exprs, depth_i, descriptor=spec)
    if head == "indicator":
        lo, _, hi = rest.partition(":")
        obs = [_indicator(k) for k in range(int(lo), int(hi) + 1)]
        return Dictionary("explicit", tuple(obs), 1, spec)
    if head == "fourier":
        K = int(rest)
        exprs = [f"exp({k}*i*x1)" for k in range(-K, K + 1)]
        return Dictionary.explicit(exprs, descriptor=spec)
    raise ValueError(f"unknown dictionary spec {spec!r}")


# --- feature matrices -------------------------------------------------------


def kept_rows(dictionary: Dictionary, snapshots: SnapshotSet) -> np.ndarray:
    """Indices of snapshot rows that produce a feature-matrix row."""
    if dictionary.kind == "explicit":
        return np.arange(snapshots.M)
    if snapshots.trajectory_layout is None:
        raise ValueError("delay dictionaries need a trajectory-structured snapshot set")
    rows = []
    for sl in snapshots.trajectory_slices():
        length = sl.stop - sl.start
        if length < dictionary.depth + 1:
            raise ValueError(
                f"trajectory of length {length} is too short for delay depth {dictionary.depth}"
            )
        rows.append(np.arange(sl.start, sl.stop - dictionary.depth))
    return np.concatenate(rows)


def evaluate_feature_matrix(dictionary: Dictionary, snapshots: SnapshotSet):
    """Evaluate ``PsiX``, ``PsiY`` and the matching weights.

    For delay dictionaries each base observable is evaluated once per state,
    and both matrices are slices of the same array, so
    ``PsiY[:, c] == PsiX[:, c + k]`` holds bitwise.  Rows whose trajectory
    does not extend ``depth`` steps ahead are dropped and the remaining
    weights rescaled to preserve the total mass.

    Returns
    -------
    PsiX, PsiY : ndarray of complex, shape (M', N)
    weights : ndarray, shape (M',)
    """
    if dictionary.kind == "explicit":
        PsiX = dictionary.base_values(snapshots.X)
        PsiY = dictionary.base_values(snapshots.Y)
        w = snapshots.weights.copy()
    else:
        rows = kept_rows(dictionary, snapshots)
        vals = dictionary.base_values(snapshots.X)
        depth, k = dictionary.depth, dictionary.k
        PsiX = np.empty((rows.size, depth * k), dtype=complex)
        PsiY = np.empty_like(PsiX)
        for j in range(depth):
            PsiX[:, j * k : (j + 1) * k] = vals[rows + j]
            PsiY[:, j * k : (j + 1) * k] = vals[rows + j + 1]
        w = snapshots.weights[rows]
        w = w * (snapshots.weights.sum() / w.sum())
    if dictionary.N > PsiX.shape[0]:
        raise ValueError(
            f"dictionary size {dictionary.N} exceeds the number of usable snapshots {PsiX.shape[0]}"
        )
    return PsiX, PsiY, w


# --- quadrature weights -----------------------------------------------------


def _trapz_1d(n: int, lo: float, hi: float, periodic: bool) -> np.ndarray:
    if n < 2:
        raise ValueError("trapezoidal grids need at least two points per axis")
    if periodic:
        return np.full(n, (hi - lo) / n)
    h = (hi - lo) / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def quadrature_weights(kind: str, M: Optional[int] = None, axes: Optional[Sequence] = None):
    """Quadrature weights for a snapshot set.

    Parameters
    ----------
    kind : {'uniform', 'grid_trapezoidal'}
    M : int
        Number of samples, for ``uniform``.
    axes : sequence of (n, lo, hi, periodic)
        Axis descriptions for ``grid_trapezoidal``; the grid is flattened in
        C order (first axis slowest).  Periodic axes use ``n`` points on
        ``[lo, hi)``, bounded axes ``n`` points on ``[lo, hi]``.

    Returns
    -------
    ndarray
        Uniform weights sum to one; grid weights sum to the domain measure.
    """
    if kind == "uniform":
        if M is None or M < 1:
            raise ValueError("uniform weights need a positive sample count")
        return np.full(int(M), 1.0 / M)
    if kind == "grid_trapezoidal":
        if not axes:
            raise ValueError("grid weights need at least one axis")
        w = np.ones(1)
        for n, lo, hi, periodic in axes:
            w = np.multiply.outer(w, _trapz_1d(int(n), float(lo), float(hi), bool(periodic))).ravel()
        if M is not None and w.size != M:
            raise ValueError(f"grid has {w.size} points but {M} samples were given")
        return w
    raise ValueError(f"unknown weight kind {kind!r}")


_AXIS_RE = re.compile(r"^(\d+)([pb])(?:@([-+0-9.eE]+|-?pi):([-+0-9.eE]+|-?pi))?$")


def _num(s: str) -> float:
    return {"pi": math.pi, "-pi": -math.pi}.get(s, None) or float(s)


def parse_weight_spec(spec: str, M: int) -> np.ndarray:
    """Parse ``uniform`` or ``trapz:<axis>,<axis>...`` into weights.

    Each axis is ``<n>p`` (periodic) or ``<n>b`` (bounded), optionally
    followed by ``@lo:hi``; the default interval is ``[-pi, pi)``.  For
    example ``trapz:500p,500b@-4:4`` is the pendulum grid.
    """
    spec = spec.strip()
    if spec == "uniform":
        return quadrature_weights("uniform", M=M)
    if spec.startswith("trapz:"):
        axes = []
        for item in spec[len("trapz:") :].split(","):
            m = _AXIS_RE.match(item.strip())
            if not m:
                raise ValueError(f"bad axis {item!r} in weight spec {spec!r}")
            lo = _num(m.group(3)) if m.group(3) else -math.pi
            hi = _num(m.group(4)) if m.group(4) else math.pi
            axes.append((int(m.group(1)), lo, hi, m.group(2) == "p"))
        w = quadrature_weights("grid_trapezoidal", axes=axes)
        if w.size != M:
            raise ValueError(f"weight grid has {w.size} points but there are {M} rows")
        return w
    raise ValueError(f"unknown weight spec {spec!r}")


def expand_trajectory_weights(w_traj, layout: Sequence[int]) -> np.ndarray:
    """Spread one weight per trajectory evenly over that trajectory's rows."""
    w_traj = np.asarray(w_traj, dtype=float)
    layout = np.asarray(layout, dtype=int)
    if w_traj.shape != layout.shape:
        raise ValueError("need one weight per trajectory")
    return np.repeat(w_traj / layout, layout)
