"""File formats: snapshot CSV, weights, model JSON, result CSV and provenance."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import sys
from contextlib import contextmanager
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .dictionary import SnapshotSet
from .dmd_core import MpEdmdModel

__all__ = [
    "FLOAT_FMT",
    "write_snapshots",
    "read_snapshots",
    "write_weights",
    "read_weights",
    "complex_to_json",
    "complex_from_json",
    "save_model",
    "load_model",
    "model_provenance",
    "write_csv",
    "read_matrix_csv",
    "write_provenance",
    "provenance_path",
    "array_hash",
    "config_hash",
    "environment_info",
    "OutputTracker",
]

FLOAT_FMT = "%.17g"


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


# --- snapshots and weights ------------------------------------------------------


def write_snapshots(path: str, snaps: SnapshotSet) -> None:
    """Write ``# d=<d> [traj=<l1,...>]`` followed by rows ``x..., y...``."""
    header = f"# d={snaps.d}"
    if snaps.trajectory_layout is not None:
        header += " traj=" + ",".join(str(n) for n in snaps.trajectory_layout)
    data = np.hstack([snaps.X, snaps.Y])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")


def _parse_header(line: str) -> Dict[str, str]:
    fields = {}
    for tok in line.lstrip("#").split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise ValueError(f"malformed snapshot header token {tok!r}")
        fields[key] = val
    return fields


def read_snapshots(path: str, weights: Optional[np.ndarray] = None) -> SnapshotSet:
    """Read a snapshot CSV.  Weights default to uniform ``1/M``."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# d=<d>' header")
        hdr = _parse_header(first)
        if "d" not in hdr:
            raise ValueError(f"{path}: header lacks d=<d>")
        d = int(hdr["d"])
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 2 * d:
        raise ValueError(f"{path}: expected {2 * d} columns, found {data.shape[1]}")
    layout = None
    if "traj" in hdr and hdr["traj"]:
        layout = tuple(int(v) for v in hdr["traj"].split(","))
    M = data.shape[0]
    w = np.full(M, 1.0 / M) if weights is None else np.asarray(weights, dtype=float)
    return SnapshotSet(data[:, :d], data[:, d:], w, trajectory_layout=layout)


def write_weights(path: str, weights: Sequence[float]) -> None:
    np.savetxt(path, np.asarray(weights, dtype=float), fmt=FLOAT_FMT)


def read_weights(path: str) -> np.ndarray:
    return np.loadtxt(path, ndmin=1).astype(float)


# --- model JSON -------------------------------------------------------------------


def complex_to_json(a) -> list:
    """Nested lists of ``[re, im]`` pairs."""
    a = np.asarray(a, dtype=complex)
    pairs = np.stack([a.real, a.imag], axis=-1)
    return pairs.tolist()


def complex_from_json(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex arrays must be stored as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def save_model(path: str, model: MpEdmdModel, provenance: Optional[dict] = None) -> None:
    """Serialise a model; Python floats round-trip exactly through JSON."""
    doc = {
        "n": int(model.n),
        "k": complex_to_json(model.K),
        "v": complex_to_json(model.V),
        "lambda": complex_to_json(model.Lambda),
        "r": complex_to_json(model.R),
        "vhat": complex_to_json(model.Vhat),
        "pivots": [int(p) for p in model.pivots],
        "truncated": bool(model.truncated),
        "provenance": provenance or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str) -> MpEdmdModel:
    """Read a model written by :func:`save_model`; ``Q`` is not stored."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return MpEdmdModel(
            n=int(doc["n"]),
            K=complex_from_json(doc["k"]),
            V=complex_from_json(doc["v"]),
            Lambda=complex_from_json(doc["lambda"]),
            R=complex_from_json(doc["r"]),
            Vhat=complex_from_json(doc["vhat"]),
            pivots=np.asarray(doc["pivots"], dtype=int),
        )
    except KeyError as err:
        raise ValueError(f"{path}: model file lacks field {err}") from None


def model_provenance(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh).get("provenance", {})


# --- result CSV -----------------------------------------------------------------


def write_csv(path: str, header: Sequence[str], columns: Iterable) -> None:
    """Write equal-length columns at full precision; complex columns must be split."""
    cols = [np.asarray(c) for c in columns]
    if any(np.iscomplexobj(c) for c in cols):
        raise ValueError("split complex columns into real and imaginary parts")
    data = np.column_stack(cols) if cols else np.empty((0, 0))
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")


def read_matrix_csv(path: str) -> np.ndarray:
    """Read a numeric CSV, skipping a header line if it is not numeric."""
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(v) for v in first.strip().split(",") if v]
    except ValueError:
        skip = 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, comments="#")


# --- provenance -------------------------------------------------------------------


def array_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def environment_info() -> dict:
    import scipy

    from . import __version__

    return {
        "rigged_dmd": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
    }


def provenance_path(path: str) -> str:
    return path + ".prov.json"


def write_provenance(path: str, info: dict) -> str:
    """Write the sidecar for ``path`` and return its location."""
    doc = dict(info)
    doc.setdefault("versions", environment_info())
    side = provenance_path(path)
    with open(side, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
    return side


class OutputTracker:
    """Record written files and delete them all if the enclosing block fails."""

    def __init__(self):
        self.paths: List[str] = []

    def add(self, path: str) -> str:
        self.paths.append(path)
        return path

    def cleanup(self) -> None:
        for p in self.paths:
            for q in (p, provenance_path(p)):
                try:
                    os.remove(q)
                except FileNotFoundError:
                    pass
        self.paths.clear()

    @contextmanager
    def guard(self):
        try:
            yield self
        except BaseException:
            self.cleanup()
            raise
