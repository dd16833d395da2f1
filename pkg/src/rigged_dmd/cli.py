"""Command-line interface: ``rdmd <subcommand>``.

Every subcommand accepts ``--config file.json``.  The file may hold flat
keys, a section named after the subcommand, or both; flags on the command
line override the file.  ``rdmd run --config`` executes a list of stages
and removes every output it wrote if any stage fails.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import io as rio
from .dictionary import (
    Dictionary,
    SnapshotSet,
    evaluate_feature_matrix,
    expand_trajectory_weights,
    kept_rows,
    parse_dictionary,
    parse_observable,
    parse_weight_spec,
)
from .dmd_core import mpedmd
from .kernels import SmoothingConfig, eval_periodic_kernel, make_rational_kernel, theta_grid, verify_kernel_order
from .modes import generalized_modes
from .rigged import (
    coherency_residual,
    evaluate_packet,
    observable_coefficients,
    subspace_angle,
    trajectory_subspace_angle,
    wave_packets,
)

CATMAP_G = "sin(x1) + 0.5*sin(2*x1 + x2) + 0.25*i*sin(5*x1 + 3*x2)"


class StageError(RuntimeError):
    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage
        self.original = err


# --- parsing helpers ------------------------------------------------------------


def parse_thetas(spec) -> np.ndarray:
    """``grid:<n>``, a comma list of angles, or a list from a config file."""
    if spec is None:
        raise ValueError("no theta values given")
    if isinstance(spec, (list, tuple)):
        vals = np.asarray(spec, dtype=float)
    else:
        s = str(spec).strip()
        if s.startswith("grid:"):
            vals = theta_grid(int(s[5:]))
        else:
            parts = [p for p in s.split(",") if p.strip()]
            vals = np.asarray([float(p) for p in parts], dtype=float)
    if vals.size == 0:
        raise ValueError("theta list is empty")
    return vals


def _wrap(t):
    return np.mod(np.asarray(t, dtype=float) + np.pi, 2 * np.pi) - np.pi


def resolve_weights(spec: Optional[str], snaps: SnapshotSet) -> np.ndarray:
    """Weights from ``uniform``, ``trapz:...`` or a file.

    A weight vector with one entry per trajectory is spread over each
    trajectory's rows.
    """
    if spec is None:
        return snaps.weights
    if spec == "uniform" or spec.startswith("trapz:"):
        n_traj = len(snaps.trajectory_layout) if snaps.trajectory_layout else None
        try:
            return parse_weight_spec(spec, snaps.M)
        except ValueError:
            if n_traj is None:
                raise
            return expand_trajectory_weights(parse_weight_spec(spec, n_traj), snaps.trajectory_layout)
    w = rio.read_weights(spec)
    if w.size == snaps.M:
        return w
    if snaps.trajectory_layout and w.size == len(snaps.trajectory_layout):
        return expand_trajectory_weights(w, snaps.trajectory_layout)
    raise ValueError(f"weights file {spec} has {w.size} entries for {snaps.M} snapshots")


def _load_snapshots(path: str, weights: Optional[str]) -> SnapshotSet:
    snaps = rio.read_snapshots(path)
    w = resolve_weights(weights, snaps)
    return SnapshotSet(snaps.X, snaps.Y, w, snaps.trajectory_layout)


class Context:
    """Fitted model plus the data needed to project observables onto it."""

    def __init__(self, ns):
        self.model = rio.load_model(ns.model)
        prov = rio.model_provenance(ns.model)
        snap_path = ns.snapshots or prov.get("snapshots")
        dict_spec = ns.dict or prov.get("dictionary")
        weights = ns.weights if ns.weights is not None else prov.get("weights")
        if not snap_path or not dict_spec:
            raise ValueError("need --snapshots and --dict (not recorded in the model file)")
        self.dictionary = parse_dictionary(dict_spec)
        self.snaps = _load_snapshots(snap_path, weights)
        self.PsiX, _, self.w = evaluate_feature_matrix(self.dictionary, self.snaps)
        self.rows = kept_rows(self.dictionary, self.snaps)
        if self.PsiX.shape[1] != self.model.n:
            raise ValueError(
                f"dictionary has {self.PsiX.shape[1]} columns but the model was fitted with {self.model.n}"
            )

    def samples(self, spec: Optional[str]) -> np.ndarray:
        """Observable samples aligned with ``PsiX`` rows."""
        if spec is None:
            return self.dictionary.observables[0](self.snaps.X[self.rows])
        if spec.startswith("@"):
            data = rio.read_matrix_csv(spec[1:])
            if data.shape[1] == 2:
                col = data[:, 0] + 1j * data[:, 1]
            else:
                col = data[:, 0].astype(complex)
            if col.size == self.snaps.M:
                return col[self.rows]
            if col.size == self.rows.size:
                return col
            raise ValueError(f"{spec[1:]} has {col.size} samples, expected {self.snaps.M} or {self.rows.size}")
        return parse_observable(spec)(self.snaps.X[self.rows])


def _open_out(path: Optional[str]):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w")


# --- subcommands ------------------------------------------------------------------


def cmd_kernel(ns, tracker: rio.OutputTracker) -> dict:
    spec = make_rational_kernel(ns.order)
    th = theta_grid(ns.grid)
    vals = eval_periodic_kernel(spec, ns.epsilon, th)
    if ns.out and ns.out != "-":
        rio.write_csv(tracker.add(ns.out), ["theta", "value"], [th, vals])
        rio.write_provenance(ns.out, {"command": "kernel", "order": ns.order, "epsilon": ns.epsilon})
    elif not ns.verify:
        sys.stdout.write("theta,value\n")
        np.savetxt(sys.stdout, np.column_stack([th, vals]), fmt=rio.FLOAT_FMT, delimiter=",")
    report = None
    if ns.verify:
        report = verify_kernel_order(spec).to_dict()
        print(json.dumps(report, indent=2))
    return {"report": report}


def _default_depth(system: str) -> int:
    return {"catmap": 100, "pendulum": 20, "lorenz": 500}.get(system, 1)


def cmd_demo(ns, tracker: rio.OutputTracker) -> dict:
    from .oracles import cat_map_density
    from .systems import cat_map_snapshots, lorenz_trajectory, pendulum_trajectories

    system = ns.system
    depth = ns.depth if ns.depth is not None else _default_depth(system)
    info: Dict = {"command": "demo", "system": system}
    extra_weights = None
    if system == "catmap":
        snaps = cat_map_snapshots(ns.n, depth)
        info.update(n=ns.n, depth=depth, dictionary=f"delay:{depth}:{CATMAP_G}", orbits="exact integer")
    elif system == "pendulum":
        snaps = pendulum_trajectories(ns.n1, ns.n2, ns.x2_max, ns.dt if ns.dt else 1.0, depth)
        info.update(
            n1=ns.n1, n2=ns.n2, x2_max=ns.x2_max, dt=ns.dt or 1.0, depth=depth,
            integrator="DOP853", rtol=1e-12,
            dictionary=f"delay:{depth}:exp(i*x1);exp(i*x1)*x2",
        )
    elif system == "lorenz":
        data = lorenz_trajectory(ns.samples, ns.dt if ns.dt else 0.05, ns.burn_in, depth)
        snaps = data.snapshots
        info.update(data.provenance)
        info.update(
            samples=ns.samples, depth=depth,
            dictionary=f"delay:{depth}:tanh((x1*x2 - 5*x3)/10) - ({data.c!r})",
        )
        if ns.obs_out:
            rio.write_csv(tracker.add(ns.obs_out), ["g"], [data.g.real])
    elif system == "shift":
        N = ns.half_width
        j = np.arange(-N, N + 1, dtype=float)
        snaps = SnapshotSet(j, j + 1, np.ones(j.size))
        extra_weights = snaps.weights
        info.update(half_width=N, dictionary=f"indicator:{-N}:{N}", weights_note="unit weights")
    else:
        raise ValueError(f"unknown system {system!r}")
    rio.write_snapshots(tracker.add(ns.out), snaps)
    info["data_hash"] = rio.array_hash(snaps.X, snaps.Y)
    if ns.weights_out:
        rio.write_weights(tracker.add(ns.weights_out), snaps.weights if extra_weights is None else extra_weights)
    if system == "catmap" and ns.oracle_out:
        th = theta_grid(ns.grid)
        rio.write_csv(tracker.add(ns.oracle_out), ["theta", "density"], [th, cat_map_density(th)])
    rio.write_provenance(ns.out, info)
    return info


def cmd_fit(ns, tracker: rio.OutputTracker) -> dict:
    dictionary = parse_dictionary(ns.dict)
    snaps = _load_snapshots(ns.snapshots, ns.weights)
    PsiX, PsiY, w = evaluate_feature_matrix(dictionary, snaps)
    t0 = time.perf_counter()
    model = mpedmd(PsiX, PsiY, w, truncate=not ns.no_truncate)
    prov = {
        "command": "fit",
        "snapshots": os.path.abspath(ns.snapshots),
        "dictionary": dictionary.descriptor,
        "weights": ns.weights,
        "data_hash": rio.array_hash(snaps.X, snaps.Y, snaps.weights),
        "rank": model.rank,
        "truncated": model.truncated,
        "rank_rule": "|R_ii| > 1e-12 |R_11|",
        "circle_defect": model.circle_defect(),
        "unitarity_defect": model.unitarity_defect(),
        "fit_seconds": time.perf_counter() - t0,
    }
    rio.save_model(tracker.add(ns.out), model, prov)
    rio.write_provenance(ns.out, prov)
    return prov


def cmd_measure(ns, tracker: rio.OutputTracker) -> dict:
    thetas = theta_grid(ns.grid)
    ctx = Context(ns)
    kernel = make_rational_kernel(ns.order)
    cfg = SmoothingConfig(ns.epsilon, thetas)
    coeffs = observable_coefficients(ctx.model, ctx.PsiX, ctx.w, ctx.samples(ns.g))
    wp = wave_packets(ctx.model, coeffs, kernel, cfg, with_measure=True)
    header, cols = ["theta", "xi"], [thetas, wp.xi]
    if ns.reference == "catmap":
        from .oracles import cat_map_density

        header.append("reference")
        cols.append(cat_map_density(thetas))
    if ns.out and ns.out != "-":
        rio.write_csv(tracker.add(ns.out), header, cols)
        rio.write_provenance(
            ns.out,
            {"command": "measure", "model": ns.model, "order": ns.order, "epsilon": ns.epsilon,
             "g": ns.g, "norm_sq": coeffs.norm_sq},
        )
    else:
        sys.stdout.write(",".join(header) + "\n")
        np.savetxt(sys.stdout, np.column_stack(cols), fmt=rio.FLOAT_FMT, delimiter=",")
    return {"norm_sq": coeffs.norm_sq}


def cmd_packets(ns, tracker: rio.OutputTracker) -> dict:
    thetas = _wrap(parse_thetas(ns.theta))
    ctx = Context(ns)
    kernel = make_rational_kernel(ns.order)
    cfg = SmoothingConfig(ns.epsilon, thetas)
    coeffs = observable_coefficients(ctx.model, ctx.PsiX, ctx.w, ctx.samples(ns.g))
    wp = wave_packets(ctx.model, coeffs, kernel, cfg, with_measure=True, normalize=ns.normalize)
    doc = {
        "thetas": thetas.tolist(),
        "order": ns.order,
        "epsilon": ns.epsilon,
        "normalized": bool(ns.normalize),
        "xi": wp.xi.tolist(),
        "packets_dict": [rio.complex_to_json(wp.packets_dict[:, t]) for t in range(thetas.size)],
        "packets_eig": [rio.complex_to_json(wp.packets_eig[:, t]) for t in range(thetas.size)],
    }
    with _open_out(tracker.add(ns.out) if ns.out not in (None, "-") else None) as fh:
        json.dump(doc, fh)
    if ns.out not in (None, "-"):
        rio.write_provenance(ns.out, {"command": "packets", "model": ns.model})
    if ns.render:
        if not ns.render_out:
            raise ValueError("--render needs --render-out")
        if ctx.dictionary.kind == "delay":
            pts = rio.read_snapshots(ns.render)
            values = evaluate_packet(ctx.dictionary, wp.packets_dict, pts)
            coords = pts.X[kept_rows(ctx.dictionary, pts)]
        else:
            coords = rio.read_matrix_csv(ns.render)
            values = evaluate_packet(ctx.dictionary, wp.packets_dict, coords)
        header = [f"x{i + 1}" for i in range(coords.shape[1])]
        cols = [coords[:, i] for i in range(coords.shape[1])]
        for t in range(thetas.size):
            header += [f"re_{t}", f"im_{t}"]
            cols += [values[:, t].real, values[:, t].imag]
        rio.write_csv(tracker.add(ns.render_out), header, cols)
        rio.write_provenance(ns.render_out, {"command": "packets", "render": ns.render})
    return {"thetas": thetas.tolist()}


def cmd_modes(ns, tracker: rio.OutputTracker) -> dict:
    thetas = _wrap(parse_thetas(ns.theta))
    ctx = Context(ns)
    if ns.obs:
        data = rio.read_matrix_csv(ns.obs).astype(complex)
        if data.shape[0] == ctx.snaps.M:
            data = data[ctx.rows]
        elif data.shape[0] != ctx.rows.size:
            raise ValueError(f"{ns.obs} has {data.shape[0]} rows, expected {ctx.snaps.M} or {ctx.rows.size}")
    elif ns.obs_expr:
        X = ctx.snaps.X[ctx.rows]
        data = np.column_stack([parse_observable(e)(X) for e in ns.obs_expr.split(";") if e.strip()])
    else:
        raise ValueError("need --obs or --obs-expr")
    kernel = make_rational_kernel(ns.order)
    cfg = SmoothingConfig(ns.epsilon, thetas)
    sweep = generalized_modes(ctx.model, data, ctx.PsiX, ctx.w, kernel, cfg)
    c = sweep.c
    if ns.normalize:
        mean_obs = data.mean(axis=1)
        co = observable_coefficients(ctx.model, ctx.PsiX, ctx.w, mean_obs)
        xi = wave_packets(ctx.model, co, kernel, cfg, with_measure=True).xi
        c = c / xi[None, :]
    header, cols = ["theta"], [thetas]
    for p in range(c.shape[0]):
        header += [f"re_c{p + 1}", f"im_c{p + 1}"]
        cols += [c[p].real, c[p].imag]
    rio.write_csv(tracker.add(ns.out), header, cols)
    rio.write_provenance(ns.out, {"command": "modes", "model": ns.model, "observables": c.shape[0]})
    return {"observables": int(c.shape[0])}


def cmd_coherency(ns, tracker: rio.OutputTracker) -> dict:
    theta = float(_wrap(float(ns.theta)))
    ctx = Context(ns)
    kernel = make_rational_kernel(ns.order)
    cfg = SmoothingConfig(ns.epsilon, [theta])
    coeffs = observable_coefficients(ctx.model, ctx.PsiX, ctx.w, ctx.samples(ns.g))
    wp = wave_packets(ctx.model, coeffs, kernel, cfg, with_measure=False)
    p = wp.packets_eig[:, 0]
    residual = coherency_residual(ctx.model, p, theta)
    if ns.heldout:
        held = rio.read_snapshots(ns.heldout)
        vals = evaluate_packet(ctx.dictionary, wp.packets_dict[:, 0], held)
        angles = trajectory_subspace_angle(vals, ns.steps)
    else:
        angles = subspace_angle(ctx.model, p, ns.steps)
    steps = np.arange(1, ns.steps + 1)
    info = {"command": "coherency", "theta": theta, "residual": residual, "heldout": ns.heldout}
    if ns.out and ns.out != "-":
        rio.write_csv(tracker.add(ns.out), ["n", "angle"], [steps, angles])
        rio.write_provenance(ns.out, info)
    else:
        sys.stdout.write("n,angle\n")
        np.savetxt(sys.stdout, np.column_stack([steps, angles]), fmt=rio.FLOAT_FMT, delimiter=",")
    print(f"coherency residual: {residual!r}", file=sys.stderr)
    return info


def cmd_sweep(ns, tracker: rio.OutputTracker) -> dict:
    from .oracles import cat_map_density

    if ns.reference != "catmap":
        raise ValueError("sweep needs an analytic reference; only --reference catmap is available")
    ctx = Context(ns)
    thetas = theta_grid(ns.grid)
    exact = cat_map_density(thetas)
    coeffs = observable_coefficients(ctx.model, ctx.PsiX, ctx.w, ctx.samples(ns.g))
    eps_list = np.geomspace(ns.eps_min, ns.eps_max, ns.eps_count)
    header, cols = ["epsilon"], [eps_list]
    for m in ns.orders:
        kernel = make_rational_kernel(m)
        errs = []
        for eps in eps_list:
            xi = wave_packets(ctx.model, coeffs, kernel, SmoothingConfig(eps, thetas)).xi
            errs.append(np.max(np.abs(xi - exact)))
        header.append(f"linf_m{m}")
        cols.append(np.asarray(errs))
    rio.write_csv(tracker.add(ns.out), header, cols)
    rio.write_provenance(
        ns.out, {"command": "sweep", "model": ns.model, "orders": list(ns.orders), "grid": ns.grid}
    )
    return {"orders": list(ns.orders)}


def cmd_bench(ns, tracker: rio.OutputTracker) -> dict:
    from .systems import cat_map_snapshots, shift_model

    kernel = make_rational_kernel(ns.order)
    cfg = SmoothingConfig(ns.epsilon, theta_grid(ns.grid))
    results = []
    for size in ns.sizes:
        t0 = time.perf_counter()
        if ns.system == "shift":
            sm = shift_model(size)
            PsiX, PsiY, w = sm.PsiX, sm.PsiY, sm.weights
            g = PsiX[:, sm.center]
        elif ns.system == "catmap":
            snaps = cat_map_snapshots(50, size)
            D = Dictionary.delay([CATMAP_G], size)
            PsiX, PsiY, w = evaluate_feature_matrix(D, snaps)
            g = PsiX[:, 0]
        else:
            raise ValueError(f"bench supports shift and catmap, not {ns.system!r}")
        t1 = time.perf_counter()
        model = mpedmd(PsiX, PsiY, w)
        t2 = time.perf_counter()
        co = observable_coefficients(model, PsiX, w, g)
        wave_packets(model, co, kernel, cfg)
        t3 = time.perf_counter()
        results.append({"size": size, "data_s": t1 - t0, "fit_s": t2 - t1, "stage_b_s": t3 - t2, "rank": model.rank})
    out = {"system": ns.system, "order": ns.order, "grid": ns.grid, "results": results}
    if ns.out and ns.out != "-":
        with open(tracker.add(ns.out), "w") as fh:
            json.dump(out, fh, indent=2)
    else:
        print(json.dumps(out, indent=2))
    return out


# --- parser ---------------------------------------------------------------------------


def _add_model_args(p):
    p.add_argument("--model", required=False, help="fitted model JSON")
    p.add_argument("--snapshots", help="snapshot CSV (defaults to the one recorded in the model)")
    p.add_argument("--dict", help="dictionary spec (defaults to the one recorded in the model)")
    p.add_argument("--weights", help="uniform | trapz:<axes> | weights file")
    p.add_argument("--g", help="observable expression, or @file.csv with samples")
    p.add_argument("--order", type=int, default=4, help="kernel order m")
    p.add_argument("--epsilon", type=float, default=0.1, help="smoothing parameter")


COMMANDS = {
    "kernel": cmd_kernel,
    "demo": cmd_demo,
    "fit": cmd_fit,
    "measure": cmd_measure,
    "packets": cmd_packets,
    "modes": cmd_modes,
    "coherency": cmd_coherency,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}

REQUIRED = {
    "demo": ["system", "out"],
    "fit": ["snapshots", "dict", "out"],
    "measure": ["model"],
    "packets": ["model", "theta"],
    "modes": ["model", "theta", "out"],
    "coherency": ["model", "theta"],
    "sweep": ["model", "out"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdmd", description="Rigged DMD command-line tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of default values")
        return p

    p = add("kernel", "evaluate a periodic kernel on an angle grid")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--out")
    p.add_argument("--verify", action="store_true", help="print the moment report as JSON")

    p = add("demo", "generate snapshot data from a built-in system")
    p.add_argument("system", nargs="?", choices=["catmap", "pendulum", "lorenz", "shift"])
    p.add_argument("--out", help="snapshot CSV to write")
    p.add_argument("--weights-out")
    p.add_argument("--obs-out", help="lorenz: write the centred observable samples")
    p.add_argument("--oracle-out", help="catmap: write the analytic spectral density")
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--depth", type=int)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--n1", type=int, default=500)
    p.add_argument("--n2", type=int, default=500)
    p.add_argument("--x2-max", dest="x2_max", type=float, default=4.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--burn-in", dest="burn_in", type=float, default=100.0)
    p.add_argument("--half-width", dest="half_width", type=int, default=40)

    p = add("fit", "fit an mpEDMD model")
    p.add_argument("--snapshots")
    p.add_argument("--dict")
    p.add_argument("--weights")
    p.add_argument("--out")
    p.add_argument("--no-truncate", dest="no_truncate", action="store_true")

    p = add("measure", "smoothed spectral measure on an equispaced grid")
    _add_model_args(p)
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--reference", choices=["catmap"], help="append an analytic reference column")
    p.add_argument("--out")

    p = add("packets", "wave packets at chosen angles")
    _add_model_args(p)
    p.add_argument("--theta", help="comma-separated angles or grid:<n>")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out")
    p.add_argument("--render", help="points CSV (explicit) or snapshot CSV (delay)")
    p.add_argument("--render-out", dest="render_out")

    p = add("modes", "generalised Koopman modes of several observables")
    _add_model_args(p)
    p.add_argument("--obs", help="CSV with one column per observable")
    p.add_argument("--obs-expr", dest="obs_expr", help="';'-separated observable expressions")
    p.add_argument("--theta")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out")

    p = add("coherency", "coherency residual and subspace angles of a packet")
    _add_model_args(p)
    p.add_argument("--theta")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--heldout", help="snapshot CSV of a held-out trajectory")
    p.add_argument("--out")

    p = add("sweep", "L-infinity error of the smoothed measure against an analytic density")
    _add_model_args(p)
    p.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--eps-min", dest="eps_min", type=float, default=0.05)
    p.add_argument("--eps-max", dest="eps_max", type=float, default=0.3)
    p.add_argument("--eps-count", dest="eps_count", type=int, default=8)
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--reference", default="catmap", choices=["catmap"])
    p.add_argument("--out")

    p = add("bench", "time data generation, fitting and Stage B")
    p.add_argument("--system", default="shift", choices=["shift", "catmap"])
    p.add_argument("--sizes", type=int, nargs="+", default=[20, 40, 80])
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--out")

    p = sub.add_parser("run", help="run a multi-stage pipeline from a config file")
    p.add_argument("--config", required=True)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config_defaults(cfg: dict, name: str, sub: argparse.ArgumentParser) -> dict:
    dests = {a.dest for a in sub._actions}
    vals = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
    section = cfg.get(name, {})
    if isinstance(section, dict):
        vals.update({k.replace("-", "_"): v for k, v in section.items()})
    return {k: v for k, v in vals.items() if k in dests}


def _load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return cfg


def _validate(name: str, ns) -> None:
    for key in REQUIRED.get(name, []):
        if getattr(ns, key, None) is None:
            raise ValueError(f"missing required option --{key.replace('_', '-')}")
    if hasattr(ns, "theta") and name in ("packets", "modes"):
        parse_thetas(ns.theta)
    g = getattr(ns, "g", None)
    if g is not None and not g.startswith("@"):
        parse_observable(g)
    if getattr(ns, "dict", None):
        parse_dictionary(ns.dict)
    if hasattr(ns, "order") and ns.order is not None:
        make_rational_kernel(ns.order)
    if getattr(ns, "epsilon", None) is not None:
        SmoothingConfig(ns.epsilon, [0.0])
    if name == "sweep":
        if not (0 < ns.eps_min <= ns.eps_max) or ns.eps_count < 2:
            raise ValueError("sweep needs 0 < eps-min <= eps-max and eps-count >= 2")
        for m in ns.orders:
            make_rational_kernel(m)
    if getattr(ns, "grid", None) is not None and ns.grid < 1:
        raise ValueError("grid must be positive")


def _stage_namespace(parser, name: str, cfg: dict) -> argparse.Namespace:
    sub = _subparser(parser, name)
    ns = sub.parse_args([] if name != "demo" else [])
    for k, v in _config_defaults(cfg, name, sub).items():
        setattr(ns, k, v)
    ns.command = name
    return ns


def run_pipeline(cfg: dict, parser: Optional[argparse.ArgumentParser] = None) -> List[dict]:
    """Run ``cfg['stages']`` in order; remove all outputs if a stage fails."""
    parser = parser or build_parser()
    stages = cfg.get("stages")
    if not stages or not isinstance(stages, list):
        raise ValueError("config needs a non-empty 'stages' list")
    plan = []
    for name in stages:
        if name not in COMMANDS:
            raise ValueError(f"unknown stage {name!r}")
        ns = _stage_namespace(parser, name, cfg)
        try:
            _validate(name, ns)
        except ValueError as err:
            raise StageError(name, err) from err
        plan.append((name, ns))
    tracker = rio.OutputTracker()
    results = []
    with tracker.guard():
        for name, ns in plan:
            try:
                results.append(COMMANDS[name](ns, tracker))
            except Exception as err:
                raise StageError(name, err) from err
        stamp = {"pipeline": stages, "config_hash": rio.config_hash(cfg), "seed": cfg.get("seed")}
        for p in list(tracker.paths):
            side = rio.provenance_path(p)
            info = {}
            if os.path.exists(side):
                with open(side) as fh:
                    info = json.load(fh)
            info.update(stamp)
            rio.write_provenance(p, info)
    return results


def _thread_limit():
    n = os.environ.get("RDMD_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # first pass finds the subcommand and any config file
        pre = parser.parse_args(argv)
        cfg = _load_config(pre.config) if getattr(pre, "config", None) else {}
        with _thread_limit():
            if pre.command == "run":
                run_pipeline(cfg, parser)
                return 0
            sub = _subparser(parser, pre.command)
            sub.set_defaults(**_config_defaults(cfg, pre.command, sub))
            ns = parser.parse_args(argv)
            _validate(ns.command, ns)
            tracker = rio.OutputTracker()
            with tracker.guard():
                COMMANDS[ns.command](ns, tracker)
        return 0
    except StageError as err:
        print(f"rdmd: error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, KeyError) as err:
        print(f"rdmd: error: {err}", file=sys.stderr)
        return 2
