"""Batch experiment runner.

Subcommands: sff, tmat-check, ssep, east, collapse, dilated-demo, and
reproduce <preset>.  Every run writes its data files plus a manifest
(config echo, seed, code version, wall time, file list) into the output
directory; identical configs and seeds yield byte-identical data files for
any worker count.  Partial outputs are removed on failure.
"""

import argparse
import csv
import json
import os
import subprocess
import sys
import time

import numpy as np

from . import __version__
from . import rng as rngmod
from . import scaling as sc
from . import sff as sffmod
from . import stochastic as st
from .config import ConfigError, ExperimentConfig, parse_config, to_json
from .dilated import (AdaptiveGateSpec, DilatedState, Register,
                      SpacetimeLattice, build_adaptive_gate,
                      build_measurement_unitary, generic_blocks, ising_blocks,
                      u1_blocks, weight_basis_measurement)
from .experiments import density_curves, tmat_check
from .sff import HybridPeriodSpec, PeriodMeasurement
from .weyl import weight_matrix

ENV_WORKERS = "STINESIM_WORKERS"

PRESETS = ("u1-decay", "east-collapse", "sff-generic")


def _code_version():
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        if rev.returncode == 0:
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.TimeoutExpired):
        pass
    return __version__


class RunTracker:
    """Tracks emitted files so failed runs leave no partial output."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        p = os.path.join(self.out_dir, name)
        self.files.append(name)
        return p

    def cleanup(self):
        for name in self.files:
            p = os.path.join(self.out_dir, name)
            if os.path.exists(p):
                os.remove(p)

    def manifest(self, config, wall_time):
        doc = {
            "config": config.canonical(),
            "seed": config.seed,
            "code_version": _code_version(),
            "wall_time_s": round(wall_time, 3),
            "files": list(self.files),
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# runners

def _block_structure(name, cluster):
    if name == "generic":
        return generic_blocks(cluster, 2)
    if name == "u1":
        return u1_blocks(cluster, 2)
    if name == "ising":
        return ising_blocks(cluster)
    raise ValueError(name)


def _sff_period_spec(p):
    n = p["n_sites"]
    q = p["q"]
    even = [(j, j + 1) for j in range(0, n - 1, 2)]
    odd = [(j, (j + 1) % n) for j in range(1, n, 2)] if n > 2 else []
    elements = [("evo", tuple(_block_structure(p["blocks"], c) for c in even))]
    if odd:
        elements.append(("evo", tuple(_block_structure(p["blocks"], c) for c in odd)))
    if p["measured_sites"]:
        if p["measurement_basis"] == "z":
            projs = (np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        else:
            projs = (np.array([[0.5, 0.5], [0.5, 0.5]]),
                     np.array([[0.5, -0.5], [-0.5, 0.5]]))
        meas = tuple(PeriodMeasurement((s,), projs) for s in p["measured_sites"])
        elements.append(("meas", meas))
    return HybridPeriodSpec(n, q, tuple(elements))


def _run_sff(config, tracker):
    p = config.params
    variant = p["variant"]
    if variant == "transition":
        n = p["n_sites"]
        even = [(j, j + 1) for j in range(0, n - 1, 2)]
        odd = [(j, (j + 1) % n) for j in range(1, n, 2)] if n > 2 else []
        layers = [[_block_structure(p["blocks"], c) for c in even]]
        if odd:
            layers.append([_block_structure(p["blocks"], c) for c in odd])
        curve = sffmod.sff_transition(layers, n, p["q"], p["t_max"])
    else:
        spec = _sff_period_spec(p)
        if variant == "unitary":
            rng = rngmod.stream(config.seed, 0)
            f = sffmod.physical_unitary(sffmod.sample_period(spec, rng))
            curve = sffmod.sff_unitary(f, p["t_max"])
        elif variant == "postselected":
            curve = sffmod.sff_postselected(spec, p["t_max"], p["realizations"],
                                            config.seed)
        elif variant == "reset":
            curve = sffmod.sff_reset(spec, p["t_max"], p["realizations"], config.seed)
        else:
            d = p["q"] ** p["n_sites"]
            curve = sffmod.sff_state_dependent(spec, np.eye(d) / d, p["t_max"],
                                               p["realizations"], config.seed)
    curve.seed = config.seed
    sffmod.write_curve_csv(curve, tracker.path(f"sff_{variant}.csv"))


def _run_tmat_check(config, tracker):
    p = config.params
    res = tmat_check(n_sites=p["n_sites"], steps=p["steps"], gamma=p["gamma"],
                     realizations=p["realizations"], seed=config.seed,
                     workers=config.workers)
    with open(tracker.path("tmat_check.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "n", "mc_re", "mc_im", "stderr", "pred_re", "pred_im", "z"])
        z = res.z_scores()
        for i, ix in enumerate(res.indices):
            w.writerow(["".join(map(str, ix.m)), "".join(map(str, ix.n)),
                        repr(res.mc_mean[i].real), repr(res.mc_mean[i].imag),
                        repr(float(res.mc_stderr[i])),
                        repr(res.predicted[i].real), repr(res.predicted[i].imag),
                        repr(float(z[i]))])
    if res.max_z > 5.0:
        raise RuntimeError(f"transition-matrix check failed: max z = {res.max_z:.2f}")


def _trajectory_points(config):
    p = config.params
    if config.kind == "ssep":
        return [(p["L"], g, p["t_max"]) for g in p["gammas"]]
    points = []
    for L in p["L_values"]:
        t_max = p["t_max"] or int(round(p["t_factor"] * L))
        points.extend((L, g, t_max) for g in p["gammas"])
    return points


def _run_trajectories(config, tracker, model):
    p = config.params
    points = _trajectory_points(config)
    curves = density_curves(model, points, p["samples"], config.seed,
                            workers=config.workers, boundary=p["boundary"],
                            interleaving=p["interleaving"])
    st.write_density_csv(curves, tracker.path(f"{model}_density.csv"))
    if p["dump_absorption"]:
        for curve in curves:
            name = f"{model}_absorption_L{curve.params.L}_g{curve.params.gamma}.txt"
            st.write_absorption_dump(curve, tracker.path(name))
    return curves


def read_density_csv(path):
    """Load curves from a density CSV (inverse of write_density_csv)."""
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["model"], int(row["L"]), float(row["gamma"]),
                   int(row["samples"]), int(row["seed"]))
            rows.setdefault(key, []).append(
                (int(row["t"]), float(row["n_d"]), float(row["stderr"])))
    curves = []
    for (model, L, gamma, samples, seed), pts in rows.items():
        pts.sort()
        t, v, e = zip(*pts)
        params = st.ProtocolParams(model, L, gamma, max(t), samples, seed)
        curves.append(st.DensityCurve(np.array(t), np.array(v), np.array(e), params))
    return curves


def _run_collapse(config, tracker):
    p = config.params
    curves = []
    for path in p["inputs"]:
        curves.extend(read_density_csv(path))
    grid = [float(g) for g in p["gamma_c_grid"]]
    gc, profile = sc.estimate_gamma_c(curves, grid, delta=p["delta"],
                                      nu_par=p["nu_par"], mode=p["mode"],
                                      ratio=p["ratio"], bins=p["bins"])
    params = sc.CollapseParams(gc, p["delta"], p["nu_par"])
    result = sc.rescale(curves, params, mode=p["mode"], ratio=p["ratio"],
                        bins=p["bins"])
    sc.write_collapse_csv(result, tracker.path("collapse_points.csv"))
    fits = []
    if p["fit_gamma"] > 0:
        for curve in curves:
            if abs(curve.params.gamma - p["fit_gamma"]) < 1e-12:
                rep = sc.critical_decay_check(curve, tuple(p["fit_window"]))
                fits.append({"L": curve.params.L, "gamma": curve.params.gamma,
                             "slope": rep.slope, "slope_err": rep.slope_err,
                             "curvature_rejected": rep.rejected})
    sc.write_report_json(tracker.path("collapse_report.json"), gc, profile,
                         fits=fits, extra={"quality_at_estimate": result.quality})


def _run_dilated_demo(config, tracker):
    """Measure-Z-then-conditional-X on random qubit states: the feedback
    pins <Z> to one, while the bare outcome-averaged measurement leaves the
    prior expectation value untouched."""
    n = config.params["n_states"]
    rng = rngmod.stream(config.seed, 0)
    latt = SpacetimeLattice(1, 2, (Register(0, 1, 2),))
    meas = weight_basis_measurement((0,), 2, [[0], [1]], 0)
    u = build_measurement_unitary(meas, latt)
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    adapt = build_adaptive_gate(AdaptiveGateSpec((0,), (0,), {0: np.eye(2), 1: flip}),
                                latt)
    z = weight_matrix(2)
    with open(tracker.path("dilated_demo.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "z_before", "z_measured_only", "z_with_feedback"])
        for k in range(n):
            v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            v /= np.linalg.norm(v)
            before = float(np.real(np.vdot(v, z @ v)))
            s1 = DilatedState.from_physical(latt, psi_ph=v)
            s1.apply(u)
            from .dilated import dilated_expval
            mid = float(np.real(dilated_expval(s1, z)))
            s1.apply(adapt)
            after = float(np.real(dilated_expval(s1, z)))
            w.writerow([k, repr(before), repr(mid), repr(after)])


def run(config):
    """Execute a validated config; returns the exit status (0 = success).

    Writes data files plus manifest.json; on failure, partial outputs are
    removed and a nonzero status returned.
    """
    tracker = RunTracker(config.out)
    start = time.time()
    try:
        if config.kind == "sff":
            _run_sff(config, tracker)
        elif config.kind == "tmat-check":
            _run_tmat_check(config, tracker)
        elif config.kind == "ssep":
            _run_trajectories(config, tracker, "u1")
        elif config.kind == "east":
            _run_trajectories(config, tracker, "east")
        elif config.kind == "collapse":
            _run_collapse(config, tracker)
        elif config.kind == "dilated-demo":
            _run_dilated_demo(config, tracker)
        else:
            raise ValueError(f"unknown kind {config.kind!r}")
    except Exception as exc:
        tracker.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    tracker.manifest(config, time.time() - start)
    return 0


# ---------------------------------------------------------------------------
# figure-reproduction presets (acceptance-scale experiments)

def preset_config(name, seed, workers, out):
    if name == "u1-decay":
        params = {"L": 256, "gammas": [0.05, 0.1, 0.2], "t_max": 320,
                  "samples": 10000}
        return [ExperimentConfig("ssep", seed, workers, out, params)]
    if name == "east-collapse":
        gammas = [round(0.030 + 0.002 * k, 3) for k in range(9)]
        east = ExperimentConfig("east", seed, workers, out, {
            "L_values": [256, 512, 1024], "gammas": gammas, "t_factor": 2.0,
            "t_max": 0, "samples": 10000, "boundary": "periodic",
            "interleaving": "layer", "dump_absorption": False})
        grid = [round(0.026 + 0.0005 * k, 4) for k in range(49)]
        collapse = ExperimentConfig("collapse", seed, workers, out, {
            "inputs": [os.path.join(out, "east_density.csv")],
            "delta": 0.159, "nu_par": 1.73, "gamma_c_grid": grid,
            "mode": "fixed-ratio", "ratio": 2.0, "bins": 20,
            "fit_gamma": 0.038, "fit_window": [32, 512]})
        return [east, collapse]
    if name == "sff-generic":
        sff_cfg = ExperimentConfig("sff", seed, workers, out, {
            "variant": "postselected", "n_sites": 3, "q": 2, "t_max": 10,
            "realizations": 500, "blocks": "generic", "measured_sites": [0],
            "measurement_basis": "z"})
        trans = ExperimentConfig("sff", seed, workers, out, {
            "variant": "transition", "n_sites": 3, "q": 2, "t_max": 32,
            "realizations": 1, "blocks": "generic", "measured_sites": [],
            "measurement_basis": "z"})
        return [sff_cfg, trans]
    raise ValueError(f"unknown preset {name!r} (available: {', '.join(PRESETS)})")


def reproduce(name, seed, workers, out):
    status = 0
    for cfg in preset_config(name, seed, workers, out):
        status |= run(cfg)
    return status


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(sub):
    sub.add_argument("--config", required=False, help="path to a JSON config")
    sub.add_argument("--seed", type=int, default=None, help="64-bit master seed")
    sub.add_argument("--workers", type=int, default=None,
                     help=f"worker processes (or ${ENV_WORKERS})")
    sub.add_argument("--out", default=None, help="output directory")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="stinesim",
        description="hybrid-circuit experiment runner (data emission only)")
    subs = parser.add_subparsers(dest="command", required=True)
    for kind in ("sff", "tmat-check", "ssep", "east", "collapse", "dilated-demo"):
        _add_common(subs.add_parser(kind, help=f"run a {kind} experiment"))
    rep = subs.add_parser("reproduce", help="run a named preset end to end")
    rep.add_argument("preset", choices=PRESETS)
    _add_common(rep)
    args = parser.parse_args(argv)

    workers = args.workers
    if workers is None:
        workers = int(os.environ.get(ENV_WORKERS, "1"))

    if args.command == "reproduce":
        out = args.out or f"reproduce-{args.preset}"
        return reproduce(args.preset, args.seed or 0, workers, out)

    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        with open(args.config) as fh:
            config = parse_config(fh.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if config.kind != args.command:
        print(f"error: config kind {config.kind!r} does not match "
              f"subcommand {args.command!r}", file=sys.stderr)
        return 2
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None or ENV_WORKERS in os.environ:
        overrides["workers"] = workers
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
