"""Scenario execution: evolve, filter, band and phase-map runs written to hashed run directories."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bands import BandStructure, analytic_band_edge, band_edge, compute_band_structure, phase_map
from .config import ConfigError, ScenarioConfig
from .model import PairBasis, build_full_hamiltonian
from .observables import (
    bands_touch_at_pi,
    density_profile,
    detect_sudden_death,
    oscillation_period,
    pair_momentum,
    predict_lifetime,
    semiclassical_path,
    state_observer,
    zener_transfer_fraction,
)
from .propagate import Trajectory, evolve_driven, evolve_static
from .wavepacket import BandProjector, EdgeProximityWarning, PacketSpec, build_packet, lattice_bands, wrap_momentum

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["t", "x_c", "r_mean", "leakage", "norm", "lower", "upper"]
SURVIVAL_FIDELITY = 0.9


def fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return f"{x:.12g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _clean(obj):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.12g}")
    return obj


def write_summary(path, summary: dict):
    Path(path).write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")


def run_directory(config: ScenarioConfig, out) -> Path:
    return Path(out) / f"{config.name}-{config.digest()}"


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def sample_times(t_final: float, sample_dt: float) -> np.ndarray:
    n = int(round(t_final / sample_dt))
    return np.arange(n + 1) * sample_dt


# -- evolve -------------------------------------------------------------------


def _build_packet(spec, lattice, basis):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EdgeProximityWarning)
        psi = build_packet(spec, lattice, basis)
    edge = [str(w.message) for w in caught if issubclass(w.category, EdgeProximityWarning)]
    for msg in edge:
        log.warning("%s", msg)
    return psi, bool(edge)


def _band_summary(band: BandStructure, which: str) -> dict:
    km = band_edge(band, which) if band.completeness[which] == "incomplete" else None
    return {
        "completeness": dict(band.completeness),
        "k_m": km,
        "k_m_closed_form": analytic_band_edge(band.params),
        "bands_touch_at_pi": bands_touch_at_pi(band),
    }


def simulate_packet(config: ScenarioConfig, k0: float | None = None, target_time: float | None = None) -> dict:
    """Build the packet of ``config`` (optionally at another k0) and evolve it under the configured field."""
    params = config.model
    run = config.run
    spec = config.packet
    if k0 is not None:
        spec = PacketSpec(k0, spec.alpha, spec.n_a, spec.band)
    basis = PairBasis(params.n_sites)
    lattice = lattice_bands(params, run["r_max"])
    psi0, edge_warning = _build_packet(spec, lattice, basis)
    target = None
    if target_time is not None:
        h0 = build_full_hamiltonian(params, basis)
        target = evolve_static(h0, psi0, [target_time], method="chebyshev", max_states=1).final_state
    observer = state_observer(basis, BandProjector(lattice, basis), target)
    times = sample_times(run["t_final"], run["sample_dt"])
    traj = evolve_driven(
        params, config.field, psi0, times, run["dt"], observer=observer, certify=run["certify"]
    )
    return {"spec": spec, "traj": traj, "edge_warning": edge_warning, "basis": basis}


def _profiles(traj: Trajectory, basis: PairBasis) -> np.ndarray:
    return np.array([density_profile(s, basis) for s in traj.states])


def _write_trajectory(path, traj: Trajectory, extra: dict | None = None):
    extra = extra or {}
    cols = TRAJECTORY_COLUMNS[1:] + list(extra)
    data = {**traj.records, **extra}
    rows = ([t] + [data[c][i] for c in cols] for i, t in enumerate(traj.times))
    write_csv(path, ["t"] + cols, rows)


def _write_profiles(path, traj: Trajectory, basis: PairBasis):
    prof = _profiles(traj, basis)
    header = ["t"] + [f"n_{j}" for j in range(1, basis.n_sites + 1)]
    write_csv(path, header, ([t, *row] for t, row in zip(traj.state_times, prof)))
    return prof


def analyze_evolution(config: ScenarioConfig, traj: Trajectory, band: BandStructure) -> tuple[dict, object]:
    """Summary metrics of a single-packet run and its semiclassical path."""
    spec = config.packet
    field = config.field
    times = traj.times
    xc = traj["x_c"]
    r = traj["r_mean"]
    summary = {
        "r_mean_initial": r[0],
        "r_mean_max": r.max(),
        "r_mean_final": r[-1],
        "leakage_max": traj["leakage"].max(),
        "leakage_final": traj["leakage"][-1],
        "x_c_initial": xc[0],
        "norm_drift_max": np.max(np.abs(traj.norms - 1.0)),
        "certificate": traj.info.get("certificate"),
    }
    summary.update(_band_summary(band, spec.band))
    sc = semiclassical_path(band, spec.k0, xc[0], field, times, spec.band)
    if not field.is_static or field.f0 == 0:
        return summary, sc

    f0 = field.f0
    km = summary["k_m"]
    incomplete = band.completeness[spec.band] != "complete"
    tau_pred = predict_lifetime(km, spec.k0, f0) if incomplete else math.inf
    tau_obs = detect_sudden_death(traj)
    summary["tau_predicted"] = tau_pred
    summary["tau_observed"] = tau_obs
    summary["death"] = tau_obs is not None

    merged = bands_touch_at_pi(band)
    expected = (2 * math.pi if merged else math.pi) / abs(f0)
    summary["bo_period_expected"] = expected
    if tau_obs is None:
        try:
            summary["bo_period"] = oscillation_period(times, xc)
        except ValueError as exc:
            log.info("no BO period: %s", exc)
            summary["bo_period"] = None
        in_period = sc.times <= expected + 1e-9
        n = int(in_period.sum())
        summary["semiclassical_max_deviation"] = float(np.max(np.abs(sc.x_c[:n] - xc[:n]))) if n else None
    if band.completeness["lower"] == "complete" and band.completeness["upper"] == "complete" and not merged:
        kc = wrap_momentum(pair_momentum(spec.k0, field, times))
        summary["zener_fraction"] = zener_transfer_fraction(times, traj["upper"], kc)
        summary["upper_weight_max"] = traj["upper"].max()
    return summary, sc


def _run_evolve(config: ScenarioConfig, d: Path) -> dict:
    params = config.model
    out = config.outputs
    band = compute_band_structure(params, n_k=out["n_k"], r_max=config.run["r_max"])
    res = simulate_packet(config)
    traj, basis = res["traj"], res["basis"]
    summary, sc = analyze_evolution(config, traj, band)
    summary["edge_warning"] = res["edge_warning"]

    n = len(sc.times)
    pad = np.full(len(traj.times) - n, np.nan)
    extra = {
        "k_c_semiclassical": np.concatenate([sc.k_c, pad]),
        "x_c_semiclassical": np.concatenate([sc.x_c, pad]),
    }
    _write_trajectory(d / "trajectory.csv", traj, extra)
    if out["band"]:
        band.to_csv(d / "band.csv")
    prof = _write_profiles(d / "profiles.csv", traj, basis) if out["profiles"] else None
    if out["plots"]:
        from . import plots

        if out["band"]:
            plots.plot_band(band, d / "band.png")
        plots.plot_trajectory(traj, d / "trajectory.png", sc, title=config.name)
        if prof is not None:
            plots.plot_profiles(traj.state_times, prof, d / "profiles.png", title=config.name)
    return summary


# -- filter -------------------------------------------------------------------


def _slope(t, x, lo, hi):
    m = (t >= lo) & (t <= hi)
    if m.sum() < 2:
        return None
    return float(np.polyfit(t[m], x[m], 1)[0])


def _filter_job(args):
    config, k0 = args
    return simulate_packet(config, k0=k0, target_time=config.run["t_target"])


def _run_filter(config: ScenarioConfig, d: Path, threads: int = 1) -> dict:
    spec = config.packet
    field = config.field
    k0 = abs(spec.k0)
    jobs = [(config, k0), (config, -k0)]
    results = dict(zip(("plus", "minus"), _map(_filter_job, jobs, threads)))
    start, end = field.shift - field.period / 2, field.shift + field.period / 2
    band = compute_band_structure(config.model, n_k=config.outputs["n_k"], r_max=config.run["r_max"])

    summary = {"pulse_start": start, "pulse_end": end, "t_target": config.run["t_target"]}
    summary.update(_band_summary(band, spec.band))
    for label, res in results.items():
        traj = res["traj"]
        t = traj.times
        f = traj["overlap"]
        i = int(np.argmax(f))
        v_before = _slope(t, traj["x_c"], 0.0, start) if start > 0 else None
        v_after = _slope(t, traj["x_c"], end + 5.0, end + 25.0)
        r = traj["r_mean"]
        summary[label] = {
            "k0": res["spec"].k0,
            "fidelity": f[i],
            "fidelity_time": t[i],
            "leakage_final": traj["leakage"][-1],
            "r_mean_initial": r[0],
            "r_mean_final": r[-1],
            "r_mean_ratio": r[-1] / r[0],
            "velocity_before": v_before,
            "velocity_after": v_after,
            "velocity_reversed": (
                v_before is not None and v_after is not None and np.sign(v_before) != np.sign(v_after)
            ),
            "survived": bool(f[i] > SURVIVAL_FIDELITY),
            "edge_warning": res["edge_warning"],
            "certificate": traj.info.get("certificate"),
        }
        _write_trajectory(d / f"trajectory_{label}.csv", traj, {"fidelity": f})
        if config.outputs["profiles"]:
            res["profiles"] = _write_profiles(d / f"profiles_{label}.csv", traj, res["basis"])
    write_csv(
        d / "fidelity.csv",
        ["t", "f_plus", "f_minus"],
        zip(results["plus"]["traj"].times, results["plus"]["traj"]["overlap"], results["minus"]["traj"]["overlap"]),
    )
    if config.outputs["band"]:
        band.to_csv(d / "band.csv")
    if config.outputs["plots"]:
        from . import plots

        plots.plot_filter(
            {f"k0={r['spec'].k0 / np.pi:+.2f}pi": r for r in results.values()}, d / "filter.png", title=config.name
        )
        for label, res in results.items():
            if "profiles" in res:
                plots.plot_profiles(
                    res["traj"].state_times, res["profiles"], d / f"profiles_{label}.png", title=f"{config.name} {label}"
                )
    return summary


# -- band / phase map -------------------------------------------------------------


def _run_band(config: ScenarioConfig, d: Path) -> dict:
    params = config.model
    band = compute_band_structure(params, n_k=config.outputs["n_k"])
    band.to_csv(d / "band.csv")
    if config.outputs["plots"]:
        from . import plots

        plots.plot_band(band, d / "band.png")
    return {"u": params.u, "v": params.v, **_band_summary(band, "lower")}


def _run_phase_map(config: ScenarioConfig, d: Path) -> dict:
    g = config.data["grid"]
    pm = phase_map(np.linspace(g["u_min"], g["u_max"], g["n_u"]), np.linspace(g["v_min"], g["v_max"], g["n_v"]), g["k"])
    pm.to_csv(d / "phase_map.csv")
    mismatch = pm.complete != pm.curve_rule()
    if config.outputs["plots"]:
        from . import plots

        plots.plot_phase_map(pm, d / "phase_map.png")
    return {
        "cells": int(pm.n_bound.size),
        "complete_cells": int(pm.complete.sum()),
        "curve_rule_mismatches": int(mismatch.sum()),
    }


RUNNERS = {"evolve": _run_evolve, "filter": _run_filter, "band": _run_band, "phase-map": _run_phase_map}


def run_scenario(config: ScenarioConfig, out="runs", threads: int = 1) -> Path:
    """Execute a scenario and write its files; returns the run directory."""
    d = run_directory(config, out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(json.dumps(config.data, indent=2, sort_keys=True) + "\n")
    log.info("running %s -> %s", config.name, d)
    runner = RUNNERS[config.kind]
    summary = runner(config, d, threads) if config.kind == "filter" else runner(config, d)
    summary = {"name": config.name, "kind": config.kind, **summary}
    write_summary(d / "summary.json", summary)
    return d


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (bool, int, float, str, type(None))):
            out[key] = v
    return out


def _sweep_job(args):
    config, out = args
    return run_scenario(config, out)


def sweep(base: ScenarioConfig, axis: str, values, out="runs", threads: int = 1) -> tuple[list[Path], Path]:
    """One run per value of ``axis``; returns the run directories and the combined summary CSV."""
    values = list(values)
    base.check_axis(axis)
    configs = [base.replace(axis, v) for v in values]
    tag = json.dumps({"base": base.data, "axis": axis, "values": values}, sort_keys=True)
    sdir = Path(out) / f"sweep-{base.name}-{axis}-{hashlib.sha256(tag.encode()).hexdigest()[:10]}"
    sdir.mkdir(parents=True, exist_ok=True)
    dirs = _map(_sweep_job, [(c, sdir) for c in configs], threads)
    rows = []
    for v, d in zip(values, dirs):
        summary = json.loads((d / "summary.json").read_text())
        rows.append({"value": v, "run_dir": d.name, **_flatten(summary)})
    keys = ["value", "run_dir"] + sorted({k for row in rows for k in row} - {"value", "run_dir"})
    with open(sdir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([_csv_cell(row.get(k)) for k in keys])
    return dirs, sdir / "summary.csv"


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, float)):
        return fmt(v)
    return str(v)


__all__ = ["ConfigError", "run_scenario", "sweep", "simulate_packet", "analyze_evolution", "sample_times"]
