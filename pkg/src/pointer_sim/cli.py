"""Experiment runner.

    pointer-sim run CONFIG.json [--set key=value ...] [--threads N] [--out DIR]
    pointer-sim validate CONFIG.json [--set key=value ...]

Exit codes: 0 ok, 2 configuration error, 3 numeric-tolerance failure,
4 resource limit.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .analysis import (find_pointer_states, fluctuation_scaling, interference_filter,
                       random_local_probe, run_diagnostics, track_pointer_states,
                       zurek_decoherence_factor)
from .branch import (MAX_ENUMERATE_M, assemble_diagonal_approx, make_ensemble, phase_records,
                     phase_records_csv, restricted_state)
from .errors import ConfigError, PointerSimError, ResourceLimitError, ToleranceError
from .exact import EvolutionConfig, StateVector, evolve_exact
from .model import MAX_DENSE_M, MAX_MATVEC_M, ModelParams, build_operators
from .wavepacket import LatticeConfig, decomposition_csv, energy_decomposition

log = logging.getLogger("pointer_sim")

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE, EXIT_RESOURCE = 0, 2, 3, 4
SCENARIOS = ("zurek_limit", "weak_coupling_energy", "decoherence_factor", "scaling",
             "pointer_landscape", "interference", "wavepacket")


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int | None
    output_dir: str
    model: dict | None = None
    lattice: dict | None = None
    schedule: list[float] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(stream,)))


def _schedule(doc) -> list[float]:
    if doc is None:
        return []
    if isinstance(doc, list):
        times = [float(t) for t in doc]
    elif "times" in doc:
        times = [float(t) for t in doc["times"]]
    else:
        n = int(doc.get("n", 101))
        t_max = float(doc["t_max"])
        if n < 2 or not t_max > 0:
            raise ConfigError("schedule needs n >= 2 and t_max > 0")
        times = np.linspace(float(doc.get("t_min", 0.0)), t_max, n).tolist()
    if not times or any(not math.isfinite(t) for t in times):
        raise ConfigError("schedule must contain finite times")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("schedule must be strictly increasing")
    if times[0] < 0:
        raise ConfigError("schedule times must be non-negative")
    return times


def _set_path(doc: dict, key: str, value: str):
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not an object")
    node[parts[-1]] = parsed


def load_config(path: str | Path, overrides: list[str] = (),
                output_dir: str | None = None) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        _set_path(doc, k.strip(), v)
    return parse_config(doc, output_dir)


def parse_config(doc: dict, output_dir: str | None = None) -> ExperimentConfig:
    scenario = doc.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)
                             or not 0 <= seed < 2 ** 64):
        raise ConfigError("seed must be an integer in [0, 2**64)")
    if seed is None and scenario != "wavepacket":
        raise ConfigError(f"scenario {scenario} uses randomness and needs a seed")
    cfg = ExperimentConfig(
        scenario=scenario, seed=seed,
        output_dir=output_dir or doc.get("output_dir") or f"results/{scenario}",
        model=doc.get("model"), lattice=doc.get("lattice"),
        schedule=_schedule(doc.get("schedule")),
        options=dict(doc.get("options") or {}), raw=copy.deepcopy(doc),
    )
    _validate(cfg)
    return cfg


def resolve_model(cfg: ExperimentConfig) -> ModelParams:
    m = dict(cfg.model or {})
    if "M" not in m:
        raise ConfigError("model block needs M")
    M = m["M"]
    if not isinstance(M, int) or isinstance(M, bool) or M < 1:
        raise ConfigError("model.M must be a positive integer")
    rng = cfg.rng(1)
    if "omega" not in m:
        m["omega"] = rng.uniform(*m.get("omega_range", (0.0, 1.0)), size=M).tolist()
    if "v" not in m:
        m["v"] = rng.uniform(*m.get("v_range", (0.0, 1.0)), size=4 * M).tolist()
    m.setdefault("E", 0.0)
    return ModelParams.from_dict(m)


def _validate(cfg: ExperimentConfig):
    if cfg.scenario == "wavepacket":
        lat = cfg.lattice or {}
        LatticeConfig.from_mode(int(lat.get("n", 64)), int(lat.get("mode", 0)),
                                float(lat.get("d", 1.0)), float(lat.get("mass", 1.0)))
        if not cfg.schedule:
            raise ConfigError("wavepacket needs a schedule")
        return
    if cfg.scenario == "scaling":
        M_list = cfg.options.get("M_list", [8 * 2 ** k for k in range(8)])
        if any(b <= a for a, b in zip(M_list, M_list[1:])) or min(M_list) < 8:
            raise ConfigError("options.M_list must be strictly increasing with M >= 8")
        if int(cfg.options.get("samples", 500)) < 100:
            raise ConfigError("options.samples must be >= 100")
        return
    params = resolve_model(cfg)
    if cfg.scenario != "interference" and not cfg.schedule:
        raise ConfigError(f"scenario {cfg.scenario} needs a schedule")
    method = cfg.options.get("method", "eigendecomposition")
    EvolutionConfig(method=method)
    if cfg.scenario == "pointer_landscape":
        if params.M > MAX_ENUMERATE_M and "n_samples" not in cfg.options:
            raise ResourceLimitError(f"M={params.M} needs options.n_samples above M="
                                     f"{MAX_ENUMERATE_M}")
        return
    limit = MAX_DENSE_M if (method == "eigendecomposition" or cfg.scenario == "interference") \
        else MAX_MATVEC_M
    if params.M > limit:
        raise ResourceLimitError(f"M={params.M} exceeds limit {limit} for {cfg.scenario} "
                                 f"with method {method}")
    if cfg.scenario in ("weak_coupling_energy", "decoherence_factor") and cfg.schedule[0] != 0:
        raise ConfigError("diagnostic schedules must start at t=0")


# -- scenarios -------------------------------------------------------------------

@dataclass
class Outcome:
    files: dict[str, str]
    metrics: dict
    failure: str | None = None


def _evo_cfg(cfg: ExperimentConfig) -> EvolutionConfig:
    o = cfg.options
    return EvolutionConfig(method=o.get("method", "eigendecomposition"),
                           dt=float(o.get("dt", 0.05)),
                           tolerance=float(o.get("tolerance", 1e-8)))


def _scenario_zurek(cfg: ExperimentConfig, threads: int) -> Outcome:
    params = resolve_model(cfg).zurek_limit()
    ens = make_ensemble(params, cfg.rng(2), coefficients=cfg.options.get("coefficients", "pointer"))
    h = build_operators(params)["h_total"]
    psi0 = assemble_diagonal_approx(ens, 0.0)
    rows, fids = ["t,fidelity,norm_exact,norm_approx"], []
    for t in cfg.schedule:
        exact = evolve_exact(psi0, h, t)
        approx = assemble_diagonal_approx(ens, t)
        f = exact.fidelity(approx)
        fids.append(f)
        rows.append(f"{t!r},{f!r},{exact.norm!r},{approx.norm!r}")
    metrics = {"min_fidelity": min(fids), "max_infidelity": 1 - min(fids),
               "coefficients": cfg.options.get("coefficients", "pointer"), "M": params.M}
    tol = float(cfg.options.get("fidelity_tolerance", 1e-10))
    failure = None if 1 - min(fids) <= tol else \
        f"fidelity deficit {1 - min(fids):.3e} exceeds {tol:g}"
    return Outcome({"fidelity.csv": "\n".join(rows) + "\n",
                    "ensemble.json": ens.to_json()}, metrics, failure)


def _scenario_weak(cfg: ExperimentConfig, threads: int) -> Outcome:
    base = resolve_model(cfg)
    scales = [float(s) for s in cfg.options.get("scales", [0.04, 0.02, 0.01])]
    ens = make_ensemble(base, cfg.rng(2), coefficients=cfg.options.get("coefficients", "random"))
    psi0 = assemble_diagonal_approx(ens, 0.0)
    files, drifts = {}, []
    for s in scales:
        series = run_diagnostics(psi0, base.replace(coupling_scale=s), cfg.schedule,
                                 _evo_cfg(cfg), threads)
        files[f"diagnostics_scale_{s!r}.csv"] = series.to_csv()
        drifts.append(series.h0_drift())
    order = np.argsort(scales)[::-1]
    monotone = all(drifts[b] < drifts[a] for a, b in zip(order, order[1:]))
    metrics = {"scales": scales, "h0_drift": drifts, "monotone": monotone}
    files["summary.json"] = json.dumps(metrics, indent=2)
    return Outcome(files, metrics, None if monotone else "h0 drift is not monotone in scale")


def _scenario_decoherence(cfg: ExperimentConfig, threads: int) -> Outcome:
    params = resolve_model(cfg)
    rng = cfg.rng(2)
    if cfg.options.get("initial", "plus") == "random":
        system = rng.normal(size=2) + 1j * rng.normal(size=2)
        sites = rng.normal(size=(params.M, 2)) + 1j * rng.normal(size=(params.M, 2))
    else:
        system = np.array([1, 1]) / math.sqrt(2)
        sites = np.tile(np.array([1, 1]) / math.sqrt(2), (params.M, 1))
    psi0 = StateVector.product(system, sites)
    series = run_diagnostics(psi0, params, cfg.schedule, _evo_cfg(cfg), threads)
    level = float(cfg.options.get("threshold", 0.1))
    metrics = {"first_time_below": series.first_time_below(level), "threshold": level,
               "min_abs_r": float(np.min(np.abs(series.decoherence_factor))),
               "energy_drift": series.energy_drift()}
    if params.E == 0 and not np.any(params.omega):
        closed = zurek_decoherence_factor(params, system, sites, cfg.schedule)
        metrics["closed_form_max_dev"] = float(np.max(np.abs(
            closed - np.array(series.decoherence_factor))))
    return Outcome({"diagnostics.csv": series.to_csv(),
                    "summary.json": json.dumps(metrics, indent=2)}, metrics)


def _scenario_scaling(cfg: ExperimentConfig, threads: int) -> Outcome:
    o = cfg.options
    report = fluctuation_scaling(o.get("M_list", [8 * 2 ** k for k in range(8)]),
                                 t=float(o.get("t", 1.0)),
                                 coupling_law=o.get("coupling_law", "uniform"),
                                 samples=int(o.get("samples", 500)), seed=cfg.seed,
                                 threads=threads)
    metrics = {"diag_slope": report.diag_slope, "offdiag_slope": report.offdiag_slope}
    return Outcome({"scaling.json": report.to_json()}, metrics)


def _scenario_pointer(cfg: ExperimentConfig, threads: int) -> Outcome:
    params = resolve_model(cfg)
    o = cfg.options
    ens = make_ensemble(params, cfg.rng(2), coefficients=o.get("coefficients", "random"),
                        n_samples=o.get("n_samples"))
    track = track_pointer_states(ens, cfg.schedule, tol=float(o.get("tol", 0.0)))
    if params.M <= MAX_DENSE_M:
        for entry in track:
            t = entry["t"]
            keep = find_pointer_states(ens, t).nu_c
            if keep:
                full = assemble_diagonal_approx(ens, t)
                entry["restricted_overlap"] = full.fidelity(restricted_state(ens, t, keep))
    files = {"pointers.json": json.dumps(track, indent=2),
             "phases.csv": phase_records_csv(phase_records(ens, cfg.schedule), params.M)}
    metrics = {"n_times": len(track),
               "n_pointers": [len(e["pointers"]) for e in track], "sampled": ens.sampled}
    return Outcome(files, metrics)


def _scenario_interference(cfg: ExperimentConfig, threads: int) -> Outcome:
    params = resolve_model(cfg)
    o = cfg.options
    t = float(o.get("t", cfg.schedule[-1] if cfg.schedule else 1.0))
    ens = make_ensemble(params, cfg.rng(2), coefficients=o.get("coefficients", "random"))
    probe = random_local_probe(params, cfg.rng(3), o.get("site"))
    rep = interference_filter(ens, t, probe, rng=cfg.rng(4),
                              n_scrambles=int(o.get("n_scrambles", 16)))
    metrics = rep.to_dict()
    return Outcome({"interference.json": json.dumps(metrics, indent=2)}, metrics)


def _scenario_wavepacket(cfg: ExperimentConfig, threads: int) -> Outcome:
    lat = cfg.lattice or {}
    lc = LatticeConfig.from_mode(int(lat.get("n", 64)), int(lat.get("mode", 0)),
                                 float(lat.get("d", 1.0)), float(lat.get("mass", 1.0)))
    rows = [energy_decomposition(lc, t) for t in cfg.schedule]
    worst = max(abs(r.total - r.e0) for r in rows)
    metrics = {"e0": lc.band_energy(), "ratio": rows[0].ratio if lc.band_energy() else None,
               "max_total_error": worst}
    failure = None if worst <= 1e-10 else f"energy decomposition error {worst:.3e}"
    return Outcome({"energy.csv": decomposition_csv(rows)}, metrics, failure)


RUNNERS: dict[str, Callable[[ExperimentConfig, int], Outcome]] = {
    "zurek_limit": _scenario_zurek,
    "weak_coupling_energy": _scenario_weak,
    "decoherence_factor": _scenario_decoherence,
    "scaling": _scenario_scaling,
    "pointer_landscape": _scenario_pointer,
    "interference": _scenario_interference,
    "wavepacket": _scenario_wavepacket,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def run(cfg: ExperimentConfig, threads: int = 1) -> int:
    """Run one scenario, write its files and a manifest; return the exit status."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    manifest = {"scenario": cfg.scenario, "version": __version__, "config": cfg.raw,
                "threads": threads}
    status = EXIT_OK
    try:
        outcome = RUNNERS[cfg.scenario](cfg, threads)
        for name, text in sorted(outcome.files.items()):
            (out / name).write_text(text)
        manifest["outputs"] = sorted(outcome.files)
        manifest["metrics"] = _jsonable(outcome.metrics)
        if outcome.failure:
            manifest["error"] = outcome.failure
            status = EXIT_TOLERANCE
    except ToleranceError as exc:
        manifest["error"] = str(exc)
        status = EXIT_TOLERANCE
    except ResourceLimitError as exc:
        manifest["error"] = str(exc)
        status = EXIT_RESOURCE
    except PointerSimError as exc:
        manifest["error"] = str(exc)
        status = EXIT_CONFIG
    finally:
        manifest["status"] = status
        manifest["wall_time_s"] = time.perf_counter() - start
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pointer-sim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config field (dotted path)")
        if name == "run":
            p.add_argument("--threads", type=int, default=1)
            p.add_argument("--out", default=None, help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides, getattr(args, "out", None))
    except ResourceLimitError as exc:
        print(f"pointer-sim: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"pointer-sim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {cfg.scenario}")
        return EXIT_OK
    status = run(cfg, max(1, args.threads))
    if status:
        print(f"pointer-sim: scenario {cfg.scenario} failed (exit {status}); "
              f"see {cfg.output_dir}/manifest.json", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
