"""Config-driven experiment runner.

    srengine run CONFIG.ini [--out DIR] [--seed N] [--threads N]
    srengine selfcheck [--quick]
    srengine version

Configs are INI files with one section per module.  Frequencies whose key
ends in ``_Hz`` are ordinary frequencies (the value divided by 2 pi); they
are converted to rad/s internally.  Every default is echoed in the JSON
summary so a run is fully described by its output.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__, checks, constants, dynamics, engine, fock, trajectory
from .errors import ConfigError, EngineError, MasingThresholdError
from .reservoir import (
    AtomEnsembleSpec,
    PhaseMode,
    atom_density_matrix,
    calibrate_theta,
    derive,
    experiment_params,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_MASING = 4

EXPERIMENTS = (
    "steady_state", "cycle", "pv_diagram", "scaling", "temperatures",
    "efficiency_curve", "g2", "trajectory_validation",
)
TWO_PI = 2 * math.pi


def _float_list(text: str) -> list:
    return [float(x) for x in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


# section -> key -> (parser, default); a default of ... means required
SCHEMA = {
    "run": {
        "experiment": (str, ...),
        "output_dir": (str, "out"),
        "seed": (int, 0),
    },
    "cavity": {
        "g_tau": (float, 0.17),
        "kappa_Hz": (float, constants.KAPPA / TWO_PI),
        "kappa_tau": (float, constants.KAPPA_TAU),
        "N_bar": (float, 0.8),
        "delta_ac_Hz": (float, constants.DELTA_1 / TWO_PI),
        "wavelength_m": (float, constants.WAVELENGTH),
        "drive_sinc_half": (_bool, False),
        "dim": (int, fock.DEFAULT_DIM),
    },
    "atoms": {
        "theta": (_optional_float, None),
        "T_R": (_optional_float, 8000.0),
        "phase_mode": (str, "coherent"),
    },
    "schedule": {
        "delta_1_Hz": (float, constants.DELTA_1 / TWO_PI),
        "delta_2_Hz": (float, constants.DELTA_2 / TWO_PI),
        "n_grid": (int, 101),
        "stroke_durations_s": (_float_list, [10e-6] * 4),
        "mode": (str, "quasi_static"),
        "superradiant": (_bool, True),
    },
    "sweep": {
        "N_bar_values": (_float_list, [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5]),
        "T_R_values": (_float_list, []),
        "reference_N_bar": (_optional_float, None),
    },
    "g2": {
        "tau_max_s": (float, 5e-6),
        "n_tau": (int, 101),
        "ratio": (_optional_float, None),
    },
    "trajectory": {
        "t_final_s": (float, 12e-6),
        "dim": (int, 18),
        "n_trajectories": (int, 1000),
        "record_emissions": (_bool, False),
        "n_samples": (int, 101),
        "bin_width_s": (float, 0.1e-6),
        "max_lag_s": (float, 2e-6),
    },
}


def load_config(path) -> dict:
    """Parse and validate a config file; returns {section: {key: value}}."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return validate_config({s: dict(parser[s]) for s in parser.sections()})


def validate_config(raw: dict) -> dict:
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    out = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        extra = set(given) - set(keys)
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(extra)}")
        out[section] = {}
        for key, (parse, default) in keys.items():
            if key in given:
                try:
                    out[section][key] = parse(given[key])
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
            elif default is ...:
                raise ConfigError(f"missing required key [{section}] {key}")
            else:
                out[section][key] = default
    _check_values(out)
    return out


def _check_values(cfg: dict) -> None:
    run, cav, atoms, sch = cfg["run"], cfg["cavity"], cfg["atoms"], cfg["schedule"]
    if run["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    positive = [("cavity", "g_tau"), ("cavity", "kappa_Hz"), ("cavity", "kappa_tau"),
                ("cavity", "wavelength_m"), ("g2", "tau_max_s"), ("trajectory", "t_final_s"),
                ("trajectory", "bin_width_s"), ("trajectory", "max_lag_s")]
    for section, key in positive:
        if not cfg[section][key] > 0:
            raise ConfigError(f"[{section}] {key} must be positive")
    if cav["N_bar"] < 0:
        raise ConfigError("[cavity] N_bar must be >= 0")
    if cav["dim"] < 2 or cfg["trajectory"]["dim"] < 2:
        raise ConfigError("dim must be >= 2")
    if atoms["phase_mode"] not in ("coherent", "randomized"):
        raise ConfigError("[atoms] phase_mode must be coherent or randomized")
    n_sources = (atoms["theta"] is not None) + (atoms["T_R"] is not None) + bool(cfg["sweep"]["T_R_values"])
    ratio_mode = run["experiment"] == "g2" and cfg["g2"]["ratio"] is not None
    if n_sources != 1 and not ratio_mode:
        raise ConfigError(
            "set exactly one of [atoms] theta, [atoms] T_R and [sweep] T_R_values "
            "(use 'none' to clear the T_R default)"
        )
    if atoms["theta"] is not None and not 0 <= atoms["theta"] <= math.pi:
        raise ConfigError("[atoms] theta must lie in [0, pi]")
    if atoms["T_R"] is not None and atoms["T_R"] <= 0:
        raise ConfigError("[atoms] T_R must be positive")
    if sch["mode"] not in ("quasi_static", "dynamic"):
        raise ConfigError("[schedule] mode must be quasi_static or dynamic")
    if not sch["delta_2_Hz"] > sch["delta_1_Hz"]:
        raise ConfigError("[schedule] delta_2_Hz must exceed delta_1_Hz")
    if sch["n_grid"] < 2:
        raise ConfigError("[schedule] n_grid must be >= 2")
    if len(sch["stroke_durations_s"]) != 4 or min(sch["stroke_durations_s"]) <= 0:
        raise ConfigError("[schedule] stroke_durations_s needs four positive values")
    if cfg["g2"]["n_tau"] < 1 or cfg["trajectory"]["n_trajectories"] < 1:
        raise ConfigError("counts must be >= 1")
    if run["experiment"] == "scaling" and len(cfg["sweep"]["N_bar_values"]) < 3:
        raise ConfigError("[sweep] scaling needs at least three N_bar_values")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# --- building blocks -------------------------------------------------------

def _params(cfg, N_bar=None, delta_ac_Hz=None):
    cav = cfg["cavity"]
    omega_a = TWO_PI * constants.PHYS.c / cav["wavelength_m"]
    return experiment_params(
        cav["g_tau"],
        cav["N_bar"] if N_bar is None else N_bar,
        delta_ac=TWO_PI * (cav["delta_ac_Hz"] if delta_ac_Hz is None else delta_ac_Hz),
        kappa=TWO_PI * cav["kappa_Hz"],
        kappa_tau=cav["kappa_tau"],
        omega_a=omega_a,
        drive_sinc_half=cav["drive_sinc_half"],
    )


def _schedule(cfg, params) -> engine.CycleSchedule:
    sch = cfg["schedule"]
    return engine.CycleSchedule(
        TWO_PI * sch["delta_1_Hz"], TWO_PI * sch["delta_2_Hz"], params.omega_a,
        n_grid=sch["n_grid"], stroke_durations=tuple(sch["stroke_durations_s"]),
    )


def _theta(cfg, params, T_R=None):
    if T_R is None and cfg["atoms"]["theta"] is not None:
        return cfg["atoms"]["theta"]
    return calibrate_theta(params, cfg["atoms"]["T_R"] if T_R is None else T_R)


def _spec(cfg, theta):
    mode = PhaseMode(cfg["atoms"]["phase_mode"])
    return AtomEnsembleSpec(theta, mode, 0.0 if mode is PhaseMode.COHERENT else 1.0)


def _cycle_params(cfg, N_bar=None):
    """Cycle experiments calibrate at the stroke-A detuning."""
    return _params(cfg, N_bar=N_bar, delta_ac_Hz=cfg["schedule"]["delta_1_Hz"])


def _temperatures(cfg):
    values = cfg["sweep"]["T_R_values"]
    if values:
        return values
    if cfg["atoms"]["T_R"] is None:
        return [None]
    return [cfg["atoms"]["T_R"]]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def ledger_dict(led: engine.CycleLedger) -> dict:
    d = asdict(led)
    d.pop("pv_points")
    d["closure_residuals"] = led.closure_residuals()
    return d


# --- experiments -----------------------------------------------------------

def exp_steady_state(cfg, ctx):
    params = _params(cfg)
    theta = _theta(cfg, params)
    rho = atom_density_matrix(_spec(cfg, theta))
    res = derive(params, rho)
    dim = cfg["cavity"]["dim"]
    gen = dynamics.build_generator(params, rho, dim)
    numeric = dynamics.steady_state_numeric(gen)
    analytic = fock.displaced_thermal_state(res.alpha, res.n_th, dim)
    n_mean, g2_zero = fock.photon_statistics(numeric)
    rows = [(n, p, q) for n, (p, q) in enumerate(zip(numeric.populations, analytic.populations))]
    ctx.write_csv("steady_state.csv", ("n", "p_numeric", "p_analytic"), rows)
    return {
        "theta": theta,
        "reservoir": asdict(res) | {"alpha": res.alpha, "n_sr": res.n_sr},
        "n_mean": n_mean,
        "g2_zero": g2_zero,
        "g2_zero_closed_form": fock.g2_displaced_thermal(abs(res.alpha) ** 2, res.n_th),
        "trace_distance_numeric_analytic": fock.trace_distance(numeric, analytic),
        "truncation_safe": numeric.truncation_safe,
    }


def _run_cycle(cfg, params, theta, superradiant=None):
    sch = cfg["schedule"]
    return engine.run_cycle(
        params, _schedule(cfg, params), theta, mode=sch["mode"],
        superradiant=sch["superradiant"] if superradiant is None else superradiant,
        dim=cfg["cavity"]["dim"],
    )


def exp_cycle(cfg, ctx):
    params = _cycle_params(cfg)
    theta = _theta(cfg, params)
    led = _run_cycle(cfg, params, theta)
    rows = [(label, s.W, s.Q, s.dS, s.dErgotropy) for label, s in led.strokes.items()]
    ctx.write_csv("cycle_strokes.csv", ("stroke", "W_J", "Q_J", "dS_kB", "dErgotropy_J"), rows)
    erg = engine.ergotropy_ledger(led, engine.cycle_atom_states(theta, cfg["schedule"]["superradiant"]))
    return {"theta": theta, "ledger": ledger_dict(led), "ergotropy": erg}


def exp_pv_diagram(cfg, ctx):
    params = _cycle_params(cfg)
    out = {}
    for T_R in _temperatures(cfg):
        theta = _theta(cfg, params, T_R)
        tag = f"T{T_R:g}" if T_R is not None else f"theta{theta:.6g}"
        out[tag] = {"theta": theta}
        for variant, superradiant in (("superradiant", True), ("thermal", False)):
            led = _run_cycle(cfg, params, theta, superradiant)
            rows = [(det / TWO_PI, n, label) for det, n, label in led.pv_points]
            ctx.write_csv(f"pv_{tag}_{variant}.csv", ("detuning_Hz", "photon_number", "stroke_label"), rows)
            out[tag][variant] = {"W_out_J": led.W_out, "n_th": led.n_th, "n_sr": led.n_sr, "eta": led.eta}
    return out


def _sweep_theta(cfg, T_R):
    """theta for a sweep: calibrated at the reference N_bar, then held fixed."""
    ref = cfg["sweep"]["reference_N_bar"] or cfg["cavity"]["N_bar"]
    params = _cycle_params(cfg, N_bar=ref)
    return params, _theta(cfg, params, T_R)


def exp_scaling(cfg, ctx):
    out = {}
    for T_R in _temperatures(cfg):
        params, theta = _sweep_theta(cfg, T_R)
        ns, works, slope = engine.scaling_sweep(params, theta, cfg["sweep"]["N_bar_values"], _schedule(cfg, params))
        tag = f"T{T_R:g}" if T_R is not None else "theta"
        ctx.write_csv(f"scaling_{tag}.csv", ("N_bar", "W_out_J"), zip(ns, works))
        out[tag] = {"theta": theta, "slope": slope}
    return out


def exp_temperatures(cfg, ctx):
    out = {}
    for T_R in _temperatures(cfg):
        params, theta = _sweep_theta(cfg, T_R)
        rows = engine.temperature_sweep(params, theta, cfg["sweep"]["N_bar_values"], _schedule(cfg, params))
        tag = f"T{T_R:g}" if T_R is not None else "theta"
        ctx.write_csv(f"temperatures_{tag}.csv", ("N_bar", "T_c_sr_K", "T_c_th_K", "T_R_K"), rows)
        out[tag] = {"theta": theta, "ratio_T_c": [r[1] / r[2] for r in rows]}
    return out


def exp_efficiency_curve(cfg, ctx):
    out = {}
    for T_R in _temperatures(cfg):
        params, theta = _sweep_theta(cfg, T_R)
        rows = engine.efficiency_sweep(params, theta, cfg["sweep"]["N_bar_values"], _schedule(cfg, params))
        tag = f"T{T_R:g}" if T_R is not None else "theta"
        ctx.write_csv(f"efficiency_{tag}.csv", ("N_bar", "eta"), rows)
        out[tag] = {"theta": theta, "eta": [r[1] for r in rows]}
    return out


def exp_g2(cfg, ctx):
    """Regression g2 of the Lindblad model and of the exact micromaser generator.

    With ``[g2] ratio`` set, N_bar is tuned at theta = pi/2 so that
    |alpha|^2 / n_th equals it; otherwise the [atoms] settings are used.
    """
    if cfg["g2"]["ratio"] is not None:
        theta = math.pi / 2
        half = atom_density_matrix(AtomEnsembleSpec(theta))

        def excess(n_bar):
            r = derive(_params(cfg, N_bar=n_bar, delta_ac_Hz=0.0), half)
            return abs(r.alpha) ** 2 / r.n_th - cfg["g2"]["ratio"]

        params = _params(cfg, N_bar=brentq(excess, 1e-4, 50.0, xtol=1e-14, rtol=1e-14), delta_ac_Hz=0.0)
    else:
        params = _params(cfg)
        theta = _theta(cfg, params)
    spec = _spec(cfg, theta)
    rho = atom_density_matrix(spec)
    dim = cfg["cavity"]["dim"]
    gen = dynamics.build_generator(params, rho, dim)
    ss = dynamics.steady_state_numeric(gen)
    taus = np.linspace(0.0, cfg["g2"]["tau_max_s"], cfg["g2"]["n_tau"])
    g2 = dynamics.g2_correlation(gen, ss, taus)
    exact = trajectory.micromaser_g2(params, spec, min(dim, 30), taus)
    ctx.write_csv("g2.csv", ("tau_s", "g2"), zip(taus, g2))
    ctx.write_csv("g2_micromaser.csv", ("tau_s", "g2"), zip(taus, exact))
    res = derive(params, rho)
    return {
        "theta": theta, "N_bar": params.N_bar, "alpha_sq_over_n_th": abs(res.alpha) ** 2 / res.n_th if res.n_th else None,
        "g2_zero": float(g2[0]), "g2_zero_micromaser": float(exact[0]),
    }


def exp_trajectory_validation(cfg, ctx):
    tcfg = cfg["trajectory"]
    params = _params(cfg)
    theta = _theta(cfg, params)
    spec = _spec(cfg, theta)
    res = derive(params, atom_density_matrix(spec))
    config = trajectory.TrajectoryConfig(
        params, spec, tcfg["t_final_s"], dim=tcfg["dim"], n_trajectories=tcfg["n_trajectories"],
        seed=ctx.seed, record_emissions=tcfg["record_emissions"], n_samples=tcfg["n_samples"],
    )
    records = trajectory.run_ensemble(config, threads=ctx.threads)
    stats = trajectory.ensemble_statistics(records)
    ctx.write_csv("trajectory_mean.csv", ("t_s", "n_mean", "n_sem"), zip(stats.times, stats.mean, stats.sem))
    exact = fock.mean_photon_number(trajectory.micromaser_steady_state(params, spec, tcfg["dim"]))
    out = {
        "theta": theta,
        "n_final_mean": float(stats.mean[-1]),
        "n_final_sem": float(stats.sem[-1]),
        "n_master_equation": res.n_sr,
        "n_micromaser": exact,
        "z_master_equation": float((stats.mean[-1] - res.n_sr) / stats.sem[-1]) if stats.sem[-1] > 0 else None,
    }
    if tcfg["record_emissions"]:
        ctx.write_events(records)
        t_start = 5.0 / res.Gamma_r
        if tcfg["t_final_s"] > t_start + tcfg["max_lag_s"]:
            hist = trajectory.g2_from_records(records, tcfg["bin_width_s"], tcfg["max_lag_s"], t_start)
            ctx.write_csv("g2_histogram.csv", ("tau_s", "g2", "g2_err", "counts"),
                          zip(hist.tau, hist.g2, hist.err, hist.counts))
            out["g2_first_bin"] = float(hist.g2[0])
            out["n_events"] = hist.n_events
    return out


RUNNERS = {name: globals()[f"exp_{name}"] for name in EXPERIMENTS}


class OutputContext:
    """Single writer for every file of a run, in call order."""

    def __init__(self, out_dir: Path, digest: str, seed: int, threads: int):
        self.out_dir = out_dir
        self.digest = digest
        self.seed = seed
        self.threads = threads
        self.files = []

    def write_csv(self, name, header, rows):
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_sha256={self.digest}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        self.files.append(name)

    def write_events(self, records):
        name = "events.csv"
        trajectory.write_event_csv(records, self.out_dir / name, f"config_sha256={self.digest}")
        self.files.append(name)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "%.12g" % v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def run(config_path, out=None, seed=None, threads=1) -> int:
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg["run"]["seed"] = int(seed)
        if out is not None:
            cfg["run"]["output_dir"] = str(out)
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)

    out_dir = Path(cfg["run"]["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    # the output location does not change results, so it stays out of the hash
    hashed = {k: dict(v) for k, v in cfg.items()}
    hashed["run"].pop("output_dir")
    digest = config_hash(hashed)
    ctx = OutputContext(out_dir, digest, cfg["run"]["seed"], threads)
    experiment = cfg["run"]["experiment"]
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            results = RUNNERS[experiment](cfg, ctx)
    except MasingThresholdError as exc:
        return _fail(EXIT_MASING, exc, out_dir)
    except (EngineError, ValueError, ArithmeticError) as exc:
        return _fail(EXIT_SOLVER, exc, out_dir)

    summary = {
        "experiment": experiment,
        "version": __version__,
        "seed": cfg["run"]["seed"],
        "config_sha256": digest,
        "config": cfg,
        "results": results,
        "warnings": sorted({str(w.message) for w in caught}),
        "files": ctx.files,
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps({"status": "ok", "experiment": experiment, "output_dir": str(out_dir)}))
    return EXIT_OK


def _fail(code: int, exc: Exception, out_dir: Path | None = None) -> int:
    record = {"status": "error", "code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    if out_dir is not None:
        with open(out_dir / "error.json", "w") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    return code


def selfcheck(quick: bool = False, threads: int = 1) -> int:
    results = checks.run_all(quick=quick, threads=threads, stream=sys.stdout)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="srengine", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int, default=1)
    p_check = sub.add_parser("selfcheck", help="run invariant and acceptance checks")
    p_check.add_argument("--quick", action="store_true")
    p_check.add_argument("--threads", type=int, default=1)
    sub.add_parser("version")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.seed, args.threads)
    if args.command == "selfcheck":
        return selfcheck(args.quick, args.threads)
    print(__version__)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
