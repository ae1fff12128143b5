"""Command-line front end: simulate, calibrate, reset, tomography, scenarios.

Every run writes one output directory holding a fully resolved config echo
(config_echo.yaml), whatever CSV series the task produces, and a
summary.json carrying a schema_version field. Flags --seed, --out, --dt and
--threads override the corresponding config entries; outputs contain no
timestamps, so a rerun with the same inputs reproduces the same bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis
from .calibration import (frequency_calibration, reset_protocol,
                          stark_calibration, stark_map_from_model,
                          sweep_symmetry)
from .config import ConfigError, ScenarioConfig, default_config, load_config
from .dynamics import emit_photon
from .pulses import compensate_phase, envelope_to_csv, synthesize_sin2
from .scenarios import SCENARIO_NAMES, run_scenario
from .tomography import (NoiseModel, fock_target, mode_density_matrix,
                         run_tomography, superposition_target)


def _write_summary(out_dir: str, doc: dict) -> None:
    doc = {"schema_version": 1, **doc}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.dt is not None:
        cfg.dt = args.dt
    if args.out is not None:
        cfg.out = args.out
    if cfg.out is None:
        cfg.out = "photonshaper-out"
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config_echo.yaml"), "w") as fh:
        fh.write(cfg.to_yaml())
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(cfg: ScenarioConfig, args) -> int:
    em = cfg.section("emission")
    env = synthesize_sin2(em["amplitude"], em["duration"], cfg.dt)
    if em["compensate"]:
        env = compensate_phase(env, stark_map_from_model(cfg.device))
    record = emit_photon(cfg.device, env, em["initial"], dt=cfg.dt,
                         decoherence=em["decoherence"])
    envelope_to_csv(env, os.path.join(cfg.out, "envelope.csv"))
    record.to_csv(os.path.join(cfg.out, "record.csv"))
    metrics = {
        "emitted_photons": float(record.emitted_total),
        "residual_f0": float(record.residual_f0),
        "duration_ns": em["duration"],
        "amplitude_ghz": em["amplitude"],
        "initial": em["initial"],
    }
    mode = analysis.mode_function(
        record.times, record.a_out,
        route="mean_field" if em["initial"] == "superposition" else "power",
        power=record.power)
    s, t0 = analysis.symmetry_parameter(mode.times, mode.values)
    metrics["symmetry"] = float(s)
    metrics["symmetry_center_ns"] = float(t0)
    if em["initial"] == "superposition":
        metrics["efficiency"] = 2.0 * metrics["emitted_photons"]
        metrics["phase_std_rad"] = float(
            analysis.phase_flatness(record.times, record.a_out))
    else:
        metrics["efficiency"] = metrics["emitted_photons"]
    _write_summary(cfg.out, {"subcommand": "simulate", "seed": cfg.seed,
                             "metrics": metrics})
    print(f"emitted {metrics['emitted_photons']:.4f} photons, "
          f"s = {metrics['symmetry']:.4f}")
    return 0


def _cmd_sweep(cfg: ScenarioConfig, args) -> int:
    sw = cfg.section("sweep")
    result = sweep_symmetry(sw["durations"], sw["amplitudes"], cfg.device,
                            dt=cfg.dt, refine_rounds=sw["refine_rounds"],
                            threads=args.threads)
    result.to_json(os.path.join(cfg.out, "sweep.json"))
    _write_summary(cfg.out, {
        "subcommand": "sweep-symmetry", "seed": cfg.seed,
        "metrics": {"best_duration_ns": result.best[0],
                    "best_amplitude_ghz": result.best[1],
                    "best_symmetry": result.best_s,
                    "best_efficiency": result.best_efficiency,
                    "best_residual": result.best_residual}})
    print(f"best (T, amp) = ({result.best[0]:.1f} ns, "
          f"{result.best[1]:.3f} GHz), s = {result.best_s:.4f}")
    return 0


def _cmd_stark(cfg: ScenarioConfig, args) -> int:
    st = cfg.section("stark")
    smap = stark_calibration(st["amplitudes"], cfg.device,
                             duration=st["probe_duration"], dt=cfg.dt)
    smap.to_json(os.path.join(cfg.out, "stark_map.json"))
    _write_summary(cfg.out, {
        "subcommand": "calibrate-stark", "seed": cfg.seed,
        "metrics": {"amplitudes": [float(a) for a in smap.amplitudes],
                    "shifts_ghz": [float(s) for s in smap.shifts]}})
    shifts_mhz = ", ".join(f"{1e3 * s:+.2f}" for s in smap.shifts)
    print(f"stark shifts (MHz): {shifts_mhz}")
    return 0


def _cmd_frequency(cfg: ScenarioConfig, args) -> int:
    fr = cfg.section("frequency")
    env = compensate_phase(
        synthesize_sin2(fr["amplitude"], fr["duration"], cfg.dt),
        stark_map_from_model(cfg.device))
    cal = frequency_calibration(cfg.device, env, span=fr["span"],
                                n_offsets=fr["n_offsets"], dt=cfg.dt,
                                method=fr["method"])
    _write_summary(cfg.out, {
        "subcommand": "calibrate-frequency", "seed": cfg.seed,
        "metrics": {"method": fr["method"],
                    "correction_ghz": cal.correction,
                    "offsets_ghz": [float(x) for x in cal.offsets],
                    "peaks_ghz": [float(x) for x in cal.peaks]}})
    print(f"frequency correction: {1e6 * cal.correction:+.1f} kHz "
          f"({fr['method']})")
    return 0


def _cmd_reset(cfg: ScenarioConfig, args) -> int:
    rs = cfg.section("reset")
    result = reset_protocol(cfg.device, rs["thermal_p_e"], rs["n_rounds"],
                            transfer_duration=rs["transfer_duration"],
                            transfer_amplitude=rs["transfer_amplitude"],
                            decoherence=rs["decoherence"], dt=cfg.dt)
    _write_summary(cfg.out, {
        "subcommand": "reset", "seed": cfg.seed,
        "metrics": {"p_e_history": [float(x) for x in result.p_e_history],
                    "p_f_history": [float(x) for x in result.p_f_history],
                    "final_p_e": result.final_p_e}})
    history = " -> ".join(f"{x:.4f}" for x in result.p_e_history)
    print(f"P(e): {history}")
    return 0


def _cmd_tomography(cfg: ScenarioConfig, args) -> int:
    tomo = cfg.section("tomography")
    stark = stark_map_from_model(cfg.device)
    env = compensate_phase(
        synthesize_sin2(tomo["amplitude"], tomo["duration"], cfg.dt), stark)
    initial = "f0" if tomo["protocol"] == "fock" else "superposition"
    record = emit_photon(cfg.device, env, initial, dt=cfg.dt)
    record.to_csv(os.path.join(cfg.out, "record.csv"))
    photon_number = float(record.emitted_total)
    if tomo["protocol"] == "fock":
        mean_amp = 0.0 + 0.0j
        target = fock_target(1, tomo["n_max"])
    else:
        mode = analysis.mode_function(record.times, record.a_out)
        mean_amp = complex(analysis.matched_filter(
            mode.times, mode.values, record.times, record.a_out))
        target = superposition_target(tomo["n_max"])
    rho = mode_density_matrix(photon_number, mean_amp, tomo["n_max"])
    res = run_tomography(rho, NoiseModel(tomo["noise_number"]),
                         tomo["n_shots"], seed=cfg.seed,
                         n_max=tomo["n_max"], target=target)
    res.signal_histogram.to_csv(os.path.join(cfg.out, "histogram.csv"))
    res.reference_histogram.to_csv(
        os.path.join(cfg.out, "histogram_reference.csv"))
    with open(os.path.join(cfg.out, "tomography.json"), "w") as fh:
        fh.write(res.summary_json())
    _write_summary(cfg.out, {
        "subcommand": "tomography", "seed": cfg.seed,
        "metrics": {"protocol": tomo["protocol"],
                    "photon_number": photon_number,
                    "mean_field": [mean_amp.real, mean_amp.imag],
                    "noise_number": res.noise_number,
                    "fidelity": res.estimate.fidelity,
                    "g2": res.estimate.g2,
                    "g2_error": res.estimate.g2_error,
                    "n_shots": tomo["n_shots"]}})
    g2_text = ("undefined" if res.estimate.g2 is None
               else f"{res.estimate.g2:.3f}")
    print(f"F = {res.estimate.fidelity:.4f}, g2 = {g2_text}")
    return 0


def _cmd_scenario(cfg: ScenarioConfig, args) -> int:
    passed = run_scenario(args.name, cfg, cfg.out)
    print(f"scenario {args.name}: {'pass' if passed else 'FAIL'}")
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonshaper",
        description="Shaped-microwave-photon simulator and analysis CLI")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="YAML config path")
        p.add_argument("--seed", type=int, help="override RNG seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads where supported")
        p.add_argument("--dt", type=float, help="integrator step (ns)")
        p.set_defaults(func=func)
        return p

    add("simulate", _cmd_simulate, help="one shaped emission run")
    add("sweep-symmetry", _cmd_sweep, help="pulse-parameter symmetry sweep")
    add("calibrate-stark", _cmd_stark, help="drive-induced shift calibration")
    add("calibrate-frequency", _cmd_frequency,
        help="drive-frequency fine calibration")
    add("reset", _cmd_reset, help="thermal-population reset protocol")
    add("tomography", _cmd_tomography, help="moment tomography pipeline")
    p_sc = add("scenario", _cmd_scenario, help="run a named scenario")
    p_sc.add_argument("name", choices=SCENARIO_NAMES)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = _prepare(cfg, args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
