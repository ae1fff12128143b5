"""Figure-style scenario pipelines: orchestrate runs, write artifacts.

Each scenario takes a ScenarioConfig plus an output directory and writes a
config echo, CSV series and a JSON summary with headline metrics and a
``checks`` block. ``run_scenario`` returns True iff every internal check
passed; the CLI maps that to the exit code. Every file is deterministic for
a given (config, seed): no timestamps, sorted keys, fixed float formatting.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import analysis
from .calibration import (frequency_calibration, reset_protocol,
                          stark_calibration, stark_map_from_model)
from .config import ScenarioConfig
from .dynamics import emit_photon
from .pulses import (build_train, compensate_phase, envelope_to_csv,
                     synthesize_sin2)
from .tomography import (NoiseModel, fock_target, mode_density_matrix,
                         run_tomography, superposition_target)

SCENARIO_NAMES = ("fig2-symmetric", "fig3-tomography", "fig4-train",
                  "figA2-calibration")


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emission_metrics(record) -> dict:
    mode = analysis.mode_function(record.times, record.a_out)
    s, t0 = analysis.symmetry_parameter(mode.times, mode.values)
    return {
        "emitted_photons": float(record.emitted_total),
        "residual_f0": float(record.residual_f0),
        "symmetry": float(s),
        "symmetry_center_ns": float(t0),
        "phase_std_rad": float(analysis.phase_flatness(record.times,
                                                       record.a_out)),
        "mean_field_norm": float(mode.norm_raw),
    }


# ---------------------------------------------------------------------------
# fig2: three symmetric photons of different lengths
# ---------------------------------------------------------------------------

# (duration ns, drive amplitude GHz) for the three published waveforms
FIG2_PULSES = ((20.0, 0.68), (200.0, 0.70), (500.0, 0.60))


def scenario_fig2(cfg: ScenarioConfig, out_dir: str) -> dict:
    stark = stark_map_from_model(cfg.device)
    runs = {}
    checks = {}
    for duration, amp in FIG2_PULSES:
        env = compensate_phase(synthesize_sin2(amp, duration, cfg.dt), stark)
        record = emit_photon(cfg.device, env, "superposition", dt=cfg.dt)
        tag = f"T{int(duration)}"
        envelope_to_csv(env, os.path.join(out_dir, f"envelope_{tag}.csv"))
        record.to_csv(os.path.join(out_dir, f"record_{tag}.csv"))
        m = _emission_metrics(record)
        m["duration_ns"] = duration
        m["amplitude_ghz"] = amp
        m["efficiency"] = 2.0 * m["emitted_photons"]
        runs[tag] = m
    # long pulses reach the symmetric regime; the 20 ns pulse cannot
    checks["s_200ns_at_least_0.97"] = runs["T200"]["symmetry"] >= 0.97
    checks["s_500ns_at_least_0.98"] = runs["T500"]["symmetry"] >= 0.98
    checks["s_20ns_at_most_0.95"] = runs["T20"]["symmetry"] <= 0.95
    for tag in runs:
        checks[f"phase_std_{tag}_below_0.1"] = \
            runs[tag]["phase_std_rad"] < 0.1
    return {"runs": runs, "checks": checks}


# ---------------------------------------------------------------------------
# fig3: moment tomography of the calibrated photon
# ---------------------------------------------------------------------------

def scenario_fig3(cfg: ScenarioConfig, out_dir: str) -> dict:
    tomo = cfg.section("tomography")
    duration, amp = tomo["duration"], tomo["amplitude"]
    noise = NoiseModel(tomo["noise_number"])
    n_shots = tomo["n_shots"]
    stark = stark_map_from_model(cfg.device)
    env = compensate_phase(synthesize_sin2(amp, duration, cfg.dt), stark)
    envelope_to_csv(env, os.path.join(out_dir, "envelope.csv"))

    rec_f = emit_photon(cfg.device, env, "f0", dt=cfg.dt)
    rec_s = emit_photon(cfg.device, env, "superposition", dt=cfg.dt)
    rec_f.to_csv(os.path.join(out_dir, "record_fock.csv"))
    rec_s.to_csv(os.path.join(out_dir, "record_superposition.csv"))

    # photon-mode moments straight from the records: <A^dag A> is the
    # emitted photon number, <A> the mean-field content of the matched mode
    n_fock = float(rec_f.emitted_total)
    n_sup = float(rec_s.emitted_total)
    mode_s = analysis.mode_function(rec_s.times, rec_s.a_out)
    mean_sup = complex(analysis.matched_filter(mode_s.times, mode_s.values,
                                               rec_s.times, rec_s.a_out))

    rho_fock = mode_density_matrix(n_fock, 0.0, tomo["n_max"])
    rho_sup = mode_density_matrix(n_sup, mean_sup, tomo["n_max"])

    res_f = run_tomography(rho_fock, noise, n_shots, seed=cfg.seed,
                           n_max=tomo["n_max"],
                           target=fock_target(1, tomo["n_max"]))
    res_s = run_tomography(rho_sup, noise, n_shots, seed=cfg.seed + 1,
                           n_max=tomo["n_max"],
                           target=superposition_target(tomo["n_max"]))
    res_f.signal_histogram.to_csv(os.path.join(out_dir,
                                               "histogram_fock.csv"))
    res_s.signal_histogram.to_csv(
        os.path.join(out_dir, "histogram_superposition.csv"))
    for name, res in (("fock", res_f), ("superposition", res_s)):
        with open(os.path.join(out_dir, f"tomography_{name}.json"), "w") as fh:
            fh.write(res.summary_json())

    summary = {
        "fock": {"photon_number": n_fock,
                 "fidelity": res_f.estimate.fidelity,
                 "g2": res_f.estimate.g2,
                 "g2_error": res_f.estimate.g2_error},
        "superposition": {"photon_number": n_sup,
                          "mean_field": [mean_sup.real, mean_sup.imag],
                          "fidelity": res_s.estimate.fidelity},
        "noise_number": res_f.noise_number,
        "n_shots": n_shots,
    }
    checks = {
        "fock_fidelity_in_band": 0.71 <= res_f.estimate.fidelity <= 0.81,
        "superposition_fidelity_in_band":
            0.81 <= res_s.estimate.fidelity <= 0.91,
        "fock_g2_below_0.15": (res_f.estimate.g2 is not None
                               and res_f.estimate.g2 < 0.15),
    }
    return {"runs": summary, "checks": checks}


# ---------------------------------------------------------------------------
# fig4: six-peak photon train with single-peak phase flips
# ---------------------------------------------------------------------------

TRAIN_AMP = 0.35          # GHz
TRAIN_PEAK_NS = 60.0
TRAIN_SPACING_NS = 170.0
TRAIN_N_PEAKS = 6


def _train_envelope(cfg: ScenarioConfig, stark, flip: int | None):
    peaks = []
    for k in range(TRAIN_N_PEAKS):
        peaks.append({"amp": TRAIN_AMP, "duration": TRAIN_PEAK_NS,
                      "start": k * TRAIN_SPACING_NS,
                      "phase": np.pi if k == flip else 0.0})
    return build_train(peaks, cfg.dt, stark=stark)


def scenario_fig4(cfg: ScenarioConfig, out_dir: str) -> dict:
    stark = stark_map_from_model(cfg.device)
    env_ref = _train_envelope(cfg, stark, None)
    rec_ref = emit_photon(cfg.device, env_ref, "superposition", dt=cfg.dt)
    envelope_to_csv(env_ref, os.path.join(out_dir, "envelope_reference.csv"))
    rec_ref.to_csv(os.path.join(out_dir, "record_reference.csv"))

    power_peak = float(rec_ref.power.max())
    # Count resolved power peaks by prominence, after averaging away the
    # sub-ns ripple the residual drive-frequency component beats into the
    # power trace (2 ns boxcar, i.e. a finite detection bandwidth).
    # Identical drive peaks emit a geometrically decaying train (each takes
    # the same bite of the remaining population), and between humps the
    # power does not ring down to zero: the parked second-excited-state
    # population keeps radiating through its dispersive resonator admixture
    # (a Purcell pedestal of a few percent of the maximum that decays along
    # with the train). A global threshold cannot separate the weakest hump
    # (~10% of the maximum) from the earliest pedestal (~6%), but peak
    # prominence can: every hump rises at least ~8% of the maximum above
    # its surroundings while the smoothed ripple stays below ~1%. The first
    # few ns are excluded: projecting the bare initial state onto the
    # dressed basis sheds a spin-up transient there that is not an emitted
    # photon peak.
    from scipy.signal import find_peaks
    width = max(int(round(2.0 / (rec_ref.times[1] - rec_ref.times[0]))), 1)
    smooth = np.convolve(rec_ref.power, np.ones(width) / width, mode="same")
    sel = rec_ref.times >= 5.0
    peaks_idx, _ = find_peaks(smooth[sel], prominence=0.04 * smooth.max())
    n_peaks = int(len(peaks_idx))

    checks = {"six_resolved_power_peaks": n_peaks == TRAIN_N_PEAKS}
    flips = {}
    for k in range(TRAIN_N_PEAKS):
        env_k = _train_envelope(cfg, stark, k)
        rec_k = emit_photon(cfg.device, env_k, "superposition", dt=cfg.dt)
        rec_k.to_csv(os.path.join(out_dir, f"record_flip{k}.csv"))
        # power must be unchanged everywhere (2% of the global peak)
        dp = float(np.max(np.abs(rec_k.power - rec_ref.power)))
        power_ok = dp <= 0.02 * power_peak
        # each peak owns its repetition slot: drive hump plus the full
        # ring-down fits well inside the spacing, so the flipped slot must
        # show a negated voltage and every other slot an unchanged one
        t_lo = k * TRAIN_SPACING_NS
        win = ((rec_ref.times >= t_lo)
               & (rec_ref.times < t_lo + TRAIN_SPACING_NS))
        if k == TRAIN_N_PEAKS - 1:
            win = rec_ref.times >= t_lo
        scale = float(np.max(np.abs(rec_ref.a_out[win])))
        flip_resid = float(np.max(np.abs(rec_k.a_out[win]
                                         + rec_ref.a_out[win])))
        same_resid = float(np.max(np.abs(rec_k.a_out[~win]
                                         - rec_ref.a_out[~win])))
        voltage_ok = (flip_resid <= 0.02 * scale
                      and same_resid <= 0.02 * scale)
        flips[f"flip{k}"] = {"power_deviation": dp,
                             "power_deviation_fraction": dp / power_peak,
                             "voltage_negation_residual": flip_resid / scale,
                             "voltage_elsewhere_residual":
                                 same_resid / scale}
        checks[f"flip{k}_power_unchanged"] = power_ok
        checks[f"flip{k}_voltage_negated"] = voltage_ok
    reference = {
        "emitted_photons": float(rec_ref.emitted_total),
        "residual_f0": float(rec_ref.residual_f0),
        "mean_field_norm": float(np.sqrt(np.trapezoid(
            np.abs(rec_ref.a_out) ** 2, rec_ref.times))),
    }
    summary = {"reference": reference, "n_power_peaks": n_peaks,
               "flips": flips}
    return {"runs": summary, "checks": checks}


# ---------------------------------------------------------------------------
# figA2: the calibration suite on the model device
# ---------------------------------------------------------------------------

def scenario_figa2(cfg: ScenarioConfig, out_dir: str) -> dict:
    dev = cfg.device
    st = cfg.section("stark")
    fr = cfg.section("frequency")
    rs = cfg.section("reset")

    measured = stark_calibration(st["amplitudes"], dev,
                                 duration=st["probe_duration"], dt=cfg.dt)
    exact = stark_map_from_model(dev, amplitudes=np.asarray(st["amplitudes"]))
    measured.to_json(os.path.join(out_dir, "stark_map.json"))
    rel_errors = {}
    for amp in st["amplitudes"]:
        got, want = measured.shift(amp), exact.shift(amp)
        rel_errors[f"{amp:g}"] = float(abs(got - want) / abs(want))
    # quadratic scaling witness: dip(2x) / dip(x) for the smallest pair
    amps = sorted(st["amplitudes"])
    ratio = None
    for a in amps:
        if 2 * a in amps or any(abs(2 * a - b) < 1e-12 for b in amps):
            ratio = float(measured.shift(2 * a) / measured.shift(a))
            break

    stark_full = stark_map_from_model(dev)
    env = compensate_phase(
        synthesize_sin2(fr["amplitude"], fr["duration"], cfg.dt), stark_full)
    cal_spec = frequency_calibration(dev, env, span=fr["span"],
                                     n_offsets=fr["n_offsets"], dt=cfg.dt,
                                     method="spectrum")
    cal_sym = frequency_calibration(dev, env, span=fr["span"], dt=cfg.dt,
                                    method="symmetry")
    agreement = abs(cal_spec.correction - cal_sym.correction)

    reset = reset_protocol(dev, rs["thermal_p_e"], rs["n_rounds"],
                           stark=stark_full,
                           transfer_duration=rs["transfer_duration"],
                           transfer_amplitude=rs["transfer_amplitude"],
                           decoherence=rs["decoherence"], dt=cfg.dt)

    # The 5% dressed-model agreement is judged at amplitudes >= 0.2 GHz.
    # The 0.1 GHz point stays on the grid for the quadratic-scaling ratio,
    # but its dip is only ~2 MHz, so the fixed ~0.1 MHz fit anchoring floor
    # dominates its relative error.
    checks = {
        "stark_errors_below_5_percent":
            all(v <= 0.05 for a, v in rel_errors.items()
                if float(a) >= 0.2),
        "frequency_methods_agree_200khz": agreement <= 2.0e-4,
        "reset_final_at_most_0.04": reset.final_p_e <= 0.04,
    }
    if ratio is not None:
        checks["stark_quadratic_ratio_4_pm_0.4"] = abs(ratio - 4.0) <= 0.4
    summary = {
        "stark": {"amplitudes": [float(a) for a in measured.amplitudes],
                  "shifts_ghz": [float(s) for s in measured.shifts],
                  "relative_errors": rel_errors,
                  "quadratic_ratio": ratio},
        "frequency": {"correction_spectrum_ghz": cal_spec.correction,
                      "correction_symmetry_ghz": cal_sym.correction,
                      "agreement_ghz": agreement},
        "reset": {"p_e_history": [float(x) for x in reset.p_e_history],
                  "p_f_history": [float(x) for x in reset.p_f_history]},
    }
    return {"runs": summary, "checks": checks}


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_REGISTRY = {
    "fig2-symmetric": scenario_fig2,
    "fig3-tomography": scenario_fig3,
    "fig4-train": scenario_fig4,
    "figA2-calibration": scenario_figa2,
}


def run_scenario(name: str, cfg: ScenarioConfig, out_dir: str) -> bool:
    """Run one named scenario; returns True iff all its checks passed."""
    if name not in _REGISTRY:
        known = ", ".join(sorted(_REGISTRY))
        raise ValueError(f"unknown scenario {name!r}; known: {known}")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config_echo.yaml"), "w") as fh:
        fh.write(cfg.to_yaml())
    try:
        result = _REGISTRY[name](cfg, out_dir)
    except Exception as exc:
        raise RuntimeError(f"scenario {name} failed: {exc}") from exc
    summary = {"schema_version": 1, "scenario": name, "seed": cfg.seed,
               "dt": cfg.dt, "results": result["runs"],
               "checks": result["checks"],
               "passed": all(result["checks"].values())}
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return bool(summary["passed"])
