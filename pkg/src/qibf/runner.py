"""Experiment orchestration: runs, manifests, and CSV artifacts.

A run takes one :class:`~qibf.config.ExperimentConfig` and one seed,
simulates (or replays) the plant, drives the configured transmitters and
receivers step by step, and writes:

* ``manifest.json`` — config echo, code version, per-step scalar summaries,
  wall-clock (written atomically via a temp file + rename);
* ``<method>_summary.csv`` — one row per step and method;
* per-step density CSVs for the grid receivers when ``dump_densities`` is on.

Everything is deterministic per (config, seed, backend).
"""
from __future__ import annotations

import json
import os
import time

import numpy as np

from . import __version__
from . import kalman, mlq_s
from ._kernels import active_backend
from .config import ExperimentConfig, build_quantizers
from .errors import ConfigError, DegenerateDensityError, ExperimentError, QibfError
from .gridpdf import default_grid, density_to_csv, mean_cov, trapezoid_mass
from .model import replay, simulate
from .receiver_k import (
    AugmentedBelief,
    GainSchedule,
    k_init,
    k_predict,
    k_state_marginal,
    k_update,
    run_method_k_transmitter,
)
from .receiver_r import run_method_r

__all__ = [
    "run_experiment",
    "resync_experiment",
    "whiteness_report",
    "write_manifest",
    "default_out_root",
]

OUT_ROOT_ENV = "QIBF_OUT_ROOT"


def default_out_root() -> str:
    return os.environ.get(OUT_ROOT_ENV, "runs")


def write_manifest(path, manifest: dict):
    """Write JSON atomically: temp file in the same directory, then rename."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _rows_to_csv(path, header, rows):
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _apply_channel_errors(symbols, channel_errors):
    corrupted = np.array(symbols, copy=True)
    for inj in channel_errors:
        corrupted[int(inj["time"])] = int(inj["new_symbol"])
    return corrupted


def _grids(config):
    model = config.model
    sd = float(np.sqrt(model.x0_cov[0, 0]))
    mean = float(model.x0_mean[0])
    grid_r = default_grid([mean], [sd], points=config.grid_points,
                          width_sigmas=config.grid_sigmas)
    grid_k = default_grid([mean, 0.0], [sd, sd], points=config.grid_points,
                          width_sigmas=config.grid_sigmas)
    return grid_r, grid_k


def run_experiment(config: ExperimentConfig, out_dir=None, seed=None) -> dict:
    """Run every configured method for every seed; returns the manifest."""
    t_start = time.time()
    seeds = [int(seed)] if seed is not None else list(config.seeds)
    out_dir = out_dir or os.path.join(default_out_root(), config.name)
    os.makedirs(out_dir, exist_ok=True)
    model = config.model
    T = config.horizon
    schedule = GainSchedule.from_model(model, horizon=T) if model.n == 1 and model.p == 1 else None
    innovation_stds = np.sqrt(schedule.S) if schedule is not None else None
    q_seq = build_quantizers(config.quantizer_spec, T, innovation_stds)

    manifest = {
        "name": config.name,
        "version": __version__,
        "backend": active_backend(),
        "config": config.raw,
        "seeds": {},
        "status": "ok",
    }
    try:
        for sd in seeds:
            manifest["seeds"][str(sd)] = _run_one_seed(
                config, q_seq, schedule, sd, os.path.join(out_dir, f"seed{sd}")
            )
    except ExperimentError as exc:
        manifest["status"] = "aborted"
        manifest["error"] = {"method": exc.method, "step": exc.k, "message": str(exc.cause)}
        manifest["wall_clock_s"] = time.time() - t_start
        write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
        raise
    manifest["wall_clock_s"] = time.time() - t_start
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def _run_one_seed(config, q_seq, schedule, seed, seed_dir):
    os.makedirs(seed_dir, exist_ok=True)
    model = config.model
    T = config.horizon
    u = config.u_seq if config.u_seq is not None else model.zero_inputs()
    if config.realization is not None:
        traj = replay(model, u, config.realization)
        source = "replay"
    else:
        _, traj = simulate(model, u, seed)
        source = f"simulate(seed={seed})"
    y = traj.y[:T, 0]
    summary = {"source": source, "methods": {}}
    grid_r, grid_k = _grids(config)

    if "kalman" in config.methods:
        log = _guard("kalman", lambda: kalman.run_filter(model, y.reshape(-1, 1), u[:T]))
        rows = [
            (k, float(log["eps"][k, 0]), float(log["S"][k, 0, 0]),
             float(log["x_pred"][k, 0]), float(log["P_pred"][k, 0, 0]),
             float(log["x_filt"][k, 0]), float(log["P_filt"][k, 0, 0]))
            for k in range(T)
        ]
        _rows_to_csv(os.path.join(seed_dir, "kalman_summary.csv"),
                     ["k", "eps", "S", "x_pred", "P_pred", "x_filt", "P_filt"], rows)
        summary["methods"]["kalman"] = {
            "eps": [r[1] for r in rows],
            "P_pred": [r[4] for r in rows],
            "x_filt": [r[5] for r in rows],
        }

    if "S" in config.methods:
        log = _guard("S", lambda: mlq_s.run_method_s(
            model, q_seq, y.reshape(-1, 1), u[:T], mirror_sum=config.mirror_sum))
        rows = [
            (k, int(log["symbol"][k]), float(log["iota"][k]), float(log["iota_bar"][k]),
             float(log["x_pred"][k, 0]), float(log["P_pred"][k, 0, 0]),
             float(log["x_filt"][k, 0]), float(log["P_filt"][k, 0, 0]))
            for k in range(T)
        ]
        _rows_to_csv(os.path.join(seed_dir, "method_s_summary.csv"),
                     ["k", "symbol", "iota", "iota_bar", "x_pred", "P_pred", "x_filt", "P_filt"],
                     rows)
        summary["methods"]["S"] = {
            "iota": [r[2] for r in rows],
            "symbol": [r[1] for r in rows],
            "P_pred": [r[5] for r in rows],
            "x_pred": [r[4] for r in rows],
        }

    if "K" in config.methods:
        symbols, kf_log = _guard("K", lambda: run_method_k_transmitter(model, q_seq, y, u[:T]))
        rx_symbols = _apply_channel_errors(symbols, config.channel_errors)
        rec = _run_k_receiver_logged(
            config, model, schedule, q_seq, rx_symbols, u[:T], grid_k, seed_dir)
        rows = [
            (k, int(symbols[k]), int(rx_symbols[k]), float(kf_log["eps"][k, 0]),
             rec["mean"][k], rec["var"][k], rec["mass_pred"][k], rec["mass_filt"][k],
             rec["raw_mass"][k])
            for k in range(T)
        ]
        _rows_to_csv(os.path.join(seed_dir, "method_k_summary.csv"),
                     ["k", "symbol_tx", "symbol_rx", "eps", "mean", "var",
                      "mass_pred", "mass_filt", "raw_mass"], rows)
        summary["methods"]["K"] = {
            "symbol": [int(s) for s in symbols],
            "eps": [float(v) for v in kf_log["eps"][:, 0]],
            "mean": rec["mean"], "var": rec["var"],
            "mass_pred": rec["mass_pred"], "mass_filt": rec["mass_filt"],
            "raw_mass": rec["raw_mass"],
        }

    if "R" in config.methods:
        log = _guard("R", lambda: run_method_r(model, q_seq, y, u[:T], grid=grid_r))
        masses = []
        for k in range(T):
            masses.append((
                _mass(log["predicted"][k].density), _mass(log["filtered"][k].density)))
            if config.dump_densities:
                density_to_csv(log["predicted"][k].density,
                               os.path.join(seed_dir, f"method_r_predicted_{k:03d}.csv"))
                density_to_csv(log["filtered"][k].density,
                               os.path.join(seed_dir, f"method_r_filtered_{k:03d}.csv"))
        rows = []
        for k in range(T):
            m, c = mean_cov(log["filtered"][k].density)
            rows.append((k, int(log["symbol"][k]), float(log["iota"][k]),
                         float(log["x_pred_mean"][k]), float(m[0]), float(c[0, 0]),
                         masses[k][0], masses[k][1], float(log["filtered"][k].raw_mass)))
        _rows_to_csv(os.path.join(seed_dir, "method_r_summary.csv"),
                     ["k", "symbol", "iota", "x_pred_mean", "mean", "var",
                      "mass_pred", "mass_filt", "raw_mass"], rows)
        summary["methods"]["R"] = {
            "symbol": [r[1] for r in rows], "iota": [r[2] for r in rows],
            "x_pred_mean": [r[3] for r in rows], "mean": [r[4] for r in rows],
            "var": [r[5] for r in rows],
            "mass_pred": [r[6] for r in rows], "mass_filt": [r[7] for r in rows],
        }

    return summary


def _mass(density):
    return float(trapezoid_mass(density))


def _run_k_receiver_logged(config, model, schedule, q_seq, symbols, u, grid, seed_dir):
    """Receiver loop with per-step mass bookkeeping and density dumps."""
    T = symbols.size
    belief = k_init(model, grid=grid)
    out = {"mean": [], "var": [], "mass_pred": [], "mass_filt": [], "raw_mass": []}
    for k in range(T):
        out["mass_pred"].append(_mass(belief.density))
        if config.dump_densities:
            density_to_csv(belief.density,
                           os.path.join(seed_dir, f"method_k_predicted_{k:03d}.csv"))
        belief = _guard("K", lambda: k_update(
            belief, model, schedule, k, q_seq[k], int(symbols[k])), k=k)
        out["mass_filt"].append(_mass(belief.density))
        out["raw_mass"].append(float(belief.raw_mass))
        if config.dump_densities:
            density_to_csv(belief.density,
                           os.path.join(seed_dir, f"method_k_filtered_{k:03d}.csv"))
            density_to_csv(k_state_marginal(belief),
                           os.path.join(seed_dir, f"method_k_marginal_{k:03d}.csv"))
        m, c = mean_cov(k_state_marginal(belief))
        out["mean"].append(float(m[0]))
        out["var"].append(float(c[0, 0]))
        if k + 1 < T:
            belief = _guard("K", lambda: k_predict(belief, model, schedule, u[k]), k=k)
    return out


def _guard(method, thunk, k=None):
    try:
        return thunk()
    except QibfError as exc:
        raise ExperimentError(method, k if k is not None else -1, exc) from exc


def particle_oracle_run(config: ExperimentConfig, n_particles: int, method: str = "K",
                        seed=None, oracle_seed=0, strata: int = 1):
    """Bootstrap-oracle run against the configured experiment.

    Simulates (or replays) the plant, produces the method's symbol stream,
    and returns the per-step oracle estimates (means, variances, Monte-Carlo
    standard errors, effective sample sizes) for the same stream.
    """
    from .particle import oracle_augmented_cells, oracle_state_cells
    from .receiver_r import run_method_r

    if method not in ("K", "R"):
        raise ConfigError(f"particle oracle supports methods K and R, got {method!r}")
    model = config.model
    T = config.horizon
    sd = config.seeds[0] if seed is None else int(seed)
    u = config.u_seq if config.u_seq is not None else model.zero_inputs()
    if config.realization is not None:
        traj = replay(model, u, config.realization)
    else:
        _, traj = simulate(model, u, sd)
    y = traj.y[:T, 0]
    schedule = GainSchedule.from_model(model, horizon=T)
    q_seq = build_quantizers(config.quantizer_spec, T, np.sqrt(schedule.S))
    if method == "K":
        symbols, _ = run_method_k_transmitter(model, q_seq, y, u[:T])
        return oracle_augmented_cells(model, schedule, q_seq, symbols, u[:T],
                                      n_particles=n_particles, seed=oracle_seed,
                                      strata=strata)
    log = run_method_r(model, q_seq, y, u[:T])
    return oracle_state_cells(model, q_seq, log["symbol"], log["x_pred_mean"],
                              u[:T], n_particles=n_particles, seed=oracle_seed,
                              strata=strata)


def write_comparison_csv(seed_summary: dict, path):
    """Side-by-side per-step state estimates of every method that ran."""
    methods = seed_summary["methods"]
    cols = []
    if "kalman" in methods:
        cols.append(("kalman_mean", methods["kalman"]["x_filt"]))
    if "K" in methods:
        cols.append(("method_k_mean", methods["K"]["mean"]))
    if "R" in methods:
        cols.append(("method_r_mean", methods["R"]["mean"]))
    if "S" in methods:
        cols.append(("method_s_pred_mean", methods["S"]["x_pred"]))
    if not cols:
        return
    T = len(cols[0][1])
    rows = [tuple([k] + [float(c[1][k]) for c in cols]) for k in range(T)]
    _rows_to_csv(path, ["k"] + [c[0] for c in cols], rows)


def resync_experiment(config: ExperimentConfig, flip_time: int, flip_symbol: int,
                      seed=None, out_dir=None) -> dict:
    """Clean vs corrupted receiver on identical transmitter output.

    Flips the symbol at `flip_time` to `flip_symbol` in the corrupted
    receiver's stream and reports, per step, the absolute difference of the
    state-marginal means and the total-variation distance of the marginals.
    A degenerate-density failure in the corrupted receiver is recorded as a
    divergence event (the offending update is skipped), not a crash.
    """
    if "K" not in config.methods:
        raise ConfigError("resync experiment needs method K in the config")
    model = config.model
    T = config.horizon
    if not (0 <= flip_time < T):
        raise ConfigError(f"flip_time {flip_time} outside horizon {T}")
    schedule = GainSchedule.from_model(model, horizon=T)
    q_seq = build_quantizers(config.quantizer_spec, T, np.sqrt(schedule.S))
    u = config.u_seq if config.u_seq is not None else model.zero_inputs()
    sd = config.seeds[0] if seed is None else int(seed)
    if config.realization is not None:
        traj = replay(model, u, config.realization)
    else:
        _, traj = simulate(model, u, sd)
    y = traj.y[:T, 0]
    symbols, _ = run_method_k_transmitter(model, q_seq, y, u[:T])
    corrupted = symbols.copy()
    corrupted[flip_time] = int(flip_symbol)

    _, grid_k = _grids(config)
    clean = k_init(model, grid=grid_k)
    bad = k_init(model, grid=grid_k)
    trace = []
    for k in range(T):
        clean = k_update(clean, model, schedule, k, q_seq[k], int(symbols[k]))
        event = ""
        try:
            bad = k_update(bad, model, schedule, k, q_seq[k], int(corrupted[k]))
        except DegenerateDensityError:
            # skip the impossible update and carry the predicted belief forward
            event = "degenerate"
            bad = AugmentedBelief(density=bad.density, k=bad.k, kind="filtered",
                                  raw_mass=bad.raw_mass)
        m_c = k_state_marginal(clean)
        m_b = k_state_marginal(bad)
        mc, _ = mean_cov(m_c)
        mb, _ = mean_cov(m_b)
        w = m_c.grid.trapezoid_weights(0)
        tv = 0.5 * float(np.sum(w * np.abs(m_c.values - m_b.values)))
        trace.append({
            "k": k, "mean_clean": float(mc[0]), "mean_corrupted": float(mb[0]),
            "abs_mean_diff": abs(float(mc[0]) - float(mb[0])), "tv": tv,
            "event": event,
        })
        if k + 1 < T:
            clean = k_predict(clean, model, schedule, u[k])
            bad = k_predict(bad, model, schedule, u[k])
    report = {
        "flip_time": flip_time, "flip_symbol": int(flip_symbol),
        "true_symbol": int(symbols[flip_time]), "seed": sd, "trace": trace,
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _rows_to_csv(
            os.path.join(out_dir, "resync_trace.csv"),
            ["k", "mean_clean", "mean_corrupted", "abs_mean_diff", "tv", "event"],
            [(t["k"], t["mean_clean"], t["mean_corrupted"], t["abs_mean_diff"],
              t["tv"], t["event"]) for t in trace],
        )
        write_manifest(os.path.join(out_dir, "resync_manifest.json"), report)
    return report


def whiteness_report(config: ExperimentConfig, max_lag: int = 10, seed=None,
                     out_dir=None) -> dict:
    """Autocorrelation table of the transmitter's standardized innovations.

    Needs ``horizon >= 500``.  Reports lags 1..`max_lag`, the 3/sqrt(T)
    band, and the same statistics for the quantized innovation sequence.
    """
    model = config.model
    T = config.horizon
    if T < 500:
        raise ConfigError(f"whiteness report needs horizon >= 500, got {T}")
    sd = config.seeds[0] if seed is None else int(seed)
    u = config.u_seq if config.u_seq is not None else model.zero_inputs()
    _, traj = simulate(model, u, sd)
    y = traj.y[:T, 0]
    schedule = GainSchedule.from_model(model, horizon=T)
    q_seq = build_quantizers(config.quantizer_spec, T, np.sqrt(schedule.S))
    symbols, log = run_method_k_transmitter(model, q_seq, y, u[:T])
    eps = log["eps"][:, 0]
    S = log["S"][:, 0, 0]
    rho = kalman.whiteness_statistic(eps, S, max_lag)
    eps_bar = np.array([q_seq[k].dequantize(int(symbols[k])) for k in range(T)])
    rho_bar = kalman.whiteness_statistic(eps_bar, S, max_lag)
    band = 3.0 / np.sqrt(T)
    report = {
        "seed": sd, "T": T, "band": float(band),
        "lags": list(range(1, max_lag + 1)),
        "rho": [float(v) for v in rho],
        "rho_quantized": [float(v) for v in rho_bar],
        "all_within_band": bool(np.all(np.abs(rho) <= band)),
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _rows_to_csv(
            os.path.join(out_dir, "whiteness.csv"),
            ["lag", "rho", "rho_quantized", "band"],
            [(j, float(rho[j - 1]), float(rho_bar[j - 1]), float(band))
             for j in range(1, max_lag + 1)],
        )
        write_manifest(os.path.join(out_dir, "whiteness_manifest.json"), report)
    return report
