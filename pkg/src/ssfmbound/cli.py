"""Command-line entry point.

Exit status: 0 success, 1 a verification check failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import dump
from .capacity import MissingTrajectoryError, capacity_bound, spectral_efficiency_report
from .config import ConfigError, ExperimentConfig, load
from .engine import (
    PropagationSpecs,
    UnsupportedConfigurationError,
    linear_step,
    noise_step,
    nonlinear_step,
    propagate,
)
from .field import (
    ChannelParams,
    ConfigurationError,
    Ensemble,
    as_array,
    energy,
    generate_input,
    proper_gaussian,
    stream,
)
from .lab import (
    CheckRecord,
    check_amplitude_preservation,
    check_diagonal_preserved,
    check_energy_ledger,
    check_invertibility,
    check_noise_statistics,
    check_trace_conservation,
    max_entropy_gap,
    verify_conditional_entropy,
    verify_epi,
    verify_nonlinear_entropy_preservation,
)
from .mi import estimate_mi

log = logging.getLogger("ssfmbound")

SWEEP_COLUMNS = ["snr_db", "bound_bits", "W_hz", "se_B", "se_W", "se_W0", "mi_estimate_bits"]
MI_COLUMNS = ["snr_db", "mi_bits_per_sample", "bound_bits_per_sample"]

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def fmt(x) -> str:
    """17 significant digits, round-trip exact for float64."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isinf(f):
            return "unbounded" if f > 0 else "-unbounded"
        if math.isnan(f):
            return None
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


def _setup(cfg: ExperimentConfig):
    cfg.validate()
    return cfg.build_grid(), cfg.build_params(), cfg.build_specs()


def _launch(cfg: ExperimentConfig, grid, E0, seed, realizations=None):
    i = cfg.input
    kw = {"tone_bin": i.tone_bin}
    if i.num_symbols:
        kw["num_symbols"] = i.num_symbols
    if i.kind == "bandlimited-gaussian":
        kw["band"] = (i.band_lo, i.band_hi)
    m = cfg.run.realizations if realizations is None else realizations
    try:
        return generate_input(i.kind, E0, grid, seed=seed, realizations=m, **kw)
    except ConfigurationError as exc:
        raise ConfigError(f"[input] {exc}") from exc


# -- subcommands -------------------------------------------------------------

def cmd_propagate(cfg: ExperimentConfig, out_dir: str) -> dict:
    grid, params, specs = _setup(cfg)
    seed = cfg.run.seed
    E0 = cfg.input_energy()
    x = _launch(cfg, grid, E0, seed)
    t0 = time.perf_counter()
    rec = propagate(x, params, grid, specs, seed=seed,
                    retain_trajectory=cfg.run.retain_trajectory, workers=cfg.run.workers)
    elapsed = time.perf_counter() - t0
    e_in, e_out = energy(rec.input), energy(rec.output)
    summary = {
        "seed": seed,
        "block_size": rec.block_size,
        "realizations": int(np.size(e_in)),
        "num_samples": grid.num_samples,
        "num_steps": grid.num_steps,
        "E0": E0,
        "mean_input_energy": float(np.mean(e_in)),
        "mean_output_energy": float(np.mean(e_out)),
        "expected_output_energy": E0 + params.total_noise_energy(grid),
        "noise_energy": params.total_noise_energy(grid),
    }
    formats = _formats(cfg)
    if "dump" in formats:
        dump.write_record(os.path.join(out_dir, "trajectory.bin"), rec, grid.num_steps)
    if "json" in formats:
        write_json(os.path.join(out_dir, "summary.json"), summary)
    # timings vary run to run, so they live apart from the deterministic outputs
    write_json(os.path.join(out_dir, "timings.json"), {"propagate_seconds": elapsed})
    log.info("propagated %d realizations in %.2f s", summary["realizations"], elapsed)
    return summary


def run_verification(cfg: ExperimentConfig) -> list:
    grid, params, specs = _setup(cfg)
    seed = cfg.run.seed
    E0 = cfg.input_energy()
    L = grid.num_samples
    m = cfg.run.realizations
    records = []

    x = _launch(cfg, grid, E0, seed)
    xa = np.atleast_2d(as_array(x))
    small = Ensemble(xa[: min(m, 1000)], 0)

    # deterministic per-realization conservation
    after_nl = nonlinear_step(small, specs.nonlinear, grid.delta_z, params.gamma)
    after_lin = linear_step(after_nl, specs.linear, grid, params)
    records.append(check_amplitude_preservation(small, after_nl))
    records.extend(check_trace_conservation(small, after_nl, after_lin))

    try:
        records.append(check_invertibility(small, params, grid, specs))
    except UnsupportedConfigurationError as exc:
        records.append(CheckRecord("round_trip_inverse", math.inf, 1e-9, False, {"error": str(exc)}))

    if params.has_loss:
        skip = {"skipped": True, "reason": "loss profile configured"}
        records.append(CheckRecord("energy_ledger", 0.0, 0.0, True, skip))
    else:
        rec = propagate(x, params, grid, specs, seed=seed, workers=cfg.run.workers)
        records.append(check_energy_ledger(rec.output, E0, params, grid))
        big = Ensemble(xa, 0)
        records.append(check_diagonal_preserved(
            big, nonlinear_step(big, specs.nonlinear, grid.delta_z, params.gamma)))

    if params.n_ase > 0 and params.noise_profile is None:
        zeros = np.zeros((m, L), dtype=complex)
        n = noise_step(zeros, params, grid, stream(seed, "verify-noise"))
        records.extend(check_noise_statistics(n, params.step_noise_variance(grid)))

    if L <= 4 and not params.has_loss:
        records.extend(_entropy_checks(cfg, grid, params, specs, E0))
    return records


def _entropy_checks(cfg, grid, params, specs, E0):
    me = cfg.run.entropy_realizations
    k = cfg.run.knn_k
    seed = cfg.run.seed
    L = grid.num_samples
    out = [
        verify_nonlinear_entropy_preservation(
            params, grid, me, num_samples=L, power=E0 / L, spec=specs.nonlinear, k=k, seed=seed
        )
    ]
    g = generate_input("iid-gaussian", E0, grid, seed=seed, realizations=me)
    quiet = ChannelParams(beta2=params.beta2, beta3=params.beta3, gamma=params.gamma,
                          n_ase=0.0, b_n=params.b_n)
    signal = as_array(propagate(g, quiet, grid, specs).output)
    if params.n_ase > 0:
        total_noise = params.total_noise_energy(grid) / L
        n = proper_gaussian(stream(seed, "verify-epi"), signal.shape, total_noise)
        out.append(verify_epi(signal, n, k=k, seed=seed))
        rec = propagate(g, params, grid, specs, seed=seed)
        report = max_entropy_gap(rec.output, k=k, seed=seed)
        out.extend(report.records)
        launch = as_array(g)[0]
        out.append(verify_conditional_entropy(params, grid, specs, launch, me, k=k, seed=seed))
    return out


def cmd_verify(cfg: ExperimentConfig, out_dir: str) -> list:
    records = run_verification(cfg)
    with open(os.path.join(out_dir, "verify.jsonl"), "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(_jsonable(r.as_dict()), sort_keys=True) + "\n")
    return records


def cmd_bound(cfg: ExperimentConfig, out_dir: str):
    grid, params, specs = _setup(cfg)
    E0 = cfg.input_energy()
    x = _launch(cfg, grid, E0, cfg.run.seed)
    rec = propagate(x, params, grid, specs, seed=cfg.run.seed, track_spectrum=True,
                    workers=cfg.run.workers)
    report = spectral_efficiency_report(rec, E0, params, grid, cfg.run.epsilon)
    if "json" in _formats(cfg):
        write_json(os.path.join(out_dir, "report.json"), report.as_dict())
    return report


def cmd_mi(cfg: ExperimentConfig, out_dir: str) -> dict:
    grid, params, specs = _setup(cfg)
    E0 = cfg.input_energy()
    row = _mi_row(cfg, grid, params, specs, E0)
    formats = _formats(cfg)
    if "csv" in formats:
        with open(os.path.join(out_dir, "mi.csv"), "w", encoding="utf-8") as fh:
            fh.write(csv_text(MI_COLUMNS, [row]))
    if "json" in formats:
        write_json(os.path.join(out_dir, "mi.json"), row)
    return row


def _mi_row(cfg, grid, params, specs, E0, est=None):
    est = est or estimate_mi(params, grid, specs, E0, cfg.run.realizations, seed=cfg.run.seed,
                             workers=cfg.run.workers)
    bound = capacity_bound(E0, params, grid)
    return {
        "snr_db": 10 * math.log10(est.snr) if est.snr > 0 else -math.inf,
        "mi_bits_per_sample": est.per_sample_bits,
        "mi_standard_error": est.standard_error,
        "bound_bits_per_sample": bound / grid.num_samples,
    }


def sweep_rows(cfg: ExperimentConfig, snr_list_db) -> list:
    """One row per SNR point; every point reuses the master seed (common random numbers)."""
    grid, params, specs = _setup(cfg)
    if not snr_list_db:
        raise ConfigError("sweep needs a nonempty SNR list (--snr-db or [run] snr_db)")
    noise = params.total_noise_energy(grid)
    if noise <= 0:
        raise ConfigError("[channel] sweep needs n_ase > 0 to define SNR")
    seed = cfg.run.seed
    rows = []
    for snr_db in snr_list_db:
        E0 = noise * 10 ** (snr_db / 10)
        x = _launch(cfg, grid, E0, seed)
        rec = propagate(x, params, grid, specs, seed=seed, track_spectrum=True,
                        workers=cfg.run.workers)
        report = spectral_efficiency_report(rec, E0, params, grid, cfg.run.epsilon)
        est = estimate_mi(params, grid, specs, E0, cfg.run.realizations, seed=seed,
                          workers=cfg.run.workers)
        rows.append({
            "snr_db": snr_db,
            "bound_bits": report.bound_bits_total,
            "W_hz": report.max_bandwidth,
            "se_B": report.spectral_efficiency["sim-bandwidth"],
            "se_W": report.spectral_efficiency["max-bandwidth"],
            "se_W0": report.spectral_efficiency["input-bandwidth"],
            "mi_estimate_bits": grid.num_samples * est.per_sample_bits,
            "mi_standard_error_bits": grid.num_samples * est.standard_error,
        })
    return rows


def cmd_sweep(cfg: ExperimentConfig, out_dir: str, snr_list_db=None) -> str:
    snrs = list(snr_list_db) if snr_list_db else cfg.snr_list()
    text = csv_text(SWEEP_COLUMNS, sweep_rows(cfg, snrs))
    with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def _formats(cfg) -> set:
    return {f.strip() for f in cfg.output.formats.split(",") if f.strip()}


# -- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssfmbound",
        description="Split-step Fourier channel simulator with invariant checks and capacity bounds.",
        epilog="exit status: 0 ok, 1 check failed, 2 configuration error",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("propagate", "run the split-step cascade and dump fields"),
        ("verify", "run the invariant checks"),
        ("bound", "evaluate the capacity bound and spectral efficiencies"),
        ("sweep", "bound and MI floor over a list of SNRs"),
        ("mi", "estimate the auxiliary-channel MI lower bound"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides [run] seed)")
        p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
        if name == "sweep":
            p.add_argument("--snr-db", type=float, nargs="+", default=None,
                           help="SNR points in dB (overrides [run] snr_db)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.run.seed = args.seed
        out_dir = args.out or cfg.output.dir
        if not os.path.isabs(out_dir) and args.out is None:
            out_dir = os.path.join(cfg.base_dir, out_dir)
        os.makedirs(out_dir, exist_ok=True)

        if args.command == "propagate":
            summary = cmd_propagate(cfg, out_dir)
            print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
        elif args.command == "verify":
            records = cmd_verify(cfg, out_dir)
            for r in records:
                print(r.as_line())
            failed = [r for r in records if not r.passed]
            if failed:
                print(f"{len(failed)} check(s) failed", file=sys.stderr)
                return EXIT_CHECK_FAILED
        elif args.command == "bound":
            report = cmd_bound(cfg, out_dir)
            print(json.dumps(_jsonable(report.as_dict()), indent=2, sort_keys=True))
            bad = report.check()
            if bad:
                print(f"report invariants violated: {bad}", file=sys.stderr)
                return EXIT_CHECK_FAILED
        elif args.command == "sweep":
            sys.stdout.write(cmd_sweep(cfg, out_dir, args.snr_db))
        elif args.command == "mi":
            row = cmd_mi(cfg, out_dir)
            sys.stdout.write(csv_text(MI_COLUMNS, [row]))
    except (ConfigError, ConfigurationError, MissingTrajectoryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
