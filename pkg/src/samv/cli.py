"""Command-line entry point: ``samv {simulate,estimate,sweep,rdimage,selftest}``.

Exit codes: 0 success, 1 runtime failure, 2 usage, config or input error.
Outputs go to ``--out`` or to ``$SAMV_OUTPUT_ROOT/<command>-<config name>``
(default root ``runs``), always with a ``manifest.json``.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .amv import IterationControl, amv_estimate
from .array import DomainError, sample_covariance, synthesize_snapshots
from .baselines import iaa_estimate, music_pseudospectrum, per_estimate
from .harness import ESTIMATORS, run_sweep
from .io import (
    ConfigError,
    ParseError,
    RunManifest,
    parse_rd_config,
    parse_scenario_config,
    parse_sweep_config,
    read_snapshots,
    read_toml,
    sha256_file,
    truth_record,
    write_csv,
    write_json,
    write_peaks,
    write_rd_image,
    write_snapshots,
    write_spectrum,
)
from .peaks import pick_peaks
from .rd import detected_targets, rd_image, sidelobe_level_db
from .selftest import run_all
from .sml import samv_sml_estimate
from .sparse import SamvVariant, samv_estimate

log = logging.getLogger("samv")

OUTPUT_ROOT_ENV = "SAMV_OUTPUT_ROOT"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _run_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        out = root / f"{command}-{Path(args.config).stem}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, command: str, config_text: str, seed) -> RunManifest:
    return RunManifest(command=command, argv=list(args.argv), config_path=str(args.config), config_text=config_text, seed=seed)


def _finite_or_none(values):
    return [v if math.isfinite(v) else None for v in values]


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg, text = read_toml(args.config)
    sc = parse_scenario_config(cfg)
    out = _run_dir(args, "simulate")
    t0 = time.perf_counter()
    Y = synthesize_snapshots(sc.scenario)
    man = _manifest(args, "simulate", text, sc.scenario.seed)
    man.outputs = [
        write_snapshots(out / "snapshots.csv", Y).name,
        write_json(out / "truth.json", truth_record(sc.scenario)).name,
    ]
    man.wall_seconds = time.perf_counter() - t0
    man.write(out)
    print(out / "snapshots.csv")
    return EXIT_OK


# -- estimate -----------------------------------------------------------------


def _estimate(name: str, sc, dictionary, Y, R_N):
    """Spectrum, noise, trace dict and peak (angles, powers) for one estimator."""
    control = sc.control
    count = sc.num_sources or 1
    trace_info: dict = {}
    noise = None
    if name == "per":
        spectrum = per_estimate(dictionary, R_N)
    elif name == "iaa":
        spectrum = iaa_estimate(dictionary, Y)
    elif name == "music":
        spectrum = music_pseudospectrum(dictionary, R_N, count)
    elif name in ("amv", "samv0", "samv1", "samv2"):
        if name == "amv":
            state, trace = amv_estimate(dictionary, R_N, control, nonuniform=sc.nonuniform)
        else:
            state, trace = samv_estimate(SamvVariant.parse(name), dictionary, R_N, control, nonuniform=sc.nonuniform)
        spectrum, noise = state.powers, state.noise
        if trace.breakdown:
            log.warning("%s drove every power and the noise to zero; returning the last usable iterate", name)
        trace_info = {
            "iterations": trace.iterations_used,
            "converged": trace.converged,
            "loaded_iterations": trace.loaded_iterations,
            "breakdown": trace.breakdown,
            "ml_cost": _finite_or_none(trace.ml_cost),
        }
    else:
        method = name.removesuffix("-sml")
        init, trace = samv_estimate(SamvVariant.SAMV2, dictionary, R_N, control)
        res = samv_sml_estimate(dictionary, R_N, count, method, control, init=init)
        trace_info = {
            "initial_iterations": trace.iterations_used,
            "initial_converged": trace.converged,
            "ml_cost": _finite_or_none(trace.ml_cost),
            "iterations": res.sweeps,
            "converged": res.converged,
            "refinement_cost": [list(c) for c in res.cost_history],
            "initial_angles_deg": res.initial_angles,
        }
        order = np.argsort(res.angles)
        return init.powers, res.sigma, trace_info, (res.angles[order], res.powers[order])
    pick = pick_peaks(spectrum, dictionary.grid, count)
    if pick.padded:
        log.warning("spectrum has fewer than %d local maxima; peaks list is padded", count)
    order = np.argsort(pick.angles)
    trace_info["peaks_padded"] = pick.padded
    return spectrum, noise, trace_info, (pick.angles[order], spectrum[pick.indices][order])


def cmd_estimate(args) -> int:
    name = args.estimator.lower()
    if name not in ESTIMATORS:
        raise UsageError(f"unknown estimator {args.estimator!r}; valid names: {', '.join(ESTIMATORS)}")
    cfg, text = read_toml(args.config)
    sc = parse_scenario_config(cfg)
    Y = read_snapshots(args.data)
    if Y.shape[0] != sc.scenario.geometry.num_sensors:
        raise ParseError(f"{args.data}: {Y.shape[0]} sensors in data, config has {sc.scenario.geometry.num_sensors}")
    out = _run_dir(args, f"estimate-{name}")
    t0 = time.perf_counter()
    dictionary = sc.grid.build(sc.scenario)
    R_N = sample_covariance(Y)
    spectrum, noise, trace_info, (angles, powers) = _estimate(name, sc, dictionary, Y, R_N)
    trace_info["estimator"] = name
    trace_info["noise"] = None if noise is None else np.asarray(noise).tolist()
    man = _manifest(args, "estimate", text, None)
    man.inputs = {str(args.data): sha256_file(args.data)}
    man.outputs = [
        write_spectrum(out / "spectrum.csv", dictionary.grid, spectrum).name,
        write_peaks(out / "peaks.csv", angles, powers).name,
        write_json(out / "trace.json", trace_info).name,
    ]
    man.wall_seconds = time.perf_counter() - t0
    man.write(out)
    print(out / "peaks.csv")
    return EXIT_OK


# -- sweep --------------------------------------------------------------------


def cmd_sweep(args) -> int:
    cfg, text = read_toml(args.config)
    if args.trials is not None:
        cfg.setdefault("sweep", {})["trials"] = args.trials
    config = parse_sweep_config(cfg)
    out = _run_dir(args, "sweep")
    t0 = time.perf_counter()

    def progress(msg):
        print(msg, file=sys.stderr, flush=True)

    result = run_sweep(config, threads=args.threads, progress=progress)
    snr = config.snr_list
    summary = write_csv(
        out / "summary.csv",
        "sweep-summary",
        ("estimator", "snr_db", "total_mse_deg2", "crb_deg2", "mean_power_bias", "trials", "failures"),
        ((r.estimator, r.snr_db, r.total_mse_deg2, r.crb_deg2, r.mean_power_bias, r.trials, r.failures) for r in result.rows),
    )
    trials = write_csv(
        out / "trials.csv",
        "sweep-trials",
        ("estimator", "snr_db", "trial", "angles_deg", "powers", "padded", "error"),
        (
            (
                r.estimator,
                snr[r.snr_index],
                r.trial,
                ";".join(repr(float(a)) for a in r.angles),
                ";".join(repr(float(p)) for p in r.powers),
                int(r.padded),
                r.error,
            )
            for r in result.records
        ),
    )
    timing = write_csv(
        out / "timing.csv",
        "sweep-timing",
        ("estimator", "snr_db", "seconds"),
        ((r.estimator, r.snr_db, r.seconds) for r in result.rows),
    )
    errors = sum(1 for r in result.records if r.error)
    man = _manifest(args, "sweep", text, config.base_seed)
    man.outputs = [summary.name, trials.name, timing.name]
    man.failures = {
        "errored_trials": errors,
        "padded_trials": sum(1 for r in result.records if r.padded),
        "by_estimator": {r.estimator + f"@{r.snr_db:g}dB": r.failures for r in result.rows if r.failures},
    }
    man.wall_seconds = time.perf_counter() - t0
    man.write(out)
    print(summary)
    if errors == len(result.records):
        log.error("every trial failed")
        return EXIT_RUNTIME
    return EXIT_OK


# -- rdimage ------------------------------------------------------------------


def cmd_rdimage(args) -> int:
    cfg, text = read_toml(args.config)
    rc = parse_rd_config(cfg)
    out = _run_dir(args, "rdimage")
    t0 = time.perf_counter()
    grid = rc.scene.grid()
    y = rc.scene.observe(grid)
    targets = list(rc.scene.targets)
    outputs = [
        write_csv(
            out / "observation.csv", "rd-observation", ("sample", "real", "imag"), ((n, v.real, v.imag) for n, v in enumerate(y))
        ).name
    ]
    sidecar = {
        "targets": [{"range_bin": t.delay, "doppler_bin": t.doppler, "power_db": t.power_db} for t in targets],
        "floor_db": rc.floor_db,
        "code_length": rc.scene.code_length,
        "noise_db": rc.scene.noise_db,
        "seed": rc.scene.seed,
        "methods": {},
    }
    for method in rc.methods:
        print(f"imaging with {method}", file=sys.stderr, flush=True)
        image = rd_image(method, grid, y, rc.control, targets)
        outputs.append(write_rd_image(out / f"image_{method}.csv", image.power_db).name)
        found = detected_targets(image, targets, rc.floor_db)
        sidecar["methods"][method] = {
            "detected": found,
            "detected_count": int(sum(found)),
            "sidelobe_db": sidelobe_level_db(image, targets),
        }
    outputs.append(write_json(out / "scene.json", sidecar).name)
    man = _manifest(args, "rdimage", text, rc.scene.seed)
    man.outputs = outputs
    man.wall_seconds = time.perf_counter() - t0
    man.write(out)
    print(out / "scene.json")
    return EXIT_OK


# -- selftest -----------------------------------------------------------------


def cmd_selftest(args) -> int:
    results = run_all(args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samv", description="SAMV array processing estimators and experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="cap on sweep worker processes (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, out=True):
        p.add_argument("--config", required=True, help="TOML config file")
        if out:
            p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<command>-<config>)")
        return p

    p = with_config(sub.add_parser("simulate", help="synthesize snapshots from a scenario config"))
    p.set_defaults(func=cmd_simulate)

    p = with_config(sub.add_parser("estimate", help="run one estimator on a snapshot CSV"))
    p.add_argument("--data", required=True, help="snapshot CSV written by 'simulate'")
    p.add_argument("--estimator", required=True, help=f"one of: {', '.join(ESTIMATORS)}")
    p.set_defaults(func=cmd_estimate)

    p = with_config(sub.add_parser("sweep", help="Monte Carlo MSE sweep over SNR"))
    p.add_argument("--trials", type=int, help="override the trial count in the config")
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("rdimage", help="range-Doppler imaging of a target scene"))
    p.set_defaults(func=cmd_rdimage)

    p = sub.add_parser("selftest", help="run the oracle and identity suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("samv: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParseError) as exc:
        print(f"samv: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, np.linalg.LinAlgError, OSError) as exc:
        print(f"samv: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
