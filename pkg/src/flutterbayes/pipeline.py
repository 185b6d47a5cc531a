"""Experiment stages and their on-disk layout.

::

    OUT/baseline/                 deterministic study (seed independent)
    OUT/seed_<s>/data/            record_<j>.csv + .json sidecars
    OUT/seed_<s>/prior/           prior_samples.csv, prior_<regime>.json
    OUT/seed_<s>/infer/<regime>/  chain.csv, manifest.json, diagnostics.json
    OUT/seed_<s>/predict/         <regime>_{samples,kde}.csv, <regime>_summary.json
    OUT/manifest.json             run manifest
    OUT/report.txt, report.csv    consolidated report

Every stage reads its inputs from the files written by earlier stages.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .aeroelastic import deterministic_flutter_speed, modal_curve
from .config import ExperimentConfig, dump_config
from .errors import MissingArtifacts
from .inference import (
    InferenceProblem,
    chain_diagnostics,
    read_chain,
    run_chain,
    write_chain,
    write_manifest,
)
from .margin import (
    fit_quadratic,
    flutter_margin,
    flutter_speed_from_quadratic,
    margin_points,
    write_margin_csv,
)
from .prediction import posterior_from_chain, prior_only_flutter_speed, write_posterior
from .prior import (
    GaussianModalPrior,
    draw_structural_samples,
    fit_prior,
    propagate_modal,
    read_prior,
    read_prior_samples,
    write_prior,
    write_prior_samples,
)
from .signal_model import (
    default_time_grid,
    envelope_from_initial_condition,
    read_record,
    synthesize_record,
    write_record,
)

log = logging.getLogger(__name__)

STAGES = ("baseline", "gen-data", "build-prior", "infer", "predict")


class StageFailure(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def seed_dir(out: Path, seed: int) -> Path:
    return Path(out) / f"seed_{seed}"


def flight_test_speeds(cfg: ExperimentConfig) -> tuple[float, list[float]]:
    U_f = deterministic_flutter_speed(cfg.system, cfg.flutter_bracket)
    return U_f, [f * U_f for f in cfg.airspeed_fractions]


# --------------------------------------------------------------------------
# Stages


def baseline(cfg: ExperimentConfig, out) -> list[Path]:
    """Deterministic flutter speed, modal/margin curves and the 5-point quadratic fit."""
    d = Path(out) / "baseline"
    d.mkdir(parents=True, exist_ok=True)
    U_f = deterministic_flutter_speed(cfg.system, cfg.flutter_bracket)

    grid = np.linspace(0.0, 1.1 * U_f, 221)
    curve = modal_curve(cfg.system, grid)
    curve_path = d / "modal_curve.csv"
    with open(curve_path, "w", newline="") as fh:
        fh.write("U,omega_1,beta_1,omega_2,beta_2,F\n")
        for sol in curve:
            F = flutter_margin(sol).F
            fh.write(",".join(f"{v:.17g}" for v in (sol.U, *sol.as_array(), F)) + "\n")

    fit_speeds = np.linspace(0.5, 0.7, 5) * U_f
    points = margin_points(modal_curve(cfg.system, fit_speeds))
    fit = fit_quadratic(points)
    points_path = d / "margin_points.csv"
    write_margin_csv(points_path, points)
    summary_path = d / "baseline.json"
    _dump_json(summary_path, {
        "flutter_speed": U_f,
        "quadratic_fit": {"B2": fit.B2, "B3": fit.B3, "n_points": len(points),
                          "airspeeds": fit_speeds.tolist(),
                          "flutter_speed": flutter_speed_from_quadratic(fit)},
    })
    return [summary_path, curve_path, points_path]


def gen_data(cfg: ExperimentConfig, out, seed: int) -> list[Path]:
    d = seed_dir(out, seed) / "data"
    d.mkdir(parents=True, exist_ok=True)
    _, speeds = flight_test_speeds(cfg)
    t = default_time_grid(cfg.n_samples, cfg.sample_rate)
    files = []
    for j, U in enumerate(speeds):
        env, modal = envelope_from_initial_condition(cfg.system, U, cfg.h0, cfg.alpha0, cfg.measured_dof)
        rec = synthesize_record(env, modal, t, cfg.noise_rms_fraction, cfg.stage_seed("data", seed, j))
        rec.meta.update({
            "a_1": env.a_1, "a_2": env.a_2, "b_1": env.b_1, "b_2": env.b_2,
            "omega_1": modal.omega_1, "beta_1": modal.beta_1,
            "omega_2": modal.omega_2, "beta_2": modal.beta_2,
            "dof": cfg.measured_dof,
        })
        path = d / f"record_{j}.csv"
        write_record(rec, path)
        files += [path, path.with_suffix(".json")]
    return files


def load_records(out, seed: int) -> list:
    d = seed_dir(out, seed) / "data"
    paths = sorted(d.glob("record_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise MissingArtifacts([str(d / "record_*.csv")])
    return [read_record(p) for p in paths]


def build_prior(cfg: ExperimentConfig, out, seed: int) -> list[Path]:
    d = seed_dir(out, seed) / "prior"
    d.mkdir(parents=True, exist_ok=True)
    _, speeds = flight_test_speeds(cfg)
    files = []
    gaussian = [r for r in cfg.regimes if r != "flat"]
    samples = None
    if gaussian:
        draws = draw_structural_samples(cfg.uncertainty, cfg.n_mc, cfg.stage_seed("prior", seed))
        samples = propagate_modal(draws, speeds)
        path = d / "prior_samples.csv"
        write_prior_samples(samples, path)
        files.append(path)
        _dump_json(d / "prior_mc.json", {"n_rejected": draws.n_rejected, "n_dropped": samples.n_dropped,
                                         "n_mc": samples.n_mc})
        files.append(d / "prior_mc.json")
    for regime in cfg.regimes:
        if regime == "flat":
            prior = GaussianModalPrior("flat", speeds)
        else:
            prior = fit_prior(samples, regime)
        path = d / f"prior_{regime}.json"
        write_prior(prior, path)
        files.append(path)
    return files


def _infer_one(cfg: ExperimentConfig, out, seed: int, regime: str) -> list[Path]:
    records = load_records(out, seed)
    prior_path = seed_dir(out, seed) / "prior" / f"prior_{regime}.json"
    if not prior_path.exists():
        raise MissingArtifacts([str(prior_path)])
    prior = read_prior(prior_path)
    problem = InferenceProblem(records, prior)
    sampler = dataclasses.replace(cfg.sampler, seed=cfg.stage_seed("chain", seed, cfg.sampler.seed))
    chain = run_chain(problem, sampler)
    d = seed_dir(out, seed) / "infer" / regime
    d.mkdir(parents=True, exist_ok=True)
    write_chain(chain, d / "chain.csv")
    write_manifest(d / "manifest.json", sampler, problem, chain, extra={"seed": seed})
    diag = chain_diagnostics(chain)
    _dump_json(d / "diagnostics.json", diag)
    return [d / "chain.csv", d / "manifest.json", d / "diagnostics.json"]


def infer(cfg: ExperimentConfig, out, seed: int, regimes=None, threads: int = 1) -> list[Path]:
    regimes = list(regimes or cfg.regimes)
    if threads > 1 and len(regimes) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_infer_one, [cfg] * len(regimes), [out] * len(regimes),
                                    [seed] * len(regimes), regimes))
    else:
        results = [_infer_one(cfg, out, seed, r) for r in regimes]
    return [p for files in results for p in files]


def predict(cfg: ExperimentConfig, out, seed: int, regimes=None) -> list[Path]:
    base = seed_dir(out, seed)
    d = base / "predict"
    _, speeds = flight_test_speeds(cfg)
    files = []
    for regime in regimes or cfg.regimes:
        chain_dir = base / "infer" / regime
        if not (chain_dir / "chain.csv").exists():
            raise MissingArtifacts([str(chain_dir / "chain.csv")])
        manifest = json.loads((chain_dir / "manifest.json").read_text())
        chain = read_chain(chain_dir / "chain.csv", manifest["acceptance_rate"], speeds)
        post = posterior_from_chain(chain, speeds)
        files += write_posterior(post, d, stem=regime)
    prior_samples = base / "prior" / "prior_samples.csv"
    if prior_samples.exists():
        post = prior_only_flutter_speed(read_prior_samples(prior_samples))
        files += write_posterior(post, d, stem="prior_only")
    return files


# --------------------------------------------------------------------------
# Manifest, orchestration, report


def _versions() -> dict:
    return {"flutterbayes": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def update_manifest(cfg: ExperimentConfig, out, stage: str, files, seconds: float) -> Path:
    out = Path(out)
    path = out / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {}
    if manifest.get("config_sha256") != cfg.digest():
        manifest = {"config_sha256": cfg.digest(), "stages": {}}
    manifest["versions"] = _versions()
    manifest["stages"][stage] = {
        "files": sorted(str(Path(f).relative_to(out)) for f in files),
        "wall_clock_s": round(seconds, 3),
    }
    (out / "config.ini").write_text(dump_config(cfg))
    manifest["stages"]["config"] = {"files": ["config.ini"]}
    _dump_json(path, manifest)
    return path


def _register_report(out: Path, files) -> None:
    path = out / "manifest.json"
    if not path.exists():
        return
    manifest = json.loads(path.read_text())
    manifest["stages"]["report"] = {"files": sorted(str(Path(f).relative_to(out)) for f in files)}
    _dump_json(path, manifest)


def _stage_outputs_exist(out: Path, stage: str) -> bool:
    path = out / "manifest.json"
    if not path.exists():
        return False
    entry = json.loads(path.read_text()).get("stages", {}).get(stage)
    return bool(entry) and all((out / f).exists() for f in entry["files"])


def run_stage(cfg: ExperimentConfig, out, stage: str, seed=None, regimes=None, threads: int = 1,
              resume: bool = False) -> list[Path]:
    out = Path(out)
    label = stage if seed is None else f"{stage}[seed={seed}]"
    if resume and _stage_outputs_exist(out, label):
        log.info("skipping %s (outputs present)", label)
        return []
    start = time.perf_counter()
    try:
        if stage == "baseline":
            files = baseline(cfg, out)
        elif stage == "gen-data":
            files = gen_data(cfg, out, seed)
        elif stage == "build-prior":
            files = build_prior(cfg, out, seed)
        elif stage == "infer":
            files = infer(cfg, out, seed, regimes, threads)
        elif stage == "predict":
            files = predict(cfg, out, seed, regimes)
        else:
            raise ValueError(f"unknown stage {stage!r}")
    except Exception as exc:
        raise StageFailure(stage, exc) from exc
    update_manifest(cfg, out, label, files, time.perf_counter() - start)
    return files


def run_all(cfg: ExperimentConfig, out, threads: int = 1, resume: bool = True) -> list[Path]:
    files = run_stage(cfg, out, "baseline", resume=resume)
    for seed in cfg.seeds:
        for stage in STAGES[1:]:
            files += run_stage(cfg, out, stage, seed=seed, threads=threads, resume=resume)
    files += report(out)
    return files


def collect_results(out) -> list[dict]:
    """One row per (seed, posterior) found under ``out``."""
    out = Path(out)
    rows = []
    for sdir in sorted(out.glob("seed_*"), key=lambda p: int(p.name.split("_")[1])):
        seed = int(sdir.name.split("_")[1])
        for summary in sorted((sdir / "predict").glob("*_summary.json")):
            name = summary.name[: -len("_summary.json")]
            s = json.loads(summary.read_text())
            diag_path = sdir / "infer" / name / "diagnostics.json"
            acc = tau = float("nan")
            if diag_path.exists():
                diag = json.loads(diag_path.read_text())
                acc = diag["acceptance_rate"]
                taus = [c["tau"] for c in diag["coordinates"].values() if c["tau"] == c["tau"]]
                tau = float(np.max(taus)) if taus else float("nan")
            rows.append({
                "seed": seed, "posterior": name, "map": s["map"], "cov_percent": s["cov_percent"],
                "mean": s["mean"], "std": s["std"],
                "map_minus_3sd": s["box"]["map_minus_3sd"], "q1": s["box"]["q1"],
                "q3": s["box"]["q3"], "map_plus_3sd": s["box"]["map_plus_3sd"],
                "retained_fraction": 1.0 - s["rejected_fraction"],
                "acceptance_rate": acc, "max_tau": tau,
            })
    return rows


REPORT_COLUMNS = ("seed", "posterior", "map", "cov_percent", "mean", "std", "map_minus_3sd", "q1",
                  "q3", "map_plus_3sd", "retained_fraction", "acceptance_rate", "max_tau")


def report(out) -> list[Path]:
    out = Path(out)
    rows = collect_results(out)
    if not rows:
        missing = [str(out / "seed_*/predict/*_summary.json")]
        raise MissingArtifacts(missing)
    baseline_path = out / "baseline" / "baseline.json"
    base = json.loads(baseline_path.read_text()) if baseline_path.exists() else None

    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(f"{r[c]:.10g}" if isinstance(r[c], float) else str(r[c])
                              for c in REPORT_COLUMNS) + "\n")

    lines = ["Flutter-speed posterior report", ""]
    if base:
        lines.append(f"deterministic flutter speed: {base['flutter_speed']:.4f} m/s")
        lines.append(f"5-point quadratic-fit root:  {base['quadratic_fit']['flutter_speed']:.4f} m/s")
        lines.append("")
    header = f"{'seed':>4}  {'posterior':<12} {'MAP':>9} {'COV%':>8} {'-3sd':>9} {'Q1':>9} {'Q3':>9} {'+3sd':>9} {'kept':>6} {'acc':>6} {'tau':>7}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in rows:
        lines.append(
            f"{r['seed']:>4}  {r['posterior']:<12} {r['map']:9.3f} {r['cov_percent']:8.4f} "
            f"{r['map_minus_3sd']:9.3f} {r['q1']:9.3f} {r['q3']:9.3f} {r['map_plus_3sd']:9.3f} "
            f"{r['retained_fraction']:6.3f} {r['acceptance_rate']:6.3f} {r['max_tau']:7.1f}"
        )
    txt_path = out / "report.txt"
    txt_path.write_text("\n".join(lines) + "\n")
    _register_report(out, [txt_path, csv_path])
    return [txt_path, csv_path]
