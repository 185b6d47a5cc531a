import json
import shutil
import time

import pytest

from flutterbayes import pipeline
from flutterbayes.aeroelastic import SystemParameters
from flutterbayes.cli import main
from flutterbayes.config import (
    ExperimentConfig,
    dump_config,
    dump_system,
    load_config,
    parse_config,
    parse_system,
)
from flutterbayes.errors import ConfigError, MissingArtifacts
from flutterbayes.inference import MCMCConfig

TINY = """\
[experiment]
seeds = 0
n_mc = 400

[sampler]
n_steps = 3000
n_burn = 1000
adapt_start = 500
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg_path = root / "tiny.ini"
    cfg_path.write_text(TINY)
    out = root / "out"
    assert main(["run-all", "--config", str(cfg_path), "--out", str(out)]) == 0
    return cfg_path, out


# --- Configuration -----------------------------------------------------------


def test_config_round_trip():
    cfg = ExperimentConfig(seeds=(3, 4), regimes=("flat", "joint"), noise_rms_fraction=0.05,
                           sampler=MCMCConfig(n_steps=1234, n_burn=34))
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_digest_ignores_formatting(tmp_path):
    a = parse_config("[experiment]\nseeds = 1, 2\n")
    b = parse_config("# comment\n[experiment]\n  seeds   =1,2\n\n[system]\nm = 50.0\n")
    assert a.digest() == b.digest()
    assert a.digest() != parse_config("[experiment]\nseeds = 1\n").digest()


def test_digest_ignores_output_dir():
    assert ExperimentConfig(output_dir="a").digest() == ExperimentConfig(output_dir="b").digest()


@pytest.mark.parametrize("text,field", [
    ("[experiment]\nairspeed_fractions = 0.5, 1.2\n", "experiment.airspeed_fractions"),
    ("[experiment]\nregimes = flat, bogus\n", "experiment.regimes"),
    ("[experiment]\nbogus = 1\n", "experiment.bogus"),
    ("[system]\nm = -3\n", "system"),
    ("[system]\nmass = 3\n", "system.mass"),
    ("[sampler]\nn_steps = ten\n", "sampler.n_steps"),
    ("[sampler]\nn_steps = 10\nn_burn = 20\n", "sampler"),
    ("[wrong]\nx = 1\n", "unknown config sections"),
    ("not an ini file", "malformed"),
])
def test_field_level_errors(text, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(text)


def test_empty_regimes_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(regimes=())


def test_system_text_round_trip():
    p = SystemParameters(m=51.5, a_h=-0.4, apply_span_scaling=False)
    assert parse_system(dump_system(p)) == p
    assert parse_system(dump_system(p)) == parse_system(dump_system(parse_system(dump_system(p))))


def test_stage_seeds_independent():
    cfg = ExperimentConfig()
    seeds = {cfg.stage_seed(stage, s, i) for stage in ("data", "prior", "chain") for s in (0, 1) for i in (0, 1)}
    assert len(seeds) == 12
    assert cfg.stage_seed("data", 0, 1) == ExperimentConfig().stage_seed("data", 0, 1)


# --- CLI ---------------------------------------------------------------------


def test_baseline_command(tmp_path, capsys):
    start = time.perf_counter()
    assert main(["baseline", "--out", str(tmp_path)]) == 0
    assert time.perf_counter() - start < 1.0
    summary = json.loads((tmp_path / "baseline" / "baseline.json").read_text())
    assert summary["flutter_speed"] == pytest.approx(54.01, abs=0.05)
    assert summary["quadratic_fit"]["n_points"] == 5
    assert abs(summary["quadratic_fit"]["flutter_speed"] - 54.01) > 0.5
    assert "flutter_speed" in capsys.readouterr().out


def test_malformed_config_exits_2_without_files(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nairspeed_fractions = 2.0\n")
    out = tmp_path / "out"
    assert main(["run-all", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()
    assert "experiment.airspeed_fractions" in capsys.readouterr().err
    assert main(["baseline", "--config", str(tmp_path / "missing.ini"), "--out", str(out)]) == 2
    assert not out.exists()


def test_report_on_empty_dir(tmp_path):
    with pytest.raises(MissingArtifacts):
        pipeline.report(tmp_path)
    assert main(["report", "--out", str(tmp_path)]) == 3


def test_stage_failure_exit_code(tmp_path, tiny_config, capsys):
    assert main(["predict", "--config", str(tiny_config), "--out", str(tmp_path)]) == 3
    assert "predict" in capsys.readouterr().err


def test_run_all_layout(tiny_run):
    _, out = tiny_run
    seed = out / "seed_0"
    for regime in ("flat", "independent", "joint"):
        assert (seed / "infer" / regime / "chain.csv").exists()
        assert (seed / "predict" / f"{regime}_summary.json").exists()
    assert (seed / "predict" / "prior_only_summary.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {f for stage in manifest["stages"].values() for f in stage["files"]}
    emitted = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}
    assert emitted - listed == {"manifest.json"}
    assert listed <= emitted


def test_report_rows_and_idempotence(tiny_run, capsys):
    _, out = tiny_run
    first = (out / "report.txt").read_text()
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "report.txt").read_text() == first
    csv_rows = (out / "report.csv").read_text().splitlines()[1:]
    assert sorted(r.split(",")[1] for r in csv_rows) == ["flat", "independent", "joint", "prior_only"]
    assert "COV%" in capsys.readouterr().out


def test_rerun_byte_identical(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    other = tmp_path / "again"
    assert main(["run-all", "--config", str(cfg_path), "--out", str(other)]) == 0
    for path in (out / "seed_0" / "predict").iterdir():
        assert path.read_bytes() == (other / "seed_0" / "predict" / path.name).read_bytes()
    assert (out / "report.csv").read_bytes() == (other / "report.csv").read_bytes()


def test_stage_isolation_resume(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    work = tmp_path / "work"
    shutil.copytree(out, work)
    shutil.rmtree(work / "seed_0" / "infer")
    data_before = (work / "seed_0" / "data" / "record_0.csv").stat().st_mtime_ns
    assert main(["run-all", "--config", str(cfg_path), "--out", str(work)]) == 0
    for regime in ("flat", "independent", "joint"):
        rel = f"seed_0/infer/{regime}/chain.csv"
        assert (work / rel).read_bytes() == (out / rel).read_bytes()
    assert (work / "seed_0" / "data" / "record_0.csv").stat().st_mtime_ns == data_before


def test_flat_only_regime_skips_monte_carlo(tmp_path, tiny_config):
    out = tmp_path / "flat"
    assert main(["run-all", "--config", str(tiny_config), "--out", str(out), "--regime", "flat"]) == 0
    prior_dir = out / "seed_0" / "prior"
    assert sorted(p.name for p in prior_dir.iterdir()) == ["prior_flat.json"]
    assert (out / "seed_0" / "predict" / "flat_summary.json").exists()
    assert not (out / "seed_0" / "predict" / "prior_only_summary.json").exists()


def test_individual_stages(tmp_path, tiny_config):
    args = ["--config", str(tiny_config), "--out", str(tmp_path)]
    for command in ("baseline", "gen-data", "build-prior", "infer", "predict"):
        assert main([command, *args]) == 0, command
    assert main(["report", "--out", str(tmp_path)]) == 0


def test_load_config_file(tiny_config):
    cfg = load_config(tiny_config)
    assert cfg.sampler.n_steps == 3000 and cfg.seeds == (0,) and cfg.n_mc == 400
