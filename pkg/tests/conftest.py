"""Shared fixtures.

``desk_run`` executes the full pipeline once per session (three seeds, three
regimes, 5e4-step chains) and is reused by every test that needs posterior
output from the synthetic flight-test experiment.
"""

import json
from pathlib import Path

import pytest

from flutterbayes import pipeline
from flutterbayes.aeroelastic import SystemParameters, deterministic_flutter_speed
from flutterbayes.config import ExperimentConfig
from flutterbayes.inference import MCMCConfig, read_chain

DESK_SEEDS = (0, 1, 2)
REFERENCE_SEED = 0


@pytest.fixture(scope="session")
def nominal():
    return SystemParameters()


@pytest.fixture(scope="session")
def flutter_speed(nominal):
    return deterministic_flutter_speed(nominal)


def desk_config() -> ExperimentConfig:
    return ExperimentConfig(seeds=DESK_SEEDS,
                            sampler=MCMCConfig(n_steps=50_000, n_burn=10_000))


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory) -> tuple[ExperimentConfig, Path]:
    cfg = desk_config()
    out = tmp_path_factory.mktemp("desk")
    pipeline.run_all(cfg, out)
    return cfg, out


@pytest.fixture(scope="session")
def desk_chains(desk_run):
    """``{(seed, regime): PosteriorChain}`` read back from the desk run."""
    cfg, out = desk_run
    chains = {}
    for seed in cfg.seeds:
        for regime in cfg.regimes:
            d = pipeline.seed_dir(out, seed) / "infer" / regime
            manifest = json.loads((d / "manifest.json").read_text())
            chains[seed, regime] = read_chain(d / "chain.csv", manifest["acceptance_rate"],
                                              manifest["airspeeds"])
    return chains


@pytest.fixture(scope="session")
def desk_summaries(desk_run):
    """``{(seed, posterior): summary dict}`` from the predict stage."""
    cfg, out = desk_run
    result = {}
    for seed in cfg.seeds:
        for path in (pipeline.seed_dir(out, seed) / "predict").glob("*_summary.json"):
            result[seed, path.name[: -len("_summary.json")]] = json.loads(path.read_text())
    return result


ACCEPTANCE_RESULTS: dict[int, str] = {}


@pytest.fixture
def verdict(capsys):
    """Print and record one PASS/FAIL line for an acceptance criterion."""

    def emit(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_RESULTS[number] = line
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
