import datetime as dt

import pytest

from newsload.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def small_synth():
    """Two years of planted data, small enough for unit tests."""
    config = SynthConfig(start=dt.date(2019, 1, 1), end=dt.date(2020, 12, 31), seed=7)
    return generate(config)


SMALL_CONFIG = """\
seed: 3
synth: {start: "2019-01-01", end: "2020-12-31"}
features:
  wordfreq_threshold: {title: 100, description: 200, body: 1000}
  topics:
    candidates: {title: [4, 8], description: [6], body: [6]}
    sweeps: 60
    burn_in: 30
    infer_sweeps: 20
    infer_burn_in: 10
model: {grid_search: false, n_trees: 30, repeats: 2}
explain: {lime_days: 3, lime_samples: 500, max_features: 3, nuisance: {n_trees: 30}}
"""

PIPELINE = ("synth", "features", "select", "train", "evaluate", "explain", "report")


def run_all(config_path, out, jobs=1, stages=PIPELINE):
    from newsload.cli import main

    for stage in stages:
        rc = main([stage, "--config", str(config_path), "--out", str(out), "--jobs", str(jobs)])
        assert rc == 0, f"stage {stage} exited with {rc}"
    return out


@pytest.fixture(scope="session")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.yaml"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def small_run(small_config, tmp_path_factory):
    """A complete pipeline run on the small synthetic fixture."""
    return run_all(small_config, tmp_path_factory.mktemp("run") / "out")
