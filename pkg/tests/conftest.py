from dataclasses import replace

import numpy as np
import pytest

from scenemotion.config import load_config
from scenemotion.pipeline import load_features, train_from_features
from scenemotion.synthetic import make_tone_corpus


@pytest.fixture(scope="session")
def tone_corpus(tmp_path_factory):
    """90-clip synthetic corpus on disk; returns the manifest path."""
    return make_tone_corpus(tmp_path_factory.mktemp("corpus"), per_class=30, seed=11)


@pytest.fixture(scope="session")
def base_config(tone_corpus, tmp_path_factory):
    cfg = load_config(None, seed=3)
    return replace(cfg, manifest=str(tone_corpus), out_dir=str(tmp_path_factory.mktemp("out")))


@pytest.fixture(scope="session")
def tone_features(base_config):
    return load_features(base_config)


@pytest.fixture(scope="session")
def trained(tone_features, base_config):
    return train_from_features(tone_features, base_config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
