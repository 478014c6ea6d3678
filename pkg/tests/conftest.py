import sys

import numpy as np
import pytest
import torch

from colalab.glyphsynth import CorpusConfig, generate_corpus


def small_corpus_config(**overrides):
    cfg = CorpusConfig(num_classes=40, num_primitives=10, train_samples=3, test_samples=2,
                       num_templates=3, splits=("char:24:16", "comp:3"))
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(small_corpus_config())


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
