import sys

import numpy as np
import pytest

from uwenhance import datasets


def pytest_terminal_summary(terminalreporter):
    """Echo acceptance verdicts past output capture, one line per criterion."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None) if module else None
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)


def make_corpus(directory, count=3, size=32, seed=0):
    """Write a tiny RGB-D corpus: <stem>.png + <stem>_depth.npy."""
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        img = rng.random((size, size, 3)) * 0.8 + 0.1
        depth = rng.random((size, size)) * 3.0
        datasets.save_image(str(directory / f"scene{i}.png"), img)
        np.save(str(directory / f"scene{i}_depth.npy"), depth)
    return directory


def make_real_pool(directory, count=3, size=32, seed=99):
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        datasets.save_image(str(directory / f"real{i}.png"), rng.random((size, size, 3)))
    return directory


@pytest.fixture
def corpus_dir(tmp_path):
    return make_corpus(tmp_path / "corpus")


@pytest.fixture
def real_pool_dir(tmp_path):
    return make_real_pool(tmp_path / "pool")
