import os
from pathlib import Path

import numpy as np
import pytest

from defrag.data import Dataset, find_split_files, load_idx

DATA_DIR = os.environ.get("DEFRAG_DATA_DIR", "")
FIXTURES = Path(__file__).parent / "data"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-scale training criteria")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def dataset_root(name):
    root = Path(DATA_DIR) / name if DATA_DIR else None
    if root is None or not root.exists():
        pytest.skip(f"set DEFRAG_DATA_DIR to a directory containing {name}/")
    return root


@pytest.fixture(scope="session")
def mnist():
    root = dataset_root("mnist")
    train = load_idx(*find_split_files(root, "train"), name="mnist", split="train")
    test = load_idx(*find_split_files(root, "test"), name="mnist", split="test")
    return train, test


@pytest.fixture(scope="session")
def fashion():
    root = dataset_root("fashion_mnist")
    train = load_idx(*find_split_files(root, "train"), name="fashion_mnist", split="train")
    test = load_idx(*find_split_files(root, "test"), name="fashion_mnist", split="test")
    return train, test


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def synthetic_digits(n, seed=0):
    """Separable fake 28x28 images: class c lights up a distinct 4x4 patch."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    rng.shuffle(labels)
    images = rng.uniform(0, 0.2, size=(n, 1, 28, 28))
    for i, c in enumerate(labels):
        r, col = divmod(int(c), 5)
        images[i, 0, 4 + 10 * r : 8 + 10 * r, 2 + 5 * col : 6 + 5 * col] = 1.0
    return Dataset(images, labels.astype(np.int64), "synthetic", "train")


@pytest.fixture(scope="session")
def synthetic():
    return synthetic_digits(120, seed=0), synthetic_digits(40, seed=1)


# -- acceptance summary ----------------------------------------------------

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
