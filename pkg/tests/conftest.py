import os
import sys
from pathlib import Path

import numpy as np
import pytest

from corereplay import make_synthetic_stream, write_idx

sys.path.insert(0, str(Path(__file__).parent))

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def _find(directory: Path, name: str):
    for cand in (directory / name, directory / (name + ".gz")):
        if cand.exists():
            return cand
    return None


def _mnist_subset(out: Path) -> dict:
    # 5,000 genuine MNIST digits bundled with mlxtend: 400 train / 100 test per class
    mlxtend_data = pytest.importorskip("mlxtend.data")
    X, y = mlxtend_data.mnist_data()
    X = X.astype(np.uint8).reshape(-1, 28, 28)
    train, test = [], []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        train.extend(idx[:400])
        test.extend(idx[400:])
    train, test = np.sort(train), np.sort(test)
    paths = {name: out / name for name in MNIST_FILES}
    write_idx(X[train], y[train], paths[MNIST_FILES[0]], paths[MNIST_FILES[1]])
    write_idx(X[test], y[test], paths[MNIST_FILES[2]], paths[MNIST_FILES[3]])
    return {"paths": paths, "origin": "mlxtend 5k subset"}


@pytest.fixture(scope="session")
def mnist(tmp_path_factory):
    """IDX paths for split-MNIST: the official files under $MNIST_DIR if set,
    otherwise a real-digit subset written from mlxtend's bundled sample."""
    env = os.environ.get("MNIST_DIR")
    if env:
        found = {name: _find(Path(env), name) for name in MNIST_FILES}
        if all(found.values()):
            return {"paths": found, "origin": f"official MNIST at {env}"}
    return _mnist_subset(tmp_path_factory.mktemp("mnist"))


@pytest.fixture(scope="session")
def official_mnist_dir():
    env = os.environ.get("MNIST_DIR")
    if not env or _find(Path(env), MNIST_FILES[0]) is None:
        pytest.skip("set MNIST_DIR to the official MNIST files to run this check")
    return Path(env)


@pytest.fixture(scope="session")
def small_stream():
    return make_synthetic_stream(num_tasks=2, classes_per_task=2, dim=8, samples_per_class=50, seed=7)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} -- {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
