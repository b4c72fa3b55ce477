import numpy as np
import pytest

from hyobscure.dataset import Dataset

# acceptance lines, collected by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


def random_dataset(rng, n_users, n_values, dim=2, values=None):
    """Small dataset whose private values are 0..n_values-1 (all present)."""
    if values is None:
        values = np.concatenate([np.arange(n_values),
                                 rng.integers(0, n_values, n_users - n_values)])
        rng.shuffle(values)
    return Dataset(
        user_ids=tuple(f"u{i}" for i in range(n_users)),
        features=rng.normal(size=(n_users, dim)),
        private_values=tuple(int(v) for v in values),
    )


def random_tensor(rng, G, C, W, power=2.0):
    P = rng.random((G, C, W)) ** power
    return P / P.sum()


def random_dist(rng, C, dim=2):
    pts = rng.normal(size=(C, dim))
    return np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))


def random_blocks(rng, G, C):
    b = rng.random((G, C, C)) + 0.05
    return b / b.sum(axis=2, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
