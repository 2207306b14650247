from pathlib import Path

import numpy as np
import pytest

from pdnsrec.dataset import InteractionDataset, ingest, split_temporal

ROOT = Path(__file__).resolve().parents[1]
ML100K = ROOT / "data" / "ml-100k.tsv"


def synthetic_lines(n_users, n_items, per_user, seed=0):
    """Tab-separated interaction lines with distinct items per user."""
    rng = np.random.default_rng(seed)
    lines = []
    for u in range(n_users):
        items = rng.choice(n_items, size=per_user, replace=False)
        stamps = rng.integers(0, 10_000, size=per_user)
        lines += [f"u{u}\ti{i}\t{t}" for i, t in zip(items, stamps)]
    return lines


def random_dataset(n_users, n_items, density, seed=0, val=True):
    """Split dataset with random train/val/test sets; every user keeps >= 1 train item."""
    rng = np.random.default_rng(seed)
    pairs, vals, tests = [], [], []
    for u in range(n_users):
        k = max(3, int(density * n_items))
        items = rng.choice(n_items, size=min(k, n_items - 1), replace=False)
        n_te = max(1, len(items) // 5)
        n_va = max(1, len(items) // 5) if val else 0
        tests.append(items[:n_te])
        vals.append(items[n_te:n_te + n_va])
        pairs += [(u, int(i)) for i in items[n_te + n_va:]]
    return InteractionDataset(
        n_users, n_items, np.array(pairs), val=tuple(vals), test=tuple(tests)
    )


@pytest.fixture
def small_ds():
    return random_dataset(10, 20, 0.35, seed=3)


@pytest.fixture
def toy_temporal():
    return split_temporal(ingest(synthetic_lines(12, 40, 15, seed=1)))


@pytest.fixture(scope="session")
def ml100k_path():
    if not ML100K.is_file():
        pytest.fail(f"{ML100K} missing; run scripts/fetch_movielens.py first")
    return ML100K


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
