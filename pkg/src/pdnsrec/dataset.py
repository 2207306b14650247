"""Interaction ingestion and the two split regimes.

Raw logs are tab-separated ``user<TAB>item<TAB>timestamp`` lines. Users and
items get dense indices in order of first appearance. Two splits are
provided:

* ``temporal``: per user, the latest 10% (rounded up) of interactions form the
  test set and the rest is divided 8:1 chronologically into train and
  validation.
* ``fn_synthetic``: per user, a seeded shuffle divides the items 4:1:1 into
  train, test and a held-out false-negative set that the recommender never
  sees as positives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .seeding import STREAM_SPLIT, derive_seed

__all__ = [
    "ParseError",
    "RawInteraction",
    "InteractionDataset",
    "SplitSpec",
    "parse_lines",
    "ingest",
    "load_interactions",
    "split_temporal",
    "split_fn_synthetic",
    "apply_split",
    "export_split",
]


class ParseError(ValueError):
    """Malformed interaction input."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RawInteraction:
    user_id: str
    item_id: str
    timestamp: int


def _empty_sets(n_users: int) -> tuple[np.ndarray, ...]:
    return tuple(np.empty(0, dtype=np.int64) for _ in range(n_users))


@dataclass
class InteractionDataset:
    """Dense-indexed interaction store.

    ``train`` is an ``(n, 2)`` array of ``(user, item)`` index pairs; ``val``,
    ``test`` and ``fn_set`` hold one sorted item-index array per user.
    ``timestamps`` is aligned with ``train`` rows when known (an unsplit
    dataset keeps every record there). ``user_items`` is derived from
    ``train`` and is never passed in.
    """

    n_users: int
    n_items: int
    train: np.ndarray
    val: tuple[np.ndarray, ...] = ()
    test: tuple[np.ndarray, ...] = ()
    fn_set: tuple[np.ndarray, ...] = ()
    timestamps: np.ndarray | None = None
    user_ids: tuple[str, ...] = ()
    item_ids: tuple[str, ...] = ()
    split_mode: str | None = None
    user_items: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=np.int64).reshape(-1, 2)
        for name in ("val", "test", "fn_set"):
            sets = getattr(self, name)
            if len(sets) == 0:
                sets = _empty_sets(self.n_users)
            elif len(sets) != self.n_users:
                raise ValueError(f"{name} must have one entry per user")
            setattr(self, name, tuple(np.unique(np.asarray(s, dtype=np.int64)) for s in sets))
        if self.train.size:
            if self.train[:, 0].min() < 0 or self.train[:, 0].max() >= self.n_users:
                raise ValueError("train user index out of range")
            if self.train[:, 1].min() < 0 or self.train[:, 1].max() >= self.n_items:
                raise ValueError("train item index out of range")
        self.user_items = _group_items(self.train, self.n_users)

    @property
    def n_train(self) -> int:
        return len(self.train)

    def partition_sizes(self) -> dict[str, int]:
        return {
            "train": self.n_train,
            "val": int(sum(len(s) for s in self.val)),
            "test": int(sum(len(s) for s in self.test)),
            "fn": int(sum(len(s) for s in self.fn_set)),
        }

    def has_validation(self) -> bool:
        return any(len(s) for s in self.val)

    def summary(self) -> str:
        sizes = self.partition_sizes()
        return (
            f"users={self.n_users} items={self.n_items} "
            + " ".join(f"{k}={v}" for k, v in sizes.items())
        )


def _group_items(pairs: np.ndarray, n_users: int) -> tuple[np.ndarray, ...]:
    if len(pairs) == 0:
        return _empty_sets(n_users)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    users = pairs[order, 0]
    items = pairs[order, 1]
    bounds = np.searchsorted(users, np.arange(n_users + 1))
    return tuple(
        np.unique(items[bounds[u]:bounds[u + 1]]) for u in range(n_users)
    )


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "temporal"
    test_fraction: float = 0.10
    train_val_ratio: tuple[int, int] = (8, 1)
    fn_ratio: tuple[int, int, int] = (4, 1, 1)

    def __post_init__(self):
        if self.mode not in ("temporal", "fn_synthetic"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if min(self.train_val_ratio) <= 0 or min(self.fn_ratio) <= 0:
            raise ValueError("split ratios must be positive")


def parse_lines(lines: Iterable[str]) -> list[RawInteraction]:
    records = []
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", line_no)
        user, item, ts = (p.strip() for p in parts)
        if not user or not item:
            raise ParseError("empty user or item token", line_no)
        try:
            timestamp = int(ts)
        except ValueError:
            raise ParseError(f"timestamp {ts!r} is not an integer", line_no) from None
        records.append(RawInteraction(user, item, timestamp))
    return records


def ingest(lines: Iterable[str]) -> InteractionDataset:
    """Build an unsplit dataset (every interaction in ``train``).

    Duplicate ``(user, item)`` pairs collapse onto their first appearance and
    keep the earliest timestamp.
    """
    records = parse_lines(lines)
    if not records:
        raise ParseError("no interactions in input")

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    pair_row: dict[tuple[int, int], int] = {}
    pairs: list[tuple[int, int]] = []
    stamps: list[int] = []
    for rec in records:
        u = user_index.setdefault(rec.user_id, len(user_index))
        i = item_index.setdefault(rec.item_id, len(item_index))
        row = pair_row.get((u, i))
        if row is None:
            pair_row[(u, i)] = len(pairs)
            pairs.append((u, i))
            stamps.append(rec.timestamp)
        elif rec.timestamp < stamps[row]:
            stamps[row] = rec.timestamp

    return InteractionDataset(
        n_users=len(user_index),
        n_items=len(item_index),
        train=np.array(pairs, dtype=np.int64),
        timestamps=np.array(stamps, dtype=np.int64),
        user_ids=tuple(user_index),
        item_ids=tuple(item_index),
    )


def load_interactions(path: str | Path) -> InteractionDataset:
    with open(path, encoding="utf-8") as fh:
        return ingest(fh)


def _rows_by_user(ds: InteractionDataset) -> list[np.ndarray]:
    """Row indices of ``ds.train`` per user, in file order."""
    users = ds.train[:, 0]
    order = np.argsort(users, kind="stable")
    bounds = np.searchsorted(users[order], np.arange(ds.n_users + 1))
    return [order[bounds[u]:bounds[u + 1]] for u in range(ds.n_users)]


def split_temporal(ds: InteractionDataset, spec: SplitSpec | None = None) -> InteractionDataset:
    spec = spec or SplitSpec(mode="temporal")
    if spec.mode != "temporal":
        raise ValueError("split_temporal needs a temporal SplitSpec")
    if ds.timestamps is None:
        raise ValueError("temporal split needs timestamps")
    n_tr, n_va = spec.train_val_ratio

    train_rows, val, test = [], [], []
    for u, rows in enumerate(_rows_by_user(ds)):
        if len(rows) == 0:
            raise ValueError(f"user {u} has no interactions")
        # stable sort keeps file order among equal timestamps
        rows = rows[np.argsort(ds.timestamps[rows], kind="stable")]
        n_test = math.ceil(spec.test_fraction * len(rows))
        rest = len(rows) - n_test
        n_val = (rest * n_va) // (n_tr + n_va)
        n_train = rest - n_val
        train_rows.append(rows[:n_train])
        val.append(ds.train[rows[n_train:rest], 1])
        test.append(ds.train[rows[rest:], 1])

    keep = np.sort(np.concatenate(train_rows))
    return InteractionDataset(
        n_users=ds.n_users,
        n_items=ds.n_items,
        train=ds.train[keep],
        val=tuple(val),
        test=tuple(test),
        timestamps=ds.timestamps[keep],
        user_ids=ds.user_ids,
        item_ids=ds.item_ids,
        split_mode="temporal",
    )


def split_fn_synthetic(ds: InteractionDataset, seed: int, spec: SplitSpec | None = None) -> InteractionDataset:
    """Per-user seeded 4:1:1 split into train, test and false negatives.

    Test and FN take ``ceil(n * share)`` items each, the rest goes to train.
    """
    spec = spec or SplitSpec(mode="fn_synthetic")
    if spec.mode != "fn_synthetic":
        raise ValueError("split_fn_synthetic needs an fn_synthetic SplitSpec")
    w_train, w_test, w_fn = spec.fn_ratio
    total = w_train + w_test + w_fn
    rng = np.random.default_rng(derive_seed(seed, STREAM_SPLIT))

    train_rows, test, fn = [], [], []
    for rows in _rows_by_user(ds):
        rows = rows[rng.permutation(len(rows))]
        n = len(rows)
        n_test = -(-n * w_test // total)
        n_fn = -(-n * w_fn // total)
        if n_test + n_fn > n:
            n_fn = max(n - n_test, 0)
        n_train = n - n_test - n_fn
        train_rows.append(rows[:n_train])
        test.append(ds.train[rows[n_train:n_train + n_test], 1])
        fn.append(ds.train[rows[n_train + n_test:], 1])

    keep = np.sort(np.concatenate(train_rows))
    return InteractionDataset(
        n_users=ds.n_users,
        n_items=ds.n_items,
        train=ds.train[keep],
        test=tuple(test),
        fn_set=tuple(fn),
        timestamps=None if ds.timestamps is None else ds.timestamps[keep],
        user_ids=ds.user_ids,
        item_ids=ds.item_ids,
        split_mode="fn_synthetic",
    )


def apply_split(ds: InteractionDataset, mode: str, seed: int = 0) -> InteractionDataset:
    if mode == "temporal":
        return split_temporal(ds, SplitSpec(mode="temporal"))
    if mode == "fn_synthetic":
        return split_fn_synthetic(ds, seed, SplitSpec(mode="fn_synthetic"))
    raise ValueError(f"unknown split mode {mode!r}")


def _write_pairs(path: Path, pairs: Iterable[tuple[int, int]]):
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in pairs:
            fh.write(f"{u}\t{i}\n")


def _set_pairs(sets: Sequence[np.ndarray]):
    for u, items in enumerate(sets):
        for i in items:
            yield u, int(i)


def export_split(ds: InteractionDataset, out_dir: str | Path) -> list[Path]:
    """Write ``train.txt``, ``val.txt``, ``test.txt`` and ``fn.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_sorted = ds.train[np.lexsort((ds.train[:, 1], ds.train[:, 0]))]
    paths = []
    for name, pairs in (
        ("train", map(tuple, train_sorted.tolist())),
        ("val", _set_pairs(ds.val)),
        ("test", _set_pairs(ds.test)),
        ("fn", _set_pairs(ds.fn_set)),
    ):
        path = out_dir / f"{name}.txt"
        _write_pairs(path, pairs)
        paths.append(path)
    return paths
