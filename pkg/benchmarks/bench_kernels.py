"""Compare the compiled and pure-Python kernel backends.

Times each kernel on inputs shaped like an ML-100k MF/LightGCN batch
(B=2048, H=32, F=32) and, with ``--data``, one full training epoch per
backend (each in a fresh interpreter so the backend switch takes effect).

    python benchmarks/bench_kernels.py [--data data/ml-100k.tsv] [--repeat 20]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
import scipy.sparse as sp

from pdnsrec import _fallback

try:
    from pdnsrec import _kernels
except ImportError:  # extension not built
    _kernels = None

EPOCH_SNIPPET = """
import time
from pdnsrec import kernels
from pdnsrec.experiment import load_config, load_dataset, build_model
cfg = load_config(None, dict(data={data!r}, model={model!r}, strategy='DNS', H=32, epochs=1))
ds = load_dataset(cfg)
from pdnsrec.training import Trainer
t = Trainer(ds, build_model(cfg, ds), cfg.sampler_config(), cfg.loss_config(), lr=cfg.lr)
t.run_epoch(1)
start = time.perf_counter()
t.run_epoch(2)
print(kernels.BACKEND, time.perf_counter() - start)
"""


def make_inputs(seed=0, n_users=943, n_items=1682, B=2048, H=32, F=32):
    rng = np.random.default_rng(seed)
    lists = [np.unique(rng.integers(0, n_items, rng.integers(20, 200))) for _ in range(n_users)]
    indptr = np.concatenate([[0], np.cumsum([len(x) for x in lists])]).astype(np.int64)
    excluded = np.concatenate(lists).astype(np.int64)
    local = np.concatenate([np.arange(len(x)) for x in lists])
    shifted = excluded - local
    users = rng.integers(0, n_users, B).astype(np.int64)
    n_elig = n_items - np.diff(indptr)[users]
    ranks = (rng.random((B, H)) * n_elig[:, None]).astype(np.int64)
    U = rng.normal(size=(n_users, F))
    I = rng.normal(size=(n_items, F))
    n = n_users + n_items
    A = sp.random(n, n, density=2e5 / n**2, random_state=seed, format="csr")
    return dict(
        users=users, ranks=ranks, indptr=indptr, shifted=shifted, n_items=n_items,
        U=U, I=I, scores=rng.normal(size=(256, n_items)), A=A, X=rng.normal(size=(n, F)),
        rows=rng.integers(0, n_items, 2 * B), vals=rng.normal(size=(2 * B, F)),
    )


def kernel_cases(impl, d):
    cands = _fallback.map_ranks(d["users"], d["ranks"], d["indptr"], d["shifted"], d["n_items"])
    out = np.zeros_like(d["I"])
    A = d["A"]
    return {
        "map_ranks": lambda: impl.map_ranks(d["users"], d["ranks"], d["indptr"], d["shifted"], d["n_items"]),
        "select_hardest": lambda: impl.select_hardest(d["users"], cands, d["U"], d["I"]),
        "topk_rows": lambda: impl.topk_rows(d["scores"], 50),
        "scatter_add_rows": lambda: impl.scatter_add_rows(out, d["rows"], d["vals"]),
        "csr_matmul": lambda: impl.csr_matmul(A.indptr, A.indices, A.data, d["X"]),
    }


def bench_kernels(repeat: int) -> list[tuple[str, float, float]]:
    d = make_inputs()
    py = kernel_cases(_fallback, d)
    cy = kernel_cases(_kernels, d) if _kernels is not None else {}
    rows = []
    for name, fn in py.items():
        t_py = min(timeit.repeat(fn, number=1, repeat=repeat))
        t_cy = min(timeit.repeat(cy[name], number=1, repeat=repeat)) if name in cy else float("nan")
        rows.append((name, t_py, t_cy))
    return rows


def bench_epoch(data: str, model: str) -> dict[str, float]:
    times = {}
    for backend in ("python", "cython"):
        env = dict(os.environ, PDNSREC_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, "-c", EPOCH_SNIPPET.format(data=data, model=model)],
            env=env, capture_output=True, text=True, check=True,
        )
        name, seconds = proc.stdout.split()
        times[name] = float(seconds)
    return times


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", help="dataset for the full-epoch comparison")
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, t_py, t_cy in bench_kernels(args.repeat):
        print(f"{name:<18}{1e3 * t_py:>12.3f}{1e3 * t_cy:>12.3f}{t_py / t_cy:>10.2f}")
    if args.data:
        for model in ("MF", "LightGCN"):
            times = bench_epoch(args.data, model)
            line = "  ".join(f"{k} {v:.2f} s" for k, v in times.items())
            print(f"epoch {model:<9}{line}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
