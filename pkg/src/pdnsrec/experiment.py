"""Configuration-driven runs: single experiments, sweeps and FN simulation.

Configs are flat ``key = value`` text. Every run directory gets the full
resolved config echoed back (``config.echo``) next to ``curve.csv``,
``summary.txt``, the best checkpoint and, on request, ``trace.csv``.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import InteractionDataset, apply_split, load_interactions
from .errors import ConfigError
from .evaluation import EvalConfig
from .losses import LossConfig
from .models import MODES, NormalizedGraph, init_embeddings, save_checkpoint
from .sampling import STRATEGIES, SamplerConfig
from .seeding import STREAM_DISCLOSE, stream
from .training import EpochRecord, TrainResult, Trainer, write_curve

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "FNSimulationResult",
    "SweepResult",
    "SWEEP_AXES",
    "parse_config_text",
    "load_config",
    "load_dataset",
    "build_model",
    "run_experiment",
    "run_fn_simulation",
    "run_sweep",
    "disclosure_subsets",
    "compute_overfit_severity",
]

SPLITS = ("temporal", "fn_synthetic")
SWEEP_AXES = ("H", "alpha", "beta", "strategy")
SUBSET_FRACTION = 0.2
# auto first disclosure: the monitored peak must survive this many epochs
AUTO_PATIENCE = 20


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _parse_first_disclosure(text: str) -> int | None:
    return None if text.strip().lower() == "auto" else int(text)


def _fmt_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    data: str = ""
    split: str = "temporal"
    split_seed: int = 0
    model: str = "MF"
    dim: int = 32
    layers: int = 3
    strategy: str = "DNS"
    H: int = 32
    alpha: float = 0.9
    beta: float = 0.1
    drop_prefactor: bool = True
    lr: float = 0.001
    warm_lr: float | None = None
    lr_after_epoch: int = 0
    reg: float = 0.01
    batch_size: int = 2048
    epochs: int = 300
    eval_every: int = 1
    K: int = 50
    seed: int = 0
    mask_val_on_test: bool = True
    false_coef: float = 0.0
    disclosure_gap: int = 50
    first_disclosure: int | None = None  # None means auto
    trace: bool = False
    out: str = "runs/run"

    def validate(self) -> "ExperimentConfig":
        checks = [
            ("data", bool(self.data), "a dataset path is required"),
            ("split", self.split in SPLITS, f"split must be one of {SPLITS}"),
            ("model", self.model in MODES, f"model must be one of {MODES}"),
            ("dim", self.dim >= 1, "dim must be >= 1"),
            ("layers", self.layers >= 0, "layers must be >= 0"),
            ("strategy", self.strategy in STRATEGIES, f"strategy must be one of {STRATEGIES}"),
            ("H", self.H >= 1, "H must be >= 1"),
            ("alpha", 0.0 <= self.alpha < 1.0, "alpha must lie in [0, 1)"),
            ("beta", 0.0 < self.beta <= 1.0, "beta must lie in (0, 1]"),
            ("lr", self.lr > 0, "lr must be > 0"),
            ("warm_lr", self.warm_lr is None or self.warm_lr > 0, "warm_lr must be > 0"),
            ("lr_after_epoch", self.lr_after_epoch >= 0, "lr_after_epoch must be >= 0"),
            ("reg", self.reg >= 0, "reg must be >= 0"),
            ("batch_size", self.batch_size >= 1, "batch_size must be >= 1"),
            ("epochs", self.epochs >= 0, "epochs must be >= 0"),
            ("eval_every", self.eval_every >= 1, "eval_every must be >= 1"),
            ("K", self.K >= 1, "K must be >= 1"),
            ("false_coef", 0.0 <= self.false_coef <= 1.0, "false_coef must lie in [0, 1]"),
            ("disclosure_gap", self.disclosure_gap >= 1, "disclosure_gap must be >= 1"),
            (
                "first_disclosure",
                self.first_disclosure is None or self.first_disclosure >= 1,
                "first_disclosure must be >= 1 or auto",
            ),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(msg, name)
        return self

    @property
    def loss_kind(self) -> str:
        return "softBPR" if self.strategy == "PDNS_soft" else "BPR"

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(self.strategy, H=self.H, alpha=self.alpha, seed=self.seed)

    def loss_config(self) -> LossConfig:
        beta = self.beta if self.strategy == "PDNS_soft" else 1.0
        return LossConfig(
            self.loss_kind,
            beta=beta,
            reg=self.reg,
            batch_size=self.batch_size,
            drop_prefactor=self.drop_prefactor,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(K=self.K, mask_val_on_test=self.mask_val_on_test)

    def echo(self) -> str:
        return "".join(f"{k} = {_fmt_value(v)}\n" for k, v in asdict(self).items())


_PARSERS = {
    "data": str,
    "split": str,
    "split_seed": int,
    "model": str,
    "dim": int,
    "layers": int,
    "strategy": str,
    "H": int,
    "alpha": float,
    "beta": float,
    "drop_prefactor": _parse_bool,
    "lr": float,
    "warm_lr": _parse_optional_float,
    "lr_after_epoch": int,
    "reg": float,
    "batch_size": int,
    "epochs": int,
    "eval_every": int,
    "K": int,
    "seed": int,
    "mask_val_on_test": _parse_bool,
    "false_coef": float,
    "disclosure_gap": int,
    "first_disclosure": _parse_first_disclosure,
    "trace": _parse_bool,
    "out": str,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}

CONFIG_KEYS = tuple(_PARSERS)


def coerce(key: str, text: str):
    """Typed value for one config key; raises ``ConfigError`` naming the key."""
    if key not in _PARSERS:
        raise ConfigError(f"unknown config key {key!r}", key)
    try:
        return _PARSERS[key](text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value {text.strip()!r} ({exc})", key) from None


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected 'key = value'", None)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {no}: duplicate key {key!r}", key)
        values[key] = coerce(key, value)
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file, then ``overrides`` (already typed or raw strings)."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}", "config") from None
        values.update(parse_config_text(text))
    for key, value in (overrides or {}).items():
        values[key] = coerce(key, value) if isinstance(value, str) else value
    unknown = set(values) - set(CONFIG_KEYS)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {key!r}", key)
    return ExperimentConfig(**values).validate()


@lru_cache(maxsize=8)
def _cached_dataset(path: str, split: str, split_seed: int) -> InteractionDataset:
    return apply_split(load_interactions(path), split, split_seed)


def load_dataset(cfg: ExperimentConfig) -> InteractionDataset:
    if not Path(cfg.data).is_file():
        raise ConfigError(f"dataset file not found: {cfg.data}", "data")
    return _cached_dataset(str(Path(cfg.data).resolve()), cfg.split, cfg.split_seed)


def build_model(cfg: ExperimentConfig, ds: InteractionDataset):
    if cfg.model == "LightGCN":
        graph = NormalizedGraph.from_dataset(ds)
        return init_embeddings(ds.n_users, ds.n_items, cfg.dim, cfg.seed, "LightGCN", cfg.layers, graph)
    return init_embeddings(ds.n_users, ds.n_items, cfg.dim, cfg.seed, "MF")


def compute_overfit_severity(curve, window: int, key: str = "val_recall") -> float | None:
    """Mean drop below the peak over the last ``window`` values, relative to the peak.

    Each value in the final window is compared with the best value seen up
    to and including it, so a non-decreasing curve scores 0; when the peak
    precedes the window this equals ``(peak - mean(last window)) / peak``.
    ``curve`` is a sequence of ``EpochRecord`` (read through ``key``) or of
    plain numbers. Unevaluated epochs (NaN) are ignored. Returns ``None`` when
    the peak is not positive.
    """
    values = np.array(
        [getattr(c, key) if isinstance(c, EpochRecord) else c for c in curve], dtype=np.float64
    )
    values = values[~np.isnan(values)]
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(values) <= window:
        raise ValueError(f"curve of length {len(values)} is not longer than window {window}")
    running = np.maximum.accumulate(values)
    peak = running[-1]
    if not peak > 0:
        return None
    return float((running[-window:] - values[-window:]).mean() / peak)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    curve: list[EpochRecord]
    train: TrainResult
    summary: dict
    out_dir: Path | None


def _summary(cfg: ExperimentConfig, res: TrainResult, seconds: float) -> dict:
    best = res.best_record
    last = res.curve[-1] if res.curve else None
    out = {"monitor": res.monitor, "best_epoch": res.best_epoch}
    for prefix, rec in (("best", best), ("final", last)):
        for name in ("val_recall", "val_ndcg", "test_recall", "test_ndcg"):
            out[f"{prefix}_{name}"] = getattr(rec, name) if rec is not None else math.nan
    window = 30
    key = f"{res.monitor}_recall"
    evaluated = [r for r in res.curve if not math.isnan(getattr(r, key))]
    out["overfit_severity_30"] = (
        compute_overfit_severity(evaluated, window, key) if len(evaluated) > window else None
    )
    out["epochs"] = len(res.curve)
    out["seconds"] = round(seconds, 3)
    return out


def _write_summary(path: Path, cfg: ExperimentConfig, summary: dict, extra: str = "") -> None:
    lines = [f"{k} = {_fmt_value(v)}" for k, v in summary.items()]
    text = "\n".join(lines) + "\n"
    if extra:
        text += extra
    text += "\n# config\n" + cfg.echo()
    path.write_text(text, encoding="utf-8")


def _prepare_out(cfg: ExperimentConfig, out_dir) -> Path | None:
    if out_dir is False:
        return None
    path = Path(cfg.out if out_dir is None else out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.echo").write_text(cfg.echo(), encoding="utf-8")
    return path


def _make_trainer(cfg, ds, trace_fh):
    return Trainer(
        ds,
        build_model(cfg, ds),
        cfg.sampler_config(),
        cfg.loss_config(),
        lr=cfg.lr,
        seed=cfg.seed,
        eval_cfg=cfg.eval_config(),
        warm_lr=cfg.warm_lr,
        lr_after_epoch=cfg.lr_after_epoch,
        trace=trace_fh,
    )


def _finish(cfg, res, out, started, extra="") -> ExperimentResult:
    summary = _summary(cfg, res, time.perf_counter() - started)
    if out is not None:
        write_curve(out / "curve.csv", res.curve)
        save_checkpoint(res.best_model, out / "best.ckpt")
        _write_summary(out / "summary.txt", cfg, summary, extra)
    return ExperimentResult(cfg, res.curve, res, summary, out)


def run_experiment(cfg: ExperimentConfig, out_dir=None, on_epoch_end=None) -> ExperimentResult:
    """Train and evaluate one configuration.

    ``out_dir=None`` writes to ``cfg.out``; ``out_dir=False`` writes nothing.
    """
    cfg.validate()
    ds = load_dataset(cfg)
    out = _prepare_out(cfg, out_dir)
    started = time.perf_counter()
    trace_fh = open(out / "trace.csv", "w", encoding="utf-8") if cfg.trace and out else None
    try:
        trainer = _make_trainer(cfg, ds, trace_fh)
        res = trainer.fit(cfg.epochs, cfg.eval_every, on_epoch_end=on_epoch_end)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    return _finish(cfg, res, out, started)


def disclosure_subsets(ds: InteractionDataset, coef: float, seed: int) -> list[list[np.ndarray]]:
    """Cumulative avoid sets, one per disclosure step.

    Each user's FN items are shuffled once; step ``s`` (1-based) discloses
    the first ``round(min(0.2 s, c) * |FN_u|)`` of them, so the last step
    reaches ``c`` and may be a partial subset.
    """
    n_steps = math.ceil(round(coef / SUBSET_FRACTION, 9))
    rng = stream(seed, STREAM_DISCLOSE)
    orders = [rng.permutation(np.asarray(fn, dtype=np.int64)) for fn in ds.fn_set]
    steps = []
    for s in range(1, n_steps + 1):
        frac = min(SUBSET_FRACTION * s, coef)
        steps.append([np.sort(o[: int(round(frac * len(o)))]) for o in orders])
    return steps


@dataclass
class FNSimulationResult(ExperimentResult):
    disclosures: list[tuple[int, int, int, float]] = field(default_factory=list)


def run_fn_simulation(cfg: ExperimentConfig, out_dir=None, on_epoch_end=None) -> FNSimulationResult:
    """Train on an fn_synthetic split, disclosing FN subsets on a schedule.

    Disclosed items join the sampler's avoid set at the start of their
    epoch. With ``first_disclosure`` unset, the first disclosure happens the
    epoch after the monitored recall peak has stood for 20 epochs.
    """
    cfg.validate()
    if cfg.split != "fn_synthetic":
        raise ConfigError("false-negative simulation needs split = fn_synthetic", "split")
    ds = load_dataset(cfg)
    n_fn = sum(len(f) for f in ds.fn_set)
    if cfg.false_coef > 0 and n_fn == 0:
        raise ConfigError("false_coef > 0 but the false-negative set is empty", "false_coef")
    steps = disclosure_subsets(ds, cfg.false_coef, cfg.seed)
    out = _prepare_out(cfg, out_dir)
    started = time.perf_counter()

    log: list[tuple[int, int, int, float]] = []
    state = {"next": 0, "first": cfg.first_disclosure, "best": -math.inf, "best_epoch": 0}

    def due(epoch: int) -> bool:
        first = state["first"]
        return first is not None and epoch == first + cfg.disclosure_gap * state["next"]

    def start(epoch: int, trainer: Trainer) -> None:
        if state["next"] < len(steps) and due(epoch):
            avoid = steps[state["next"]]
            trainer.sampler.set_avoid(avoid)
            state["next"] += 1
            disclosed = sum(len(a) for a in avoid)
            log.append((epoch, state["next"], disclosed, disclosed / n_fn if n_fn else 0.0))

    def end(rec: EpochRecord, trainer: Trainer) -> None:
        value = rec.monitored(trainer.monitor)
        if not math.isnan(value) and value > state["best"]:
            state["best"], state["best_epoch"] = value, rec.epoch
        if state["first"] is None and rec.epoch - state["best_epoch"] >= AUTO_PATIENCE:
            state["first"] = rec.epoch + 1
        if on_epoch_end is not None:
            on_epoch_end(rec, trainer)

    trace_fh = open(out / "trace.csv", "w", encoding="utf-8") if cfg.trace and out else None
    try:
        trainer = _make_trainer(cfg, ds, trace_fh)
        res = trainer.fit(cfg.epochs, cfg.eval_every, on_epoch_start=start, on_epoch_end=end)
    finally:
        if trace_fh is not None:
            trace_fh.close()

    if out is not None:
        with open(out / "disclosure.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,step,disclosed,fraction\n")
            for epoch, step, disclosed, frac in log:
                fh.write(f"{epoch},{step},{disclosed},{frac!r}\n")
    extra = f"first_disclosure_epoch = {_fmt_value(state['first'])}\ndisclosures = {len(log)}\n"
    base = _finish(cfg, res, out, started, extra)
    base.summary["first_disclosure_epoch"] = state["first"]
    return FNSimulationResult(**vars(base), disclosures=log)


@dataclass
class SweepResult:
    axis: str
    rows: list[dict]

    def write_csv(self, path: str | Path) -> None:
        cols = list(self.rows[0]) if self.rows else [self.axis]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt_value(row[c]) for c in cols) + "\n")


def _sweep_point(args):
    cfg, axis, value, out_dir, simulate = args
    runner = run_fn_simulation if simulate else run_experiment
    res = runner(cfg, out_dir)
    row = {axis: value}
    for key in ("best_epoch", "best_val_recall", "best_val_ndcg", "best_test_recall",
                "best_test_ndcg", "overfit_severity_30"):
        row[key] = res.summary[key]
    row["curve"] = str(out_dir / "curve.csv") if out_dir else ""
    return row


def run_sweep(
    base: ExperimentConfig,
    axis: str,
    values: Sequence,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    simulate: bool = False,
) -> SweepResult:
    """One run per grid value, all sharing ``base``'s seed; writes ``sweep.csv``."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}", "axis")
    if not values:
        raise ConfigError("sweep needs at least one value", "values")
    root = Path(base.out if out_dir is None else out_dir)
    tasks = []
    for value in values:
        value = coerce(axis, value) if isinstance(value, str) else value
        cfg = replace(base, **{axis: value}).validate()
        tasks.append((cfg, axis, value, root / f"{axis}={_fmt_value(value)}", simulate))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    result = SweepResult(axis, rows)
    root.mkdir(parents=True, exist_ok=True)
    result.write_csv(root / "sweep.csv")
    return result
