"""Multi-seed training runs, sweeps, and the seed-level statistics pipeline.

One epoch is ``ceil(1 / q)`` steps, i.e. one expected pass over the data under
Poisson sampling.

Files written by ``run``, per (label, seed) pair:

* ``<label>__seed<seed>.log.csv``   columns ``LOG_COLUMNS``, one row per evaluation
* ``<label>__seed<seed>.final.csv`` columns ``FINAL_COLUMNS``, one row

``summarize`` and ``report`` only read those files, so every table can be
regenerated from saved logs.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .accountant import Accountant
from .core import ConfigError, MechanismConfig, PrivacyConfig, Rng
from .data import DatasetSpec, build_dataset
from .mechanism import ALGORITHMS, mechanism_for, noise_ratio, run_mechanism
from .model import Mlp
from .sampling import DatasetHandle

log = logging.getLogger(__name__)

LOG_COLUMNS = ("algorithm", "seed", "epoch", "test_accuracy", "mean_loss", "epsilon", "elapsed_seconds")
FINAL_COLUMNS = (
    "algorithm", "seed", "final_accuracy", "best_accuracy", "final_loss", "final_epsilon", "runtime_seconds",
)
TIMING_COLUMNS = ("elapsed_seconds", "runtime_seconds")
SUMMARY_COLUMNS = ("algorithm", "metric", "n", "mean", "std", "ci_low", "ci_high", "note")
SUMMARY_METRICS = ("final_accuracy", "best_accuracy", "final_loss", "final_epsilon")
SWEEP_AXES = ("beta", "alpha", "K", "variant")


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "fo_dp_sgd"
    label: str = ""
    mechanism: MechanismConfig = field(default_factory=MechanismConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    eta: float = 0.8
    eta_post: float | None = None
    epochs: int = 10
    eval_every: int = 1
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    hidden: tuple[int, ...] = (64, 32)
    output_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not self.label:
            object.__setattr__(self, "label", self.algorithm)
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.eta_post is not None and not self.eta_post >= 0:
            raise ConfigError(f"eta_post must be >= 0, got {self.eta_post}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative integer, got {self.epochs}")
        if int(self.eval_every) != self.eval_every or self.eval_every < 1:
            raise ConfigError(f"eval_every must be a positive integer, got {self.eval_every}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for s in self.seeds:
            if int(s) != s or not 0 <= s < 2**64:
                raise ConfigError(f"seed must be a 64-bit unsigned integer, got {s!r}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden layer sizes must be positive")

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(1.0 / self.privacy.q)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch


# ---- config files --------------------------------------------------------------

_MECH_KEYS = {f.name for f in dataclasses.fields(MechanismConfig)} - {"memory_variant"}
_PRIV_KEYS = {f.name for f in dataclasses.fields(PrivacyConfig)} - {"steps_T"}
_DATA_KEYS = {f.name for f in dataclasses.fields(DatasetSpec)}
_RUN_KEYS = {"algorithm", "label", "eta", "eta_post", "epochs", "eval_every", "seeds", "hidden", "output_dir"}
CONFIG_KEYS = frozenset(_MECH_KEYS | _PRIV_KEYS | _DATA_KEYS | _RUN_KEYS)


def config_from_dict(d: dict) -> RunConfig:
    """Build a ``RunConfig`` from a flat mapping; unknown keys are an error."""
    unknown = sorted(set(d) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        run = {k: d[k] for k in _RUN_KEYS if k in d}
        for k in ("seeds", "hidden"):
            if k in run:
                run[k] = tuple(run[k])
        mech = MechanismConfig(**{k: d[k] for k in _MECH_KEYS if k in d})
        epochs = run.get("epochs", RunConfig.epochs)
        q = d.get("q", PrivacyConfig.q)
        steps_t = max(1, int(epochs) * math.ceil(1.0 / q)) if 0 < q <= 1 else 1
        priv = PrivacyConfig(steps_T=steps_t, **{k: d[k] for k in _PRIV_KEYS if k in d})
        data = DatasetSpec(**{k: d[k] for k in _DATA_KEYS if k in d})
        return RunConfig(mechanism=mech, privacy=priv, dataset=data, **run)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: RunConfig) -> dict:
    out = {k: getattr(cfg.mechanism, k) for k in sorted(_MECH_KEYS)}
    out.update({k: getattr(cfg.privacy, k) for k in sorted(_PRIV_KEYS)})
    out.update({k: getattr(cfg.dataset, k) for k in sorted(_DATA_KEYS)})
    for k in sorted(_RUN_KEYS):
        v = getattr(cfg, k)
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def load_config(path: str | Path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a single flat JSON object")
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; nested values under {nested}")
    return config_from_dict(raw)


# ---- running ---------------------------------------------------------------------

@dataclass
class RunLog:
    algorithm: str
    seed: int
    rows: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _safe(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=,-]+", "_", label)


def run_paths(out_dir: Path, label: str, seed: int) -> tuple[Path, Path]:
    stem = f"{_safe(label)}__seed{seed}"
    return out_dir / f"{stem}.log.csv", out_dir / f"{stem}.final.csv"


def run_seed(cfg: RunConfig, seed: int, train=None, test=None) -> RunLog:
    """Train one seed and return its log rows (nothing is written)."""
    if train is None:
        train, test = build_dataset(cfg.dataset)
    start = time.perf_counter()
    rng = Rng(seed)
    model = Mlp(train.dim, train.num_classes, cfg.hidden)
    theta0 = model.init_params(rng.stream("init"))
    mech = mechanism_for(cfg.algorithm, cfg.mechanism)
    rho = noise_ratio(cfg.algorithm, mech, cfg.privacy)
    accountant = Accountant(cfg.privacy.delta)
    data = DatasetHandle(train, cfg.privacy.q)
    spe = cfg.steps_per_epoch
    out = RunLog(cfg.label, seed)

    def record(epoch: int, theta) -> None:
        acc, loss = model.evaluate(theta, test.features, test.labels)
        out.rows.append(
            {
                "algorithm": cfg.label,
                "seed": seed,
                "epoch": epoch,
                "test_accuracy": acc,
                "mean_loss": loss,
                "epsilon": accountant.epsilon,
                "elapsed_seconds": round(time.perf_counter() - start, 3),
            }
        )

    def grad_fn(theta, idx):
        return model.batch_grads(theta, train.features[idx], train.labels[idx])

    record(0, theta0)
    step_count = 0

    def on_step(state, rec) -> None:
        nonlocal step_count
        step_count += 1
        accountant.step(cfg.privacy.q, rho)
        if step_count % spe == 0:
            epoch = step_count // spe
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                record(epoch, state.theta)

    run_mechanism(
        cfg.algorithm, theta0, data, grad_fn, mech, cfg.privacy, cfg.eta, cfg.total_steps, rng,
        eta_post=cfg.eta_post, on_step=on_step,
    )
    last = out.rows[-1]
    out.final = {
        "algorithm": cfg.label,
        "seed": seed,
        "final_accuracy": last["test_accuracy"],
        "best_accuracy": max(r["test_accuracy"] for r in out.rows),
        "final_loss": last["mean_loss"],
        "final_epsilon": last["epsilon"],
        "runtime_seconds": round(time.perf_counter() - start, 3),
    }
    return out


def write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run(cfg: RunConfig, output_dir: str | Path | None = None) -> list[RunLog]:
    """Train every seed of ``cfg`` and write its log files."""
    out_dir = Path(output_dir if output_dir is not None else cfg.output_dir)
    train, test = build_dataset(cfg.dataset)
    logs = []
    for seed in cfg.seeds:
        rl = run_seed(cfg, seed, train, test)
        log_path, final_path = run_paths(out_dir, cfg.label, seed)
        write_csv(log_path, LOG_COLUMNS, rl.rows)
        write_csv(final_path, FINAL_COLUMNS, [rl.final])
        log.info("%s seed=%d final_accuracy=%.4f eps=%.3f", cfg.label, seed,
                 rl.final["final_accuracy"], rl.final["final_epsilon"])
        logs.append(rl)
    return logs


def _sweep_config(base: RunConfig, axis: str, value) -> RunConfig:
    if axis == "beta":
        return replace(base, mechanism=replace(base.mechanism, beta=float(value)), label=f"{base.label}[beta={value}]")
    if axis == "alpha":
        return replace(base, mechanism=replace(base.mechanism, alpha=float(value)), label=f"{base.label}[alpha={value}]")
    if axis == "K":
        k = int(value)
        if k != float(value):
            raise ConfigError(f"K must be an integer, got {value!r}")
        return replace(base, mechanism=replace(base.mechanism, memory_window=k), label=f"{base.label}[K={k}]")
    if axis == "variant":
        return replace(base, algorithm=str(value), label=str(value))
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


SWEEP_TABLE_COLUMNS = ("axis", "value", "algorithm", "seed", "epoch", "test_accuracy", "epsilon")


def sweep(base: RunConfig, axis: str, values, output_dir: str | Path | None = None):
    """One run set per axis value, everything else fixed.

    Returns ``(logs_by_value, table_rows)`` and writes ``sweep_<axis>.csv``.
    """
    out_dir = Path(output_dir if output_dir is not None else base.output_dir)
    configs = [(v, _sweep_config(base, axis, v)) for v in values]  # validate all before compute
    results, table = {}, []
    for value, cfg in configs:
        logs = run(cfg, out_dir / _safe(f"{axis}={value}"))
        results[value] = logs
        for rl in logs:
            for row in rl.rows:
                table.append({"axis": axis, "value": value, **{k: row[k] for k in SWEEP_TABLE_COLUMNS[2:]}})
    write_csv(out_dir / f"sweep_{axis}.csv", SWEEP_TABLE_COLUMNS, table)
    return results, table


# ---- statistics ------------------------------------------------------------------

def t_interval(mean: float, std: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Student-t interval ``mean +- t_{(1+level)/2, n-1} * std / sqrt(n)``.

    The quantile comes from ``scipy.stats.t.ppf``.
    """
    if n < 2:
        raise ValueError("a t interval needs at least two observations")
    half = float(stats.t.ppf(0.5 + level / 2.0, n - 1)) * std / math.sqrt(n)
    return mean - half, mean + half


def summarize_values(values) -> dict:
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    mean = float(np.mean(x))
    if n < 2:
        return {"n": n, "mean": mean, "std": None, "ci_low": None, "ci_high": None,
                "note": "fewer than 2 seeds: std and CI undefined"}
    std = float(np.std(x, ddof=1))
    lo, hi = t_interval(mean, std, n)
    return {"n": n, "mean": mean, "std": std, "ci_low": lo, "ci_high": hi, "note": ""}


def _final_files(in_dir: Path) -> list[Path]:
    if not in_dir.is_dir():
        raise FileNotFoundError(f"log directory not found: {in_dir}")
    return sorted(in_dir.rglob("*.final.csv"))


def summarize(in_dir: str | Path, out_path: str | Path | None = None) -> list[dict]:
    """Per-algorithm mean, sample std and 95% t-interval of the final metrics."""
    groups: dict[str, dict[str, list[float]]] = {}
    for path in _final_files(Path(in_dir)):
        for row in read_csv(path):
            g = groups.setdefault(row["algorithm"], {m: [] for m in SUMMARY_METRICS})
            for m in SUMMARY_METRICS:
                g[m].append(float(row[m]))
    rows = []
    for alg in sorted(groups):
        for m in SUMMARY_METRICS:
            s = summarize_values(groups[alg][m])
            if s["std"] is None:
                log.warning("%s/%s: only %d seed(s), reporting the mean only", alg, m, s["n"])
            rows.append({"algorithm": alg, "metric": m, **s})
    if out_path is not None:
        write_csv(Path(out_path), SUMMARY_COLUMNS,
                  [{k: ("" if v is None else v) for k, v in r.items()} for r in rows])
    return rows


REPORTS = {
    "accuracy_vs_epoch.csv": ("series", "seed", "epoch", "test_accuracy"),
    "accuracy_vs_epsilon.csv": ("series", "seed", "epoch", "epsilon", "test_accuracy"),
    "epsilon_vs_epoch.csv": ("series", "seed", "epoch", "epsilon"),
}


def report(in_dir: str | Path, out_dir: str | Path) -> dict[str, Path]:
    """Plot-ready CSVs, rows sorted by (series, seed, epoch)."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"log directory not found: {in_dir}")
    rows = []
    for path in sorted(in_dir.rglob("*.log.csv")):
        for r in read_csv(path):
            rows.append({
                "series": r["algorithm"], "seed": int(r["seed"]), "epoch": int(r["epoch"]),
                "test_accuracy": float(r["test_accuracy"]), "epsilon": float(r["epsilon"]),
            })
    rows.sort(key=lambda r: (r["series"], r["seed"], r["epoch"]))
    written = {}
    for name, cols in REPORTS.items():
        write_csv(out_dir / name, cols, rows)
        written[name] = out_dir / name
    return written
