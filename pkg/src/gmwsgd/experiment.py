"""Experiment harness: run one configuration, compare results, export traces."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import data as datamod
from .baselines import sgd_train, slpso_train
from .config import ALGORITHMS, RunConfig
from .errors import IngestionError, UsageError
from .hybrid import gmw_sgd_train
from .moo import gmw_sgd_moo_train

ALGORITHM_LABELS = {"sgd": "SGD", "slpso": "SL-PSO", "gmw-sgd": "GMW-SGD", "gmw-sgd-moo": "GMW-SGD-MOO"}
TRACE_HEADER = ("eval_index", "best_train_accuracy", "best_fitness")


@dataclass
class RunResult:
    algorithm: str
    seed: int
    train_accuracy: float
    test_accuracy: float
    test_ce: float
    evaluations: int
    phase_counts: dict
    trace: list
    config: dict
    generations: list = field(default_factory=list)
    pareto: Optional[dict] = None
    wall_clock: float = 0.0

    def to_json(self) -> str:
        """Deterministic JSON (wall-clock time is kept out of it)."""
        doc = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "metrics": {
                "train_accuracy": self.train_accuracy,
                "test_accuracy": self.test_accuracy,
                "test_ce": self.test_ce,
            },
            "evaluations": self.evaluations,
            "phase_counts": self.phase_counts,
            "config": self.config,
            "generations": self.generations,
            "trace": [list(row) for row in self.trace],
        }
        if self.pareto is not None:
            doc["pareto"] = self.pareto
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        doc = json.loads(text)
        m = doc["metrics"]
        return cls(
            algorithm=doc["algorithm"], seed=doc["seed"],
            train_accuracy=m["train_accuracy"], test_accuracy=m["test_accuracy"], test_ce=m["test_ce"],
            evaluations=doc["evaluations"], phase_counts=doc["phase_counts"],
            trace=[tuple(r) for r in doc["trace"]], config=doc["config"],
            generations=doc.get("generations", []), pareto=doc.get("pareto"),
        )


def load_result(path) -> RunResult:
    path = Path(path)
    if path.is_dir():
        path = path / "result.json"
    try:
        return RunResult.from_json(path.read_text())
    except OSError as exc:
        raise IngestionError(f"cannot read result {path}: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise IngestionError(f"{path} is not a result document: {exc}") from None


def load_datasets(cfg: RunConfig) -> tuple:
    d = cfg.data
    if d.kind == "cifar10":
        return datamod.load_cifar10(d.path, d.classes)
    ds = datamod.make_blobs(d.n, d.blob_classes, d.dims, d.spread, d.data_seed, d.center_box)
    # split() puts `fraction` in the first part; that part is the test set
    test, train = datamod.split(ds, d.test_fraction, d.data_seed)
    return train, test


def execute(cfg: RunConfig, progress: Optional[Callable[[dict], None]] = None) -> RunResult:
    """Run the configured algorithm without touching the filesystem."""
    train, test = load_datasets(cfg)
    spec = cfg.network_spec(int(np.prod(train.inputs.shape[1:])), train.class_count)
    params = cfg.algo_config()
    started = time.perf_counter()
    pareto = None
    if cfg.algorithm == "sgd":
        _, log = sgd_train(params, spec, train, test, progress)
    elif cfg.algorithm == "slpso":
        _, log = slpso_train(params, spec, train, test, progress)
    elif cfg.algorithm == "gmw-sgd":
        _, log = gmw_sgd_train(params, spec, train, test, progress)
    else:
        report, log = gmw_sgd_moo_train(params, spec, train, test, progress)
        pareto = report.to_dict()
    elapsed = time.perf_counter() - started
    phases = {}
    for r in log.records:
        phases[r.phase] = phases.get(r.phase, 0) + 1
    return RunResult(
        algorithm=cfg.algorithm, seed=cfg.seed,
        train_accuracy=log.final["train_accuracy"], test_accuracy=log.final["test_accuracy"],
        test_ce=log.final["test_ce"], evaluations=log.evaluations, phase_counts=phases,
        trace=log.trace_rows(), config=cfg.to_dict(), generations=log.generations,
        pareto=pareto, wall_clock=elapsed,
    )


def write_result(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(result.to_json())
    trace_export(result, out / "trace.csv")
    (out / "timing.json").write_text(json.dumps({"wall_clock_seconds": result.wall_clock}) + "\n")
    if result.pareto is not None:
        with open(out / "pareto.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["accuracy", "regularizer"])
            for acc, reg in result.pareto["selected"]:
                w.writerow([repr(acc), repr(reg)])
    return out


def run(cfg: RunConfig, progress: Optional[Callable[[dict], None]] = None) -> RunResult:
    """Execute ``cfg`` and write result.json, trace.csv (and pareto.csv) to its out_dir."""
    result = execute(cfg, progress)
    write_result(result, cfg.out_dir)
    return result


def run_repeated(cfg: RunConfig, repeats: int, progress=None) -> tuple:
    """Run seeds ``seed .. seed+repeats-1`` into ``out_dir/seed_<s>``; returns (results, summary)."""
    if repeats < 1:
        raise UsageError("repeat count must be >= 1")
    results = []
    for k in range(repeats):
        seed = cfg.seed + k
        sub = RunConfig(cfg.algorithm, seed, cfg.eval_budget, os.path.join(cfg.out_dir, f"seed_{seed}"),
                        cfg.data, cfg.network, cfg.params)
        results.append(run(sub, progress))
    summary = {"algorithm": cfg.algorithm, "seeds": [r.seed for r in results]}
    for key in ("train_accuracy", "test_accuracy", "test_ce"):
        vals = [getattr(r, key) for r in results]
        summary[key] = {"mean": float(np.mean(vals)), "min": float(min(vals)), "max": float(max(vals))}
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return results, summary


def trace_export(result: RunResult, path) -> None:
    if not result.trace:
        raise UsageError("result has an empty trace")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for idx, acc, fit in result.trace:
            w.writerow([int(idx), repr(float(acc)), repr(float(fit))])


def compare(results: list) -> tuple:
    """Table of train/test accuracy and test CE, rows in SGD, SL-PSO, GMW-SGD order.

    Returns ``(text, csv_text)``; the CSV holds full-precision values.
    """
    if not results:
        raise UsageError("nothing to compare")
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    rows = sorted(results, key=lambda r: (order.get(r.algorithm, len(order)), r.seed))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "seed", "train_accuracy", "test_accuracy", "test_ce"])
    for r in rows:
        w.writerow([r.algorithm, r.seed, repr(r.train_accuracy), repr(r.test_accuracy), repr(r.test_ce)])
    header = f"{'Algorithm':<12} {'Train Accuracy':>15} {'Test Accuracy':>14} {'CE':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{ALGORITHM_LABELS.get(r.algorithm, r.algorithm):<12} {100 * r.train_accuracy:>14.2f}% "
            f"{100 * r.test_accuracy:>13.2f}% {r.test_ce:>8.4f}"
        )
    return "\n".join(lines) + "\n", buf.getvalue()
