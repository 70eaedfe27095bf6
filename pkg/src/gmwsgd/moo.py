"""Bi-objective training: maximise accuracy, minimise the sum of squared parameters.

Objectives are stored in minimisation form as rows ``(-accuracy, l2)``.
Ranking and survivor selection follow NSGA-II (fast non-dominated sort plus
crowding distance).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nn
from .data import Dataset
from .errors import UsageError
from .hybrid import (
    FitnessFn,
    GmwConfig,
    SgdState,
    TrainLog,
    evaluate_indices,
    evaluate_model,
    has_budget,
    init_population,
    lr_step,
    refine_leaders,
)
from .metaheuristics import (
    GwoSchedule,
    Population,
    WolfHierarchy,
    compute_a,
    ga_event,
    gwo_step,
    hierarchy_from_order,
)


def dominates(a, b) -> bool:
    """True if ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_nondominated_sort(points) -> list:
    """Partition point indices into fronts; ``fronts[0]`` is non-dominated."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        return []
    le = np.all(pts[:, None, :] <= pts[None, :, :], axis=2)
    lt = np.any(pts[:, None, :] < pts[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append([int(i) for i in current])
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def crowding_distance(front) -> np.ndarray:
    """NSGA-II crowding distance of each point in one front."""
    pts = np.asarray(front, dtype=np.float64)
    n = len(pts)
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for m in range(pts.shape[1]):
        order = np.lexsort((np.arange(n), pts[:, m]))
        vals = pts[order, m]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span > 0:
            dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def rank_and_crowd(points) -> tuple:
    """Per-point front rank and within-front crowding distance."""
    pts = np.asarray(points, dtype=np.float64)
    ranks = np.zeros(len(pts), dtype=int)
    crowd = np.zeros(len(pts))
    for r, front in enumerate(fast_nondominated_sort(pts)):
        ranks[front] = r
        crowd[front] = crowding_distance(pts[front])
    return ranks, crowd


def selection_order(ranks, crowd) -> list:
    """Indices sorted by (rank ascending, crowding descending, index ascending)."""
    return sorted(range(len(ranks)), key=lambda i: (ranks[i], -crowd[i], i))


def select_survivors(points, n: int) -> list:
    """Pick ``n`` indices: whole fronts first, the last one cut by crowding."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < n:
        raise UsageError(f"cannot select {n} survivors from {len(pts)} candidates")
    chosen = []
    for front in fast_nondominated_sort(pts):
        if len(chosen) + len(front) <= n:
            chosen.extend(front)
            continue
        crowd = crowding_distance(pts[front])
        ordered = sorted(range(len(front)), key=lambda k: (-crowd[k], front[k]))
        chosen.extend(front[k] for k in ordered[: n - len(chosen)])
        break
    return chosen


def moo_leaders(ranks, crowd) -> WolfHierarchy:
    if len(ranks) < 4:
        raise UsageError(f"need at least 4 individuals to have omegas, got {len(ranks)}")
    return hierarchy_from_order(selection_order(ranks, crowd), len(ranks))


@dataclass
class ParetoReport:
    """Front-0 (accuracy, regularizer) pairs; ``selected`` are the most crowded-apart."""

    selected: list
    front: list
    test_metrics: list = field(default_factory=list)

    def to_csv(self, path, rows: Optional[list] = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["accuracy", "regularizer"])
            for acc, reg in rows if rows is not None else self.selected:
                w.writerow([repr(acc), repr(reg)])

    def to_dict(self) -> dict:
        return {"selected": [list(p) for p in self.selected], "front": [list(p) for p in self.front],
                "test_metrics": self.test_metrics}


def pareto_report(points, k: int = 6) -> ParetoReport:
    """Distinct front-0 pairs, plus the ``k`` with the highest crowding distance."""
    pts = np.asarray(points, dtype=np.float64)
    uniq = np.unique(pts, axis=0)
    front = uniq[fast_nondominated_sort(uniq)[0]]
    crowd = crowding_distance(front)
    order = sorted(range(len(front)), key=lambda i: (-crowd[i], -front[i, 0]))
    pairs = [(float(-f1), float(f2)) for f1, f2 in front]
    return ParetoReport(
        selected=[pairs[i] for i in order[:k]],
        front=sorted(pairs),
    )


def gmw_sgd_moo_train(cfg: GmwConfig, spec: nn.NetworkSpec, train: Dataset, test: Dataset,
                      progress: Optional[Callable[[dict], None]] = None, report_size: int = 6) -> tuple:
    """GMW-SGD with non-dominated ranking in place of the scalar hierarchy.

    Leaders are the top three by (rank, crowding). SGD still minimises cross
    entropy, and the GA trigger and rates use the cross entropy of the
    omegas. Each generation ends with NSGA-II survivor selection over the
    generation's parents and the updated pack. Returns ``(ParetoReport, TrainLog)``.
    """
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    fitness = FitnessFn(spec, train, cfg.eval_batch)
    fitness.resample(rng)
    pop = init_population(cfg, spec, rng)
    objs = np.zeros((cfg.np, 2))
    evaluate_indices(pop, range(cfg.np), fitness, log, 0, "init", objs)
    ranks, crowd = rank_and_crowd(objs)
    ga = cfg.ga_state()
    sgd = SgdState(cfg.lr0)
    schedule = GwoSchedule(cfg.a_start, cfg.a_end, max(cfg.n_gen * cfg.n_evol, 1))
    step = 0
    for g in range(1, cfg.n_gen + 1):
        fitness.resample(rng)
        parents = pop.copy()
        exhausted = False
        for _ in range(cfg.n_evol):
            if not has_budget(log, cfg.np, cfg.eval_budget):
                exhausted = True
                break
            hier = moo_leaders(ranks, crowd)
            pop = gwo_step(pop, hier, compute_a(step, schedule), rng)
            step += 1
            evaluate_indices(pop, range(cfg.np), fitness, log, g, "gwo", objs)
            ranks, crowd = rank_and_crowd(objs)
            hier = moo_leaders(ranks, crowd)
            ga.observe(float(pop.fitness[list(hier.omegas)].min()))
            if ga.triggered and has_budget(log, len(hier.omegas), cfg.eval_budget):
                pop, _ = ga_event(pop, hier, ga, rng)
                evaluate_indices(pop, hier.omegas, fitness, log, g, "ga", objs)
                ranks, crowd = rank_and_crowd(objs)
        hier = moo_leaders(ranks, crowd)
        if has_budget(log, 3, cfg.eval_budget):
            pop = refine_leaders(pop, hier, train, sgd, cfg, rng, spec, fitness, log, g, objs)
            sgd = lr_step(sgd, float(pop.fitness[list(hier.leaders)].min()), cfg)
        if has_budget(log, cfg.np, cfg.eval_budget):
            # parents were scored on the previous subset; rescore before comparing
            parent_objs = np.zeros((cfg.np, 2))
            evaluate_indices(parents, range(cfg.np), fitness, log, g, "select", parent_objs)
            combined = Population(
                np.vstack([parents.positions, pop.positions]),
                np.concatenate([parents.fitness, pop.fitness]),
            )
            all_objs = np.vstack([parent_objs, objs])
            keep = select_survivors(all_objs, cfg.np)
            pop = Population(combined.positions[keep], combined.fitness[keep])
            objs = all_objs[keep]
        ranks, crowd = rank_and_crowd(objs)
        summary = {"generation": g, "evaluations": log.evaluations, "front_size": int((ranks == 0).sum()),
                   "lr": sgd.lr}
        log.generations.append(summary)
        if progress:
            progress(summary)
        if exhausted:
            break
    report = pareto_report(objs, report_size)
    for i in np.flatnonzero(ranks == 0):
        tr, te, ce = evaluate_model(pop.positions[i], spec, train, test)
        report.test_metrics.append({"train_accuracy": tr, "test_accuracy": te, "test_ce": ce,
                                    "regularizer": nn.l2_regularizer(pop.positions[i])})
    best = max(report.test_metrics, key=lambda m: m["train_accuracy"])
    log.final = {"train_accuracy": best["train_accuracy"], "test_accuracy": best["test_accuracy"],
                 "test_ce": best["test_ce"], "front_size": len(report.front)}
    return report, log
