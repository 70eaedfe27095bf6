"""GMW-SGD: grey wolf search with stagnation-triggered GA events and SGD on the leaders."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import nn
from .data import Dataset
from .errors import NumericError, UsageError
from .metaheuristics import (
    GaEventState,
    GwoSchedule,
    Individual,
    Population,
    WolfHierarchy,
    compute_a,
    ga_event,
    gwo_step,
    update_hierarchy,
)

PHASES = ("init", "gwo", "ga", "sgd", "pso", "select")


@dataclass
class GmwConfig:
    np: int = 15
    n_gen: int = 14
    n_evol: int = 10
    n_epoch: int = 2
    lr0: float = 0.01
    lr_factor: float = 0.1
    lr_patience: int = 2
    lr_min: float = 1e-5
    a_start: float = 1.0
    a_end: float = 0.0
    patience: int = 4
    p_mut: float = 0.7
    eta_m: float = 20.0
    rate_worst: float = 0.6
    rate_best: float = 0.1
    x_lower: float = -1.0
    x_upper: float = 1.0
    init_low: float = -0.1
    init_high: float = 0.1
    eval_batch: int = 1024
    batch_size: int = 64
    seed: int = 0
    eval_budget: Optional[int] = None

    def __post_init__(self):
        for name in ("np", "n_gen", "n_evol", "n_epoch", "lr_patience", "patience", "eval_batch", "batch_size"):
            if getattr(self, name) < 0 or (name not in ("n_gen", "n_epoch") and getattr(self, name) == 0):
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if self.np < 4:
            raise UsageError(f"population size must be >= 4, got {self.np}")
        if not self.lr0 > self.lr_min > 0:
            raise UsageError("need lr0 > lr_min > 0")
        if not 0 < self.lr_factor < 1:
            raise UsageError("lr_factor must lie in (0, 1)")
        if self.init_low > self.init_high:
            raise UsageError("init_low must not exceed init_high")

    def ga_state(self) -> GaEventState:
        return GaEventState(
            patience=self.patience, p_mut=self.p_mut, eta_m=self.eta_m,
            rate_worst=self.rate_worst, rate_best=self.rate_best,
            x_lower=self.x_lower, x_upper=self.x_upper,
        )

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# learning-rate schedule
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SgdState:
    lr: float
    plateau_counter: int = 0
    best_loss_seen: float = math.inf


def lr_step(state: SgdState, current_loss: float, cfg) -> SgdState:
    """Reduce-on-plateau: multiply by ``lr_factor`` after ``lr_patience`` stalls."""
    if current_loss < state.best_loss_seen:
        return replace(state, plateau_counter=0, best_loss_seen=current_loss)
    count = state.plateau_counter + 1
    if count >= cfg.lr_patience:
        return replace(state, lr=max(state.lr * cfg.lr_factor, cfg.lr_min), plateau_counter=0)
    return replace(state, plateau_counter=count)


# --------------------------------------------------------------------------
# logging
# --------------------------------------------------------------------------


@dataclass
class EvalRecord:
    eval_index: int
    generation: int
    phase: str
    fitness: float
    best_fitness: float
    best_train_accuracy: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    generations: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    best_fitness: float = math.inf
    best_accuracy: float = 0.0
    best_position: Optional[np.ndarray] = None

    @property
    def evaluations(self) -> int:
        return len(self.records)

    def count(self, phase: str) -> int:
        return sum(r.phase == phase for r in self.records)

    def record(self, generation: int, phase: str, fitness: float, acc: float,
               position: Optional[np.ndarray] = None) -> None:
        if not math.isfinite(fitness):
            raise NumericError(f"non-finite fitness during {phase} phase (generation {generation})")
        if fitness < self.best_fitness:
            self.best_fitness = fitness
            if position is not None:
                self.best_position = position.copy()
        self.best_accuracy = max(self.best_accuracy, acc)
        self.records.append(
            EvalRecord(len(self.records) + 1, generation, phase, fitness, self.best_fitness, self.best_accuracy)
        )

    def trace_rows(self) -> list:
        return [(r.eval_index, r.best_train_accuracy, r.best_fitness) for r in self.records]


def has_budget(log: TrainLog, needed: int, budget: Optional[int]) -> bool:
    return budget is None or log.evaluations + needed <= budget


# --------------------------------------------------------------------------
# fitness
# --------------------------------------------------------------------------


def predict(net: nn.Network, inputs: np.ndarray, chunk: int = 512) -> np.ndarray:
    return np.concatenate([nn.forward(net, inputs[i : i + chunk]) for i in range(0, len(inputs), chunk)])


class FitnessFn:
    """Mean cross entropy (and accuracy) of a parameter vector on a shared subset.

    The subset is redrawn by :meth:`resample`; between redraws the function is
    pure.
    """

    def __init__(self, spec: nn.NetworkSpec, data: Dataset, eval_batch: int = 1024):
        self.spec = spec
        self.data = data
        self.eval_batch = eval_batch
        self.index = np.arange(len(data))

    def resample(self, rng) -> None:
        n = len(self.data)
        if self.eval_batch >= n:
            self.index = np.arange(n)
        else:
            self.index = np.sort(rng.choice(n, self.eval_batch, replace=False))

    def logits(self, p: np.ndarray) -> np.ndarray:
        net = nn.Network.from_vector(self.spec, p)
        return predict(net, self.data.inputs[self.index])

    def __call__(self, p: np.ndarray) -> tuple:
        logits = self.logits(p)
        labels = self.data.labels[self.index]
        return nn.ce_loss(logits, labels), nn.accuracy(logits, labels)


def evaluate_indices(pop: Population, idx, fitness: FitnessFn, log: TrainLog,
                     generation: int, phase: str, objectives: Optional[np.ndarray] = None) -> None:
    """Evaluate rows ``idx``. ``objectives`` rows, when given, get (-accuracy, sum of squares)."""
    for i in idx:
        ce, acc = fitness(pop.positions[i])
        pop.fitness[i] = ce
        if objectives is not None:
            objectives[i] = (-acc, nn.l2_regularizer(pop.positions[i]))
        log.record(generation, phase, ce, acc, pop.positions[i])


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def init_population(cfg: GmwConfig, spec: nn.NetworkSpec, rng,
                    fitness: Optional[FitnessFn] = None, log: Optional[TrainLog] = None) -> Population:
    """``cfg.np`` individuals with genes uniform in the init range, evaluated once."""
    if cfg.np < 4:
        raise UsageError(f"population size must be >= 4, got {cfg.np}")
    d = nn.param_count(spec)
    pop = Population(rng.uniform(cfg.init_low, cfg.init_high, (cfg.np, d)))
    if fitness is not None:
        evaluate_indices(pop, range(cfg.np), fitness, log if log is not None else TrainLog(), 0, "init")
    return pop


def sgd_epoch(net: nn.Network, data: Dataset, lr: float, batch_size: int, rng) -> tuple:
    """One shuffled pass of plain minibatch SGD. Updates ``net`` in place."""
    if len(data) == 0:
        raise UsageError("SGD epoch on an empty dataset")
    if lr < 0:
        raise UsageError(f"learning rate must be non-negative, got {lr}")
    order = rng.permutation(len(data))
    losses = []
    for start in range(0, len(data), batch_size):
        idx = order[start : start + batch_size]
        loss, grads = nn.backward(net, data.inputs[idx], data.labels[idx])
        for i, layer in enumerate(net.spec.layers):
            if layer.weight_shape is not None:
                net.weights[i] -= lr * grads.weights[i]
                net.biases[i] -= lr * grads.biases[i]
        losses.append(loss)
    return net, float(np.mean(losses))


def refine_leaders(pop: Population, hier: WolfHierarchy, train: Dataset, sgd: SgdState,
                   cfg: GmwConfig, rng, spec: nn.NetworkSpec,
                   fitness: FitnessFn, log: TrainLog, generation: int = 0,
                   objectives: Optional[np.ndarray] = None) -> Population:
    """Run ``cfg.n_epoch`` SGD epochs on alpha, beta and delta, then re-evaluate them."""
    out = pop.copy()
    if cfg.n_epoch == 0:
        return out
    for leader in hier.leaders:
        net = nn.Network.from_vector(spec, pop.positions[leader])
        for _ in range(cfg.n_epoch):
            sgd_epoch(net, train, sgd.lr, cfg.batch_size, rng)
        out.positions[leader] = nn.flatten(net)
    evaluate_indices(out, hier.leaders, fitness, log, generation, "sgd", objectives)
    return out


def evaluate_model(position: np.ndarray, spec: nn.NetworkSpec, train: Dataset, test: Dataset) -> tuple:
    """(train accuracy, test accuracy, test cross entropy) of one parameter vector."""
    net = nn.Network.from_vector(spec, position)
    train_acc = nn.accuracy(predict(net, train.inputs), train.labels)
    test_logits = predict(net, test.inputs)
    return train_acc, nn.accuracy(test_logits, test.labels), nn.ce_loss(test_logits, test.labels)


# --------------------------------------------------------------------------
# main loop
# --------------------------------------------------------------------------


def gmw_sgd_train(cfg: GmwConfig, spec: nn.NetworkSpec, train: Dataset, test: Dataset,
                  progress: Optional[Callable[[dict], None]] = None) -> tuple:
    """Train ``spec`` on ``train`` with GMW-SGD. Returns ``(best Individual, TrainLog)``.

    Per generation: redraw the fitness subset, run ``n_evol`` GWO iterations
    (each evaluates the whole pack and may fire a GA event on stagnation),
    then refine the three leaders with SGD and step the learning rate.
    """
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    fitness = FitnessFn(spec, train, cfg.eval_batch)
    fitness.resample(rng)
    if not has_budget(log, cfg.np, cfg.eval_budget):
        raise UsageError(f"budget {cfg.eval_budget} cannot cover the initial population of {cfg.np}")
    pop = init_population(cfg, spec, rng, fitness, log)
    ga = cfg.ga_state()
    sgd = SgdState(cfg.lr0)
    schedule = GwoSchedule(cfg.a_start, cfg.a_end, max(cfg.n_gen * cfg.n_evol, 1))
    step = 0
    exhausted = False
    for g in range(1, cfg.n_gen + 1):
        fitness.resample(rng)
        events = []
        for _ in range(cfg.n_evol):
            if not has_budget(log, cfg.np, cfg.eval_budget):
                exhausted = True
                break
            hier = update_hierarchy(pop)
            pop = gwo_step(pop, hier, compute_a(step, schedule), rng)
            step += 1
            evaluate_indices(pop, range(len(pop)), fitness, log, g, "gwo")
            hier = update_hierarchy(pop)
            ga.observe(float(pop.fitness[list(hier.omegas)].min()))
            if ga.triggered and has_budget(log, len(hier.omegas), cfg.eval_budget):
                pop, kind = ga_event(pop, hier, ga, rng)
                evaluate_indices(pop, hier.omegas, fitness, log, g, "ga")
                events.append(kind)
        hier = update_hierarchy(pop)
        if has_budget(log, 3, cfg.eval_budget):
            pop = refine_leaders(pop, hier, train, sgd, cfg, rng, spec, fitness, log, g)
            hier = update_hierarchy(pop)
            sgd = lr_step(sgd, float(pop.fitness[hier.alpha]), cfg)
        summary = {
            "generation": g,
            "evaluations": log.evaluations,
            "alpha_fitness": float(pop.fitness[hier.alpha]),
            "best_fitness": log.best_fitness,
            "lr": sgd.lr,
            "ga_events": events,
        }
        log.generations.append(summary)
        if progress:
            progress(summary)
        if exhausted:
            break
    best = Individual(log.best_position, log.best_fitness)
    train_acc, test_acc, test_ce = evaluate_model(best.position, spec, train, test)
    log.final = {"train_accuracy": train_acc, "test_accuracy": test_acc, "test_ce": test_ce}
    return best, log
