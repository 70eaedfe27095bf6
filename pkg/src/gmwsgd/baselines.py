"""Reference trainers: plain minibatch SGD and social-learning PSO."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from . import nn
from .data import Dataset
from .errors import UsageError
from .hybrid import FitnessFn, SgdState, TrainLog, evaluate_model, has_budget, lr_step, predict, sgd_epoch
from .metaheuristics import Individual, Population, SlpsoState, slpso_step


@dataclass
class SgdConfig:
    lr: float = 0.01
    lr_factor: float = 0.1
    lr_patience: int = 10
    lr_min: float = 1e-5
    max_epochs: int = 200
    early_stop: int = 20
    batch_size: int = 64
    init_low: float = -0.1
    init_high: float = 0.1
    seed: int = 0
    eval_budget: Optional[int] = None

    def __post_init__(self):
        if not self.lr > self.lr_min > 0:
            raise UsageError("need lr > lr_min > 0")
        if not 0 < self.lr_factor < 1:
            raise UsageError("lr_factor must lie in (0, 1)")
        if self.max_epochs < 1 or self.early_stop < 1 or self.batch_size < 1:
            raise UsageError("max_epochs, early_stop and batch_size must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class SlpsoConfig:
    np: int = 60
    n_evol: int = 36
    position_low: float = -0.1
    position_high: float = 0.1
    velocity_low: float = -0.01
    velocity_high: float = 0.01
    alpha: float = 0.5
    beta: float = 0.0001
    c1: float = 2.0  # echoed for the record; the update rule has no slot for it
    c2: float = 2.0
    eval_batch: int = 1024
    seed: int = 0
    eval_budget: Optional[int] = None

    def __post_init__(self):
        if self.np < 2 or self.n_evol < 1 or self.eval_batch < 1:
            raise UsageError("np >= 2, n_evol >= 1 and eval_batch >= 1 required")
        if self.position_low > self.position_high or self.velocity_low > self.velocity_high:
            raise UsageError("empty position or velocity interval")

    def to_dict(self):
        return asdict(self)


def sgd_train(cfg: SgdConfig, spec: nn.NetworkSpec, train: Dataset, test: Dataset,
              progress: Optional[Callable[[dict], None]] = None) -> tuple:
    """Minibatch SGD with reduce-on-plateau and early stopping on train accuracy.

    One log record per epoch (plus the initial network); the fitness column is
    the full-train cross entropy. Returns the final network, not the best one.
    """
    rng = np.random.default_rng(cfg.seed)
    net = nn.Network.uniform(spec, rng, cfg.init_low, cfg.init_high)
    log = TrainLog()

    def measure(epoch, phase):
        logits = predict(net, train.inputs)
        ce, acc = nn.ce_loss(logits, train.labels), nn.accuracy(logits, train.labels)
        log.record(epoch, phase, ce, acc, nn.flatten(net))
        return ce, acc

    measure(0, "init")
    state = SgdState(cfg.lr)
    best_acc, stalled = -1.0, 0
    for epoch in range(1, cfg.max_epochs + 1):
        if not has_budget(log, 1, cfg.eval_budget):
            break
        sgd_epoch(net, train, state.lr, cfg.batch_size, rng)
        ce, acc = measure(epoch, "sgd")
        state = lr_step(state, ce, cfg)
        if progress:
            progress({"epoch": epoch, "train_ce": ce, "train_accuracy": acc, "lr": state.lr})
        if acc > best_acc:
            best_acc, stalled = acc, 0
        else:
            stalled += 1
            if stalled >= cfg.early_stop:
                break
    position = nn.flatten(net)
    train_acc, test_acc, test_ce = evaluate_model(position, spec, train, test)
    log.final = {"train_accuracy": train_acc, "test_accuracy": test_acc, "test_ce": test_ce,
                 "epochs": log.evaluations - 1}
    return Individual(position, log.records[-1].fitness), log


def slpso_train(cfg: SlpsoConfig, spec: nn.NetworkSpec, train: Dataset, test: Dataset,
                progress: Optional[Callable[[dict], None]] = None) -> tuple:
    """Train with SL-PSO. ``n_evol`` iterations, each evaluating the whole swarm.

    The first iteration's evaluation is the initial swarm, so the run costs
    exactly ``np * n_evol`` fitness evaluations.
    """
    rng = np.random.default_rng(cfg.seed)
    d = nn.param_count(spec)
    pop = Population(rng.uniform(cfg.position_low, cfg.position_high, (cfg.np, d)))
    state = SlpsoState(
        np.zeros((cfg.np, d)), cfg.alpha, cfg.beta,
        (cfg.velocity_low, cfg.velocity_high), (cfg.position_low, cfg.position_high),
    )
    fitness = FitnessFn(spec, train, cfg.eval_batch)
    log = TrainLog()
    for it in range(cfg.n_evol):
        if not has_budget(log, cfg.np, cfg.eval_budget):
            break
        if it:
            pop = slpso_step(pop, state, rng)
        fitness.resample(rng)
        phase = "pso" if it else "init"
        for i in range(cfg.np):
            ce, acc = fitness(pop.positions[i])
            pop.fitness[i] = ce
            log.record(it, phase, ce, acc, pop.positions[i])
        summary = {"iteration": it, "evaluations": log.evaluations, "best_fitness": log.best_fitness}
        log.generations.append(summary)
        if progress:
            progress(summary)
    if log.best_position is None:
        raise UsageError("budget too small for a single swarm evaluation")
    train_acc, test_acc, test_ce = evaluate_model(log.best_position, spec, train, test)
    log.final = {"train_accuracy": train_acc, "test_accuracy": test_acc, "test_ce": test_ce}
    return Individual(log.best_position, log.best_fitness), log
