"""Population optimizers over flat parameter vectors.

Grey wolf position updates, the two stagnation operators (bounded polynomial
mutation and crossover with a dominant wolf) and the social-learning PSO
baseline. Fitness is always minimised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, NumericError, UsageError

log = logging.getLogger(__name__)

MUTATION = "mutation"
CROSSOVER = "crossover"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass
class Individual:
    position: np.ndarray
    fitness: Optional[float] = None


@dataclass
class Population:
    """Row ``i`` of ``positions`` is individual ``i``; NaN fitness means stale."""

    positions: np.ndarray
    fitness: np.ndarray = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.fitness is None:
            self.fitness = np.full(len(self.positions), np.nan)
        else:
            self.fitness = np.asarray(self.fitness, dtype=np.float64)

    def __len__(self):
        return len(self.positions)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "Population":
        return Population(self.positions.copy(), self.fitness.copy())

    def individual(self, i: int) -> Individual:
        f = self.fitness[i]
        return Individual(self.positions[i].copy(), None if np.isnan(f) else float(f))

    def stale(self) -> np.ndarray:
        return np.flatnonzero(np.isnan(self.fitness))


@dataclass(frozen=True)
class WolfHierarchy:
    alpha: int
    beta: int
    delta: int
    omegas: tuple

    @property
    def leaders(self) -> tuple:
        return (self.alpha, self.beta, self.delta)


@dataclass(frozen=True)
class GwoSchedule:
    a_start: float = 1.0
    a_end: float = 0.0
    total_steps: int = 140


def compute_a(t: int, schedule: GwoSchedule) -> float:
    if not 0 <= t <= schedule.total_steps:
        raise UsageError(f"step {t} outside [0, {schedule.total_steps}]")
    return schedule.a_start + (schedule.a_end - schedule.a_start) * t / schedule.total_steps


def hierarchy_from_order(order, n: int) -> WolfHierarchy:
    order = [int(i) for i in order]
    if n < 4:
        raise UsageError(f"need at least 4 individuals to have omegas, got {n}")
    return WolfHierarchy(order[0], order[1], order[2], tuple(sorted(order[3:])))


def update_hierarchy(pop: Population) -> WolfHierarchy:
    """Alpha, beta, delta = three lowest fitness values; ties go to the lower index."""
    if len(pop) < 4:
        raise UsageError(f"need at least 4 individuals to have omegas, got {len(pop)}")
    if np.isnan(pop.fitness).any():
        raise UsageError("hierarchy requires every individual to be evaluated")
    return hierarchy_from_order(np.argsort(pop.fitness, kind="stable"), len(pop))


def gwo_step(pop: Population, hier: WolfHierarchy, a: float, rng) -> Population:
    """Move every omega towards the three leaders; leaders stay put.

    Coefficients are drawn per omega, per leader and per dimension, ``r1``
    for all of them first and then ``r2``.
    """
    if a < 0:
        raise UsageError(f"a must be >= 0, got {a}")
    out = pop.copy()
    omegas = np.asarray(hier.omegas, dtype=np.intp)
    if omegas.size == 0:
        return out
    shape = (3, omegas.size, pop.dim)
    r1 = rng.random(shape)
    r2 = rng.random(shape)
    A = 2.0 * a * r1 - a
    C = 2.0 * r2
    leaders = pop.positions[list(hier.leaders)][:, None, :]  # (3, 1, d)
    X = pop.positions[omegas][None, :, :]  # (1, k, d)
    D = np.abs(C * leaders - X)
    moved = (leaders - A * D).sum(axis=0) / 3.0
    if not np.all(np.isfinite(moved)):
        row, dim = np.argwhere(~np.isfinite(moved))[0]
        raise NumericError(f"GWO update produced a non-finite value for wolf {omegas[row]}, dimension {dim}")
    out.positions[omegas] = moved
    out.fitness[omegas] = np.nan
    return out


# --------------------------------------------------------------------------
# genetic operators
# --------------------------------------------------------------------------


@dataclass
class GaEventState:
    patience: int = 4
    p_mut: float = 0.7
    eta_m: float = 20.0
    rate_worst: float = 0.6
    rate_best: float = 0.1
    x_lower: float = -1.0
    x_upper: float = 1.0
    stall_counter: int = 0
    best_omega_fitness_seen: float = math.inf
    clamped_genes: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise UsageError("patience must be positive")
        if not 0 <= self.p_mut <= 1:
            raise UsageError(f"p_mut must be a probability, got {self.p_mut}")
        if not (0 <= self.rate_worst <= 1 and 0 <= self.rate_best <= 1):
            raise UsageError("modification rates must lie in [0, 1]")
        if not self.x_lower < self.x_upper:
            raise UsageError("mutation bounds need x_lower < x_upper")

    def observe(self, best_omega_fitness: float) -> None:
        """Count a stalled iteration unless the best omega strictly improved."""
        if best_omega_fitness < self.best_omega_fitness_seen:
            self.best_omega_fitness_seen = best_omega_fitness
            self.stall_counter = 0
        else:
            self.stall_counter += 1

    @property
    def triggered(self) -> bool:
        return self.stall_counter >= self.patience


def mutate_genes(p, u, eta_m: float, x_lower: float, x_upper: float):
    """Bounded polynomial mutation of genes ``p`` for uniform draws ``u``."""
    p = np.asarray(p, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    power = 1.0 / (1.0 + eta_m)
    low = u <= 0.5
    # where() evaluates both branches; keep the bases non-negative
    down = p + ((2.0 * np.where(low, u, 0.5)) ** power - 1.0) * (p - x_lower)
    up = p + (1.0 - (2.0 * (1.0 - np.where(low, 0.5, u))) ** power) * (x_upper - p)
    return np.clip(np.where(low, down, up), x_lower, x_upper)


def polynomial_mutation(position: np.ndarray, rate: float, ga: GaEventState, rng) -> np.ndarray:
    """Mutate each gene with probability ``rate``; result stays inside the bounds."""
    x = np.asarray(position, dtype=np.float64)
    outside = (x < ga.x_lower) | (x > ga.x_upper)
    if outside.any():
        n = int(outside.sum())
        ga.clamped_genes += n
        log.debug("clamped %d genes into [%g, %g] before mutation", n, ga.x_lower, ga.x_upper)
        x = np.clip(x, ga.x_lower, ga.x_upper)
    mask = rng.random(x.shape) < rate
    u = rng.random(x.shape)
    return np.where(mask, mutate_genes(x, u, ga.eta_m, ga.x_lower, ga.x_upper), x)


def crossover_with_dominant(omega: np.ndarray, dominant: np.ndarray, rate: float, rng) -> np.ndarray:
    """Uniform crossover: each gene comes from ``dominant`` with probability ``rate``."""
    omega = np.asarray(omega)
    dominant = np.asarray(dominant)
    if omega.shape != dominant.shape:
        raise DimensionError(f"crossover parents differ in shape: {omega.shape} vs {dominant.shape}")
    mask = rng.random(omega.shape) < rate
    return np.where(mask, dominant, omega)


def omega_rates(pop: Population, hier: WolfHierarchy, ga: GaEventState) -> dict:
    """Per-omega modification rate, linear in fitness rank (worst -> rate_worst)."""
    omegas = sorted(hier.omegas, key=lambda i: (pop.fitness[i], i))  # best first
    k = len(omegas)
    if k == 1:
        return {omegas[0]: ga.rate_worst}
    return {
        idx: ga.rate_best + (ga.rate_worst - ga.rate_best) * r / (k - 1)
        for r, idx in enumerate(omegas)
    }


def ga_event(pop: Population, hier: WolfHierarchy, ga: GaEventState, rng, force: Optional[str] = None):
    """Apply one population-wide mutation or crossover event to the omegas.

    Returns ``(population, kind)``. The kind is drawn once from ``p_mut``
    unless ``force`` names it. The stall counter is reset.
    """
    if not ga.triggered:
        raise UsageError(
            f"GA event requested with stall counter {ga.stall_counter} < patience {ga.patience}"
        )
    draw = rng.random()
    kind = force or (MUTATION if draw < ga.p_mut else CROSSOVER)
    if kind not in (MUTATION, CROSSOVER):
        raise UsageError(f"unknown GA event {kind!r}")
    rates = omega_rates(pop, hier, ga)
    out = pop.copy()
    for idx in hier.omegas:
        if kind == MUTATION:
            out.positions[idx] = polynomial_mutation(pop.positions[idx], rates[idx], ga, rng)
        else:
            partner = hier.leaders[int(rng.integers(3))]
            out.positions[idx] = crossover_with_dominant(
                pop.positions[idx], pop.positions[partner], rates[idx], rng
            )
        out.fitness[idx] = np.nan
    ga.stall_counter = 0
    return out, kind


# --------------------------------------------------------------------------
# SL-PSO
# --------------------------------------------------------------------------


@dataclass
class SlpsoState:
    velocities: np.ndarray
    alpha: float = 0.5
    beta: float = 0.0001
    velocity_bounds: tuple = (-0.01, 0.01)
    position_bounds: tuple = (-0.1, 0.1)

    @property
    def epsilon(self) -> float:
        return self.beta * self.velocities.shape[1]

    def learning_probabilities(self) -> np.ndarray:
        """P for ranks 1 (worst) .. m (best)."""
        m, d = self.velocities.shape
        exponent = self.alpha * math.log(math.ceil(d / 100))
        ranks = np.arange(1, m + 1)
        return (1.0 - (ranks - 1) / m) ** exponent


def init_slpso(n: int, dim: int, rng, alpha=0.5, beta=0.0001,
               position_bounds=(-0.1, 0.1), velocity_bounds=(-0.01, 0.01)) -> tuple:
    positions = rng.uniform(position_bounds[0], position_bounds[1], (n, dim))
    state = SlpsoState(np.zeros((n, dim)), alpha, beta, tuple(velocity_bounds), tuple(position_bounds))
    return Population(positions), state


def slpso_step(pop: Population, state: SlpsoState, rng) -> Population:
    """One social-learning update; the best particle is left unchanged."""
    m = len(pop)
    if m < 2:
        raise UsageError("SL-PSO needs at least two particles")
    if np.isnan(pop.fitness).any():
        raise UsageError("SL-PSO step requires every particle to be evaluated")
    order = np.argsort(pop.fitness, kind="stable")  # best first
    prob = state.learning_probabilities()  # rank 1 = worst
    mean = pop.positions.mean(axis=0)
    out = pop.copy()
    d = pop.dim
    vlo, vhi = state.velocity_bounds
    for pos in range(1, m):  # pos 0 is the best particle
        i = order[pos]
        rank = m - pos  # worst particle has rank 1
        if rng.random() > prob[rank - 1]:
            continue
        demo = order[rng.integers(0, pos, size=d)]  # better-ranked, per dimension
        r1, r2, r3 = rng.random((3, d))
        x = pop.positions[i]
        v = (
            r1 * state.velocities[i]
            + r2 * (pop.positions[demo, np.arange(d)] - x)
            + r3 * state.epsilon * (mean - x)
        )
        v = np.clip(v, vlo, vhi)
        state.velocities[i] = v
        out.positions[i] = x + v
        out.fitness[i] = np.nan
    return out


# --------------------------------------------------------------------------
# plain function minimisation (benchmarks)
# --------------------------------------------------------------------------


def evaluate(pop: Population, fn: Callable[[np.ndarray], float], only_stale: bool = True) -> int:
    idx = pop.stale() if only_stale else np.arange(len(pop))
    for i in idx:
        pop.fitness[i] = fn(pop.positions[i])
    return len(idx)


def gwo_minimize(fn, dim: int, n: int, iterations: int, bounds: tuple, rng,
                 a_start: float = 2.0, a_end: float = 0.0) -> Individual:
    """Plain GWO (no GA, no SGD) on a black-box function. Returns the best wolf."""
    pop = Population(rng.uniform(bounds[0], bounds[1], (n, dim)))
    evaluate(pop, fn)
    schedule = GwoSchedule(a_start, a_end, iterations)
    for t in range(iterations):
        hier = update_hierarchy(pop)
        pop = gwo_step(pop, hier, compute_a(t, schedule), rng)
        evaluate(pop, fn)
    return pop.individual(int(np.argmin(pop.fitness)))


def slpso_minimize(fn, dim: int, n: int, iterations: int, rng, alpha=0.5, beta=0.0001,
                   position_bounds=(-0.1, 0.1), velocity_bounds=(-0.01, 0.01)) -> list:
    """SL-PSO on a black-box function; returns best fitness after each step."""
    pop, state = init_slpso(n, dim, rng, alpha, beta, position_bounds, velocity_bounds)
    evaluate(pop, fn)
    history = []
    for _ in range(iterations):
        pop = slpso_step(pop, state, rng)
        evaluate(pop, fn)
        history.append(float(pop.fitness.min()))
    return history
