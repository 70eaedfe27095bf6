import math

import numpy as np
import pytest

from gmwsgd import metaheuristics as mh
from gmwsgd.errors import DimensionError, NumericError, UsageError


class ConstantRng:
    """Stands in for a Generator: every uniform draw returns a fixed value."""

    def __init__(self, *values):
        self.values = list(values)

    def random(self, shape=None):
        v = self.values.pop(0) if len(self.values) > 1 else self.values[0]
        return v if shape is None else np.full(shape, v)


def sphere(x):
    return float(np.dot(x, x))


# ---------------------------------------------------------------- schedule / hierarchy


def test_compute_a_linear_schedule():
    s = mh.GwoSchedule(1.0, 0.0, 140)
    assert mh.compute_a(0, s) == 1.0
    assert mh.compute_a(70, s) == 0.5
    assert mh.compute_a(140, s) == 0.0
    assert mh.compute_a(35, mh.GwoSchedule(2.0, 0.0, 70)) == 1.0
    with pytest.raises(UsageError):
        mh.compute_a(141, s)
    with pytest.raises(UsageError):
        mh.compute_a(-1, s)


def test_hierarchy_examples():
    pop = mh.Population(np.zeros((6, 2)), [0.5, 0.1, 0.3, 0.1, 0.9, 0.2])
    h = mh.update_hierarchy(pop)
    assert (h.alpha, h.beta, h.delta) == (1, 3, 5)
    assert h.omegas == (0, 2, 4)


def test_hierarchy_matches_sort_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        fit = rng.integers(0, 10, 50).astype(float)  # plenty of ties
        h = mh.update_hierarchy(mh.Population(np.zeros((50, 1)), fit))
        oracle = sorted(range(50), key=lambda i: (fit[i], i))
        assert list(h.leaders) == oracle[:3]
        assert sorted(h.omegas) == sorted(oracle[3:])


def test_hierarchy_rejects_small_or_stale():
    with pytest.raises(UsageError):
        mh.update_hierarchy(mh.Population(np.zeros((3, 2)), [1.0, 2.0, 3.0]))
    with pytest.raises(UsageError):
        mh.update_hierarchy(mh.Population(np.zeros((5, 2))))


# ---------------------------------------------------------------- GWO


def test_gwo_a_zero_moves_to_leader_mean():
    rng = np.random.default_rng(3)
    pop = mh.Population(rng.normal(size=(8, 5)), np.arange(8.0))
    h = mh.update_hierarchy(pop)
    out = mh.gwo_step(pop, h, 0.0, rng)
    mean = pop.positions[list(h.leaders)].sum(axis=0) / 3.0
    for i in h.omegas:
        assert out.positions[i].tobytes() == mean.tobytes()


def test_gwo_worked_example():
    pos = np.array([[1.0], [2.0], [3.0], [0.0]])
    pop = mh.Population(pos, [0.0, 1.0, 2.0, 3.0])
    h = mh.update_hierarchy(pop)
    out = mh.gwo_step(pop, h, 2.0, ConstantRng(1.0, 0.5))  # r1 = 1, r2 = 0.5
    assert out.positions[3, 0] == pytest.approx(-2.0)
    assert np.array_equal(out.positions[:3], pos[:3])
    assert np.isnan(out.fitness[3]) and not np.isnan(out.fitness[:3]).any()


def test_gwo_leaders_untouched_and_input_unchanged():
    rng = np.random.default_rng(1)
    pop = mh.Population(rng.normal(size=(10, 4)), rng.random(10))
    before = pop.positions.copy()
    h = mh.update_hierarchy(pop)
    out = mh.gwo_step(pop, h, 1.3, rng)
    assert np.array_equal(pop.positions, before)
    assert np.array_equal(out.positions[list(h.leaders)], before[list(h.leaders)])


def test_gwo_overflow_names_wolf():
    pos = np.array([[1e308], [1e308], [1e308], [-1e308]])
    pop = mh.Population(pos, [0.0, 1.0, 2.0, 3.0])
    with np.errstate(over="ignore"), pytest.raises(NumericError, match="wolf 3"):
        mh.gwo_step(pop, mh.update_hierarchy(pop), 2.0, ConstantRng(1.0, 1.0))


def test_gwo_sphere_benchmark():
    results = [
        mh.gwo_minimize(sphere, 30, 30, 500, (-100, 100), np.random.default_rng(s)).fitness
        for s in range(3)
    ]
    assert max(results) <= 1e-2


# ---------------------------------------------------------------- mutation


def test_mutation_fixed_point_and_extremes():
    p = np.array([-0.7, 0.0, 0.4])
    assert np.array_equal(mh.mutate_genes(p, np.full(3, 0.5), 20, -1, 1), p)
    assert np.allclose(mh.mutate_genes(p, np.ones(3), 20, -1, 1), 1.0)
    assert np.allclose(mh.mutate_genes(p, np.zeros(3), 20, -1, 1), -1.0)


def test_mutation_closed_form():
    p, u, eta = 0.2, 0.3, 20.0
    expected = p + ((2 * u) ** (1 / (1 + eta)) - 1) * (p - (-1.0))
    assert mh.mutate_genes(p, u, eta, -1, 1) == pytest.approx(expected, rel=1e-14)
    u = 0.8
    expected = p + (1 - (2 * (1 - u)) ** (1 / (1 + eta))) * (1.0 - p)
    assert mh.mutate_genes(p, u, eta, -1, 1) == pytest.approx(expected, rel=1e-14)


def test_mutation_monte_carlo_bounds_and_concentration():
    rng = np.random.default_rng(0)
    p = np.full(100_000, 0.3)
    u = rng.random(p.size)
    sharp = mh.mutate_genes(p, u, 100, -1, 1)
    broad = mh.mutate_genes(p, u, 2, -1, 1)
    for out in (sharp, broad):
        assert out.min() >= -1 and out.max() <= 1
    assert np.mean(np.abs(sharp - 0.3)) < np.mean(np.abs(broad - 0.3))


def test_polynomial_mutation_rate_and_clamp():
    rng = np.random.default_rng(5)
    ga = mh.GaEventState()
    x = rng.uniform(-1, 1, 100_000)
    assert np.array_equal(mh.polynomial_mutation(x, 0.0, ga, rng), x)
    changed = np.mean(mh.polynomial_mutation(x, 0.3, ga, rng) != x)
    assert abs(changed - 0.3) < 0.01
    out = mh.polynomial_mutation(np.array([5.0, -3.0, 0.0]), 0.0, ga, rng)
    assert out.tolist() == [1.0, -1.0, 0.0]
    assert ga.clamped_genes == 2


# ---------------------------------------------------------------- crossover


def test_crossover_rates():
    rng = np.random.default_rng(2)
    omega, dom = np.zeros(100_000), np.ones(100_000)
    assert np.array_equal(mh.crossover_with_dominant(omega, dom, 0.0, rng), omega)
    assert np.array_equal(mh.crossover_with_dominant(omega, dom, 1.0, rng), dom)
    assert abs(mh.crossover_with_dominant(omega, dom, 0.3, rng).mean() - 0.3) < 0.01
    with pytest.raises(DimensionError):
        mh.crossover_with_dominant(np.zeros(3), np.zeros(4), 0.5, rng)


# ---------------------------------------------------------------- GA events


def stalled_state(**kw):
    ga = mh.GaEventState(**kw)
    ga.stall_counter = ga.patience
    return ga


def test_omega_rates_linear_over_rank():
    pop = mh.Population(np.zeros((15, 2)), np.arange(15.0)[::-1])  # index 14 best
    h = mh.update_hierarchy(pop)
    rates = mh.omega_rates(pop, h, mh.GaEventState())
    by_fitness = [rates[i] for i in sorted(h.omegas, key=lambda i: pop.fitness[i])]
    assert by_fitness[0] == pytest.approx(0.1)
    assert by_fitness[-1] == pytest.approx(0.6)
    assert np.allclose(np.diff(by_fitness), 0.5 / 11)


def test_crossover_event_leaves_leaders_and_copies_from_them():
    rng = np.random.default_rng(8)
    pop = mh.Population(rng.normal(size=(15, 50)), rng.random(15))
    h = mh.update_hierarchy(pop)
    ga = stalled_state()
    out, kind = mh.ga_event(pop, h, ga, rng, force=mh.CROSSOVER)
    assert kind == mh.CROSSOVER and ga.stall_counter == 0
    assert np.array_equal(out.positions[list(h.leaders)], pop.positions[list(h.leaders)])
    leader_rows = pop.positions[list(h.leaders)]
    for i in h.omegas:
        swapped = out.positions[i] != pop.positions[i]
        assert any(np.array_equal(out.positions[i][swapped], row[swapped]) for row in leader_rows)
        assert np.isnan(out.fitness[i])


def test_event_kind_frequency():
    rng = np.random.default_rng(0)
    pop = mh.Population(rng.normal(size=(5, 2)), rng.random(5))
    h = mh.update_hierarchy(pop)
    kinds = []
    for _ in range(1000):
        _, kind = mh.ga_event(pop, h, stalled_state(), rng)
        kinds.append(kind)
    assert abs(kinds.count(mh.MUTATION) / 1000 - 0.7) <= 0.03


def test_event_requires_trigger():
    pop = mh.Population(np.zeros((5, 2)), np.arange(5.0))
    with pytest.raises(UsageError):
        mh.ga_event(pop, mh.update_hierarchy(pop), mh.GaEventState(), np.random.default_rng(0))


def test_stall_accounting():
    ga = mh.GaEventState(patience=3)
    for f in (1.0, 0.9, 0.9, 0.95):
        ga.observe(f)
    assert ga.stall_counter == 2 and not ga.triggered
    ga.observe(0.9)
    assert ga.triggered
    ga.observe(0.5)
    assert ga.stall_counter == 0


# ---------------------------------------------------------------- SL-PSO


def test_learning_probabilities():
    state = mh.SlpsoState(np.zeros((4, 1000)))
    p = state.learning_probabilities()
    expo = 0.5 * math.log(10)
    assert np.allclose(p, [(1 - k / 4) ** expo for k in range(4)])
    assert state.epsilon == pytest.approx(0.1)


def test_identical_particles_do_not_move():
    pop = mh.Population(np.ones((6, 3)), np.arange(6.0))
    state = mh.SlpsoState(np.zeros((6, 3)))
    out = mh.slpso_step(pop, state, np.random.default_rng(0))
    assert np.array_equal(out.positions, pop.positions)


def test_best_particle_stays():
    rng = np.random.default_rng(4)
    pop, state = mh.init_slpso(10, 300, rng)
    mh.evaluate(pop, sphere)
    best = int(np.argmin(pop.fitness))
    out = mh.slpso_step(pop, state, rng)
    assert np.array_equal(out.positions[best], pop.positions[best])
    assert np.all(np.abs(state.velocities) <= 0.01)


def test_slpso_improves_on_sphere():
    early, late = [], []
    for s in range(10):
        hist = mh.slpso_minimize(lambda x: sphere(x - 0.05), 50, 20, 200, np.random.default_rng(s))
        early.append(hist[19])
        late.append(hist[-1])
    assert np.median(late) < np.median(early)
