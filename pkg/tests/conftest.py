import numpy as np
import pytest

from gmwsgd import nn

ACCEPTANCE_LINES = []


def random_cnn(rng, max_params=500):
    """A small random network using every layer type, under ``max_params``."""
    while True:
        c_in = int(rng.integers(1, 3))
        c_out = int(rng.integers(2, 4))
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        size = int(rng.integers(5, 8))
        hidden = int(rng.integers(3, 8))
        classes = int(rng.integers(2, 5))
        conv = nn.Conv2d(c_in, c_out, k, k, stride, pad)
        try:
            c, h, w = conv.out_shape((c_in, size, size))
            pool = nn.MaxPool(2, int(rng.integers(1, 3)))
            flat = int(np.prod(pool.out_shape((c, h, w))))
        except Exception:
            continue
        spec = nn.NetworkSpec(
            (c_in, size, size),
            (conv, nn.ReLU(), pool, nn.Flatten(), nn.Dense(flat, hidden), nn.ReLU(), nn.Dense(hidden, classes)),
        )
        if nn.param_count(spec) <= max_params:
            return spec


def central_differences(net, x, y, h=1e-4):
    p = nn.flatten(net)
    grad = np.empty_like(p)
    probe = nn.Network.zeros(net.spec)
    for i in range(p.size):
        old = p[i]
        p[i] = old + h
        up = nn.ce_loss(nn.forward(nn.load(probe, p), x), y)
        p[i] = old - h
        down = nn.ce_loss(nn.forward(nn.load(probe, p), x), y)
        p[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def activation_pattern(net, x):
    """ReLU signs and max-pool winners: the piece of the piecewise-smooth map we are on."""
    _, caches = nn._forward(net, x)
    parts = []
    for layer, cache in zip(net.spec.layers, caches):
        if isinstance(layer, nn.ReLU):
            parts.append(np.asarray(cache).tobytes())
        elif isinstance(layer, nn.MaxPool):
            parts.append(cache[0].tobytes())
    return tuple(parts)


def smooth_on_stencil(net, x, h=1e-4):
    """True if no ±h parameter probe crosses a ReLU or max-pool kink.

    Central differences only estimate the derivative when all three probe
    points sit on the same smooth piece.
    """
    base = activation_pattern(net, x)
    p = nn.flatten(net)
    probe = nn.Network.zeros(net.spec)
    for i in range(p.size):
        old = p[i]
        for step in (h, -h):
            p[i] = old + step
            if activation_pattern(nn.load(probe, p), x) != base:
                p[i] = old
                return False
        p[i] = old
    return True


def max_relative_error(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
