import numpy as np
import pytest

from smoothcert.diffusion import Denoiser, build_schedule
from smoothcert.numerics import Activation, FeedForwardNet, Layer
from smoothcert.presets import desk_classifiers, desk_data, desk_denoiser


def zero_denoiser(d, schedule):
    """Denoiser net with all-zero parameters: predicts eps_hat = 0."""
    layers = [Layer(np.zeros((8, d + 2)), np.zeros(8), Activation.RELU), Layer(np.zeros((d, 8)), np.zeros(d))]
    return Denoiser(FeedForwardNet(layers, d, 2), schedule)


def random_net(rng, sizes, conditioning_dim=0, scale=0.7):
    layers = []
    fan_ins = [sizes[0] + conditioning_dim] + list(sizes[1:-1])
    for k, (fi, fo) in enumerate(zip(fan_ins, sizes[1:])):
        act = Activation.RELU if k < len(sizes) - 2 else Activation.IDENTITY
        layers.append(Layer(scale * rng.standard_normal((fo, fi)), 0.3 * rng.standard_normal(fo), act))
    return FeedForwardNet(layers, sizes[0], conditioning_dim)


@pytest.fixture(scope="session")
def desk():
    train, test = desk_data(seed=0)
    den = desk_denoiser(train, seed=0)
    return train, test, den


@pytest.fixture(scope="session")
def desk_models(desk):
    train, _, den = desk
    return desk_classifiers(train, den, sigma=0.5, seed=0)


@pytest.fixture
def small_schedule():
    return build_schedule(3, 0.5, 0.5)


ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Store one acceptance line; the terminal summary prints them in order."""
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
