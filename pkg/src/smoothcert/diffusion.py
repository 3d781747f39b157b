"""DDPM noise schedule, forward noising and the single-shot denoiser.

Timesteps are 1-based (``1 <= t <= T``); schedule arrays are stored 0-based.
"""
from dataclasses import dataclass, field
import math
import struct

import numpy as np

from .numerics.nets import FeedForwardNet, FormatError, load_net, net_backward, net_forward, save_net
from .numerics.optim import Adam
from .numerics.rng import Stream, context_id, gaussian_rows, permutation, uniform_rows
from .numerics.stats import DomainError

SCH_MAGIC = b"SCH1"


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta_start: float
    beta_end: float
    beta: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)
    sigma_equiv: np.ndarray = field(repr=False)

    def check_t(self, t):
        if not 1 <= t <= self.T:
            raise DomainError(f"timestep {t} outside 1..{self.T}")
        return int(t)

    def coefficients(self, t):
        """``(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))``."""
        ab = self.alpha_bar[self.check_t(t) - 1]
        return math.sqrt(ab), math.sqrt(1.0 - ab)

    def embedding(self, t):
        t = np.asarray(t)
        return np.stack([t / self.T, self.sigma_equiv[t - 1] / self.sigma_equiv[-1]], axis=-1)


def build_schedule(T=1000, beta_start=1e-4, beta_end=0.02):
    if T < 1 or not 0.0 < beta_start <= beta_end < 1.0:
        raise DomainError(f"need T >= 1 and 0 < beta_start <= beta_end < 1, got {T}, {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, T)
    alpha_bar = np.cumprod(1.0 - beta)
    sigma_equiv = np.sqrt((1.0 - alpha_bar) / alpha_bar)
    for arr in (beta, alpha_bar, sigma_equiv):
        arr.setflags(write=False)
    return DiffusionSchedule(int(T), float(beta_start), float(beta_end), beta, alpha_bar, sigma_equiv)


def forward_noise(x0, t, eps, schedule):
    """``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``."""
    x0, eps = np.asarray(x0, dtype=np.float64), np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 {x0.shape} and eps {eps.shape} differ in shape")
    a, s = schedule.coefficients(t)
    return a * x0 + s * eps


def select_tstar(sigma, schedule):
    """Timestep whose equivalent noise level is closest to ``sigma``.

    Ties go to the smaller timestep.
    """
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    return int(np.argmin(np.abs(sigma - schedule.sigma_equiv))) + 1


class Denoiser:
    """Noise predictor ``eps(x_t, t)`` backed by a conditioned MLP."""

    def __init__(self, net, schedule):
        if net.conditioning_dim != 2 or net.output_dim != net.input_dim:
            raise ValueError("denoiser net must map d + 2 features to d")
        self.net = net
        self.schedule = schedule
        self.loss_trace = []

    @property
    def dim(self):
        return self.net.input_dim

    def predict_noise(self, x_t, t):
        return net_forward(self.net, x_t, self.schedule.embedding(t))[0]

    __call__ = predict_noise


def _predict(denoiser, x_t, t):
    if hasattr(denoiser, "predict_noise"):
        return denoiser.predict_noise(x_t, t)
    return np.asarray(denoiser(x_t, t), dtype=np.float64)


def single_shot_denoise(x_t, t, denoiser, schedule):
    """``(x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)``; output is not clamped.

    ``denoiser`` is a :class:`Denoiser` or any callable ``(x_t, t) -> eps_hat``.
    """
    a, s = schedule.coefficients(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    return (x_t - s * _predict(denoiser, x_t, t)) / a


def denoise_vjp(x_t, t, denoiser, schedule):
    """Single-shot denoise plus a pullback from the output to ``x_t``."""
    a, s = schedule.coefficients(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat, tape = net_forward(denoiser.net, x_t, schedule.embedding(t))
    out = (x_t - s * eps_hat) / a

    def pullback(g):
        _, g_eps = net_backward(denoiser.net, tape, g)
        return (g - s * g_eps) / a

    return out, pullback


def train_denoiser(dataset, schedule, hidden=(256, 256), epochs=50, batch=64, lr=1e-3, seed=0):
    """Fit the noise predictor under the MSE objective with Adam.

    Every step draws a fresh ``t`` uniform on ``1..T`` and ``eps ~ N(0, I)`` per
    example. ``loss_trace`` holds the per-epoch mean of ``||eps - eps_hat||^2``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    d = dataset.dim
    net = FeedForwardNet.init([d, *hidden, d], seed, conditioning_dim=2, tag=1)
    den = Denoiser(net, schedule)
    opt = Adam(net, lr=lr)
    n = len(dataset)
    step = 0
    for epoch in range(epochs):
        order = permutation(seed, context_id(Stream.DENOISER_SHUFFLE, epoch), n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            draw_ids = np.arange(step * batch, step * batch + len(idx))
            u = uniform_rows(seed, context_id(Stream.DENOISER_T), draw_ids, 1)[:, 0]
            t = np.minimum((u * schedule.T).astype(np.int64) + 1, schedule.T)
            eps = gaussian_rows(seed, context_id(Stream.DENOISER_EPS), draw_ids, d)
            ab = schedule.alpha_bar[t - 1][:, None]
            x_t = np.sqrt(ab) * dataset.inputs[idx] + np.sqrt(1.0 - ab) * eps
            pred, tape = net_forward(net, x_t, schedule.embedding(t))
            resid = pred - eps
            loss = float(np.mean(np.sum(resid * resid, axis=1)))
            if not math.isfinite(loss):
                raise TrainingError(f"denoiser loss became non-finite at step {step}")
            grads, _ = net_backward(net, tape, 2.0 * resid / len(idx))
            opt.step(grads)
            total += loss * len(idx)
            step += 1
        den.loss_trace.append(total / n)
    return den


def save_denoiser(denoiser, net_path, schedule_path):
    save_net(denoiser.net, net_path)
    save_schedule(denoiser.schedule, schedule_path)


def load_denoiser(net_path, schedule_path):
    return Denoiser(load_net(net_path, conditioning_dim=2), load_schedule(schedule_path))


def save_schedule(schedule, path):
    with open(path, "wb") as f:
        f.write(SCH_MAGIC + struct.pack("<Idd", schedule.T, schedule.beta_start, schedule.beta_end))


def load_schedule(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != SCH_MAGIC:
        raise FormatError(f"schedule file: bad magic {data[:4]!r}")
    if len(data) != 24:
        raise FormatError(f"schedule file: expected 24 bytes, found {len(data)}")
    T, b0, b1 = struct.unpack_from("<Idd", data, 4)
    return build_schedule(T, b0, b1)
