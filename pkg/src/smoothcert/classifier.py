"""Base classifier, cross-entropy and the four training regimes."""
from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from .diffusion import TrainingError, select_tstar, single_shot_denoise
from .numerics.nets import FeedForwardNet, ShapeError, net_backward, net_forward
from .numerics.optim import Adam
from .numerics.rng import Stream, context_id, gaussian_rows, permutation

UNBOUNDED = math.inf


class ConfigError(ValueError):
    pass


class Regime(str, Enum):
    CLEAN = "clean"
    GAUSS_AUG = "gauss_aug"
    NTD_AUG = "ntd_aug"
    ADV_EPS = "adv_eps"


@dataclass
class TrainConfig:
    regime: Regime = Regime.CLEAN
    sigma: float = 0.0
    eta: float = 0.1
    M: int = 1
    r_adv: float = UNBOUNDED
    epochs: int = 30
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple = (128, 64)

    def __post_init__(self):
        self.regime = Regime(self.regime)
        if self.regime != Regime.CLEAN and not self.sigma > 0:
            raise ConfigError(f"regime {self.regime.value} needs sigma > 0")
        if self.eta < 0 or self.M < 1 or not self.r_adv > 0:
            raise ConfigError("need eta >= 0, M >= 1 and r_adv > 0")


class Classifier:
    def __init__(self, net):
        if net.conditioning_dim != 0 or net.output_dim < 2:
            raise ValueError("classifier net takes no conditioning and has at least two outputs")
        self.net = net
        self.loss_trace = []

    @property
    def num_classes(self):
        return self.net.output_dim

    @property
    def dim(self):
        return self.net.input_dim

    def logits(self, x):
        return net_forward(self.net, x)[0]

    def predict(self, x):
        return predict_base(self, x)

    def probabilities(self, x):
        z = self.logits(x)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, y):
    """Softmax cross-entropy and its gradient with respect to the logits.

    Works on one logit vector (scalar ``y``) or a batch; a batch returns
    per-row losses.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z2 = z.reshape(1, -1) if single else z
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.shape != (z2.shape[0],) or y.min() < 0 or y.max() >= z2.shape[1]:
        raise ShapeError("labels must index the logit columns, one per row")
    shift = z2.max(axis=1, keepdims=True)
    e = np.exp(z2 - shift)
    total = e.sum(axis=1, keepdims=True)
    rows = np.arange(len(y))
    loss = (np.log(total[:, 0]) + shift[:, 0]) - z2[rows, y]
    cot = e / total
    cot[rows, y] -= 1.0
    if single:
        return float(loss[0]), cot[0]
    return loss, cot


def predict_base(classifier, x):
    """Arg-max class; ties resolve to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != classifier.dim:
        raise ShapeError(f"input has {x.shape[-1]} features, classifier expects {classifier.dim}")
    z = classifier.logits(x)
    out = np.argmax(z, axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def noised_denoised(x, eps, t, denoiser, schedule):
    """Algorithm-1 noising ``sqrt(ab) x + sqrt(1 - ab) eps``, then single-shot denoise."""
    a, s = schedule.coefficients(t)
    return single_shot_denoise(a * x + s * eps, t, denoiser, schedule)


def _needs_denoiser(regime):
    return regime in (Regime.NTD_AUG, Regime.ADV_EPS)


def train_classifier(dataset, config, denoiser=None, schedule=None, init=None):
    """Train with Adam under ``config.regime``; ``init`` fine-tunes an existing model.

    Per-epoch mean losses land in ``loss_trace``.
    """
    from .shiftattack import AttackParams, extreme_shift_batch

    if _needs_denoiser(config.regime) and (denoiser is None or schedule is None):
        raise ConfigError(f"regime {config.regime.value} requires a denoiser and schedule")
    if init is not None:
        net = init.net.copy()
        if net.input_dim != dataset.dim or net.output_dim != dataset.num_classes:
            raise ConfigError("initial classifier does not match the dataset shape")
    else:
        net = FeedForwardNet.init([dataset.dim, *config.hidden, dataset.num_classes], config.seed, tag=2)
    clf = Classifier(net)
    opt = Adam(net, lr=config.lr)
    t_star = select_tstar(config.sigma, schedule) if _needs_denoiser(config.regime) else None
    attack = None
    if config.regime == Regime.ADV_EPS:
        attack = AttackParams(config.sigma, config.eta, config.M, config.r_adv, config.seed)
    n, d = len(dataset), dataset.dim
    step = 0
    for epoch in range(config.epochs):
        order = permutation(config.seed, context_id(Stream.SHUFFLE, epoch), n)
        total = 0.0
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            x, y = dataset.inputs[idx], dataset.labels[idx]
            draw_ids = np.arange(step * config.batch, step * config.batch + len(idx))
            if config.regime == Regime.GAUSS_AUG:
                x = x + config.sigma * gaussian_rows(config.seed, context_id(Stream.TRAIN_NOISE), draw_ids, d)
            elif config.regime == Regime.NTD_AUG:
                eps = gaussian_rows(config.seed, context_id(Stream.TRAIN_NOISE), draw_ids, d)
                x = noised_denoised(x, eps, t_star, denoiser, schedule)
            elif config.regime == Regime.ADV_EPS:
                eps = gaussian_rows(config.seed, context_id(Stream.TRAIN_NOISE), draw_ids, d)
                x, _, _ = extreme_shift_batch(x, y, clf, denoiser, schedule, attack, eps, t_star)
            logits, tape = net_forward(net, x)
            losses, cot = cross_entropy(logits, y)
            loss = float(losses.mean())
            if not math.isfinite(loss):
                raise TrainingError(f"classifier loss became non-finite at step {step}")
            grads, _ = net_backward(net, tape, cot / len(idx))
            opt.step(grads)
            total += float(losses.sum())
            step += 1
        clf.loss_trace.append(total / n)
    return clf


def accuracy(classifier, dataset):
    return float(np.mean(predict_base(classifier, dataset.inputs) == dataset.labels))


def jensen_sides(x, y, classifier, denoiser, schedule, sigma, n_draws, seed=0, context=0):
    """Monte Carlo estimates of both sides of the Jensen bound at one sample.

    Returns ``(mean_sample_loss, loss_of_mean_probabilities, std_error)``. The
    first is the noised-then-denoised training loss; the second is the
    smoothed-probability loss it bounds from above.
    """
    t_star = select_tstar(sigma, schedule)
    eps = gaussian_rows(seed, context_id(Stream.TRAIN_NOISE, context), np.arange(n_draws), classifier.dim)
    xs = noised_denoised(np.asarray(x)[None, :], eps, t_star, denoiser, schedule)
    probs = classifier.probabilities(xs)
    losses, _ = cross_entropy(classifier.logits(xs), np.full(n_draws, y))
    mean_prob = probs[:, y].mean()
    return float(losses.mean()), float(-math.log(mean_prob)), float(losses.std(ddof=1) / math.sqrt(n_draws))
