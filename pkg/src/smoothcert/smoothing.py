"""Smoothed classifiers: Monte Carlo PREDICT and CERTIFY, radii and ACR.

Noise for sample ``i`` comes from stream ``context_id(kind, i)`` and the
draw index selects the row. Counts therefore do not depend on how the
samples are spread over worker threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import time

import numpy as np

from .diffusion import select_tstar, single_shot_denoise
from .numerics.rng import Stream, context_id, gaussian_rows
from .numerics.stats import (
    DomainError,
    binom_two_sided_pvalue,
    clopper_pearson_lower,
    std_normal_quantile,
)

ABSTAIN = -1
DEFAULT_RADII = tuple(0.25 * k for k in range(13))


class SmoothedPipeline:
    """Noise, optional single-shot denoising at ``t*``, then the base classifier."""

    def __init__(self, classifier, sigma, denoiser=None, schedule=None):
        if (denoiser is None) != (schedule is None):
            raise ValueError("denoiser and schedule must be given together")
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.classifier = classifier
        self.sigma = float(sigma)
        self.denoiser = denoiser
        self.schedule = schedule
        self.t_star = select_tstar(self.sigma, schedule) if schedule is not None else None

    @property
    def num_classes(self):
        return self.classifier.num_classes

    def base_inputs(self, x, delta):
        """Classifier inputs for clean ``x`` and a batch of perturbations ``delta``."""
        noisy = x[None, :] + delta
        if self.denoiser is None:
            return noisy
        a, _ = self.schedule.coefficients(self.t_star)
        return single_shot_denoise(a * noisy, self.t_star, self.denoiser, self.schedule)

    def classify_noisy(self, x, delta):
        return np.asarray(self.classifier.predict(self.base_inputs(x, delta)))


@dataclass(frozen=True)
class CertifyParams:
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    seed: int = 0
    batch: int = 1000

    def __post_init__(self):
        if self.n0 < 1 or self.n < self.n0 or not 0 < self.alpha < 1 or self.batch < 1:
            raise ValueError("need 1 <= n0 <= n, 0 < alpha < 1, batch >= 1")


@dataclass
class CertificationRecord:
    index: int
    label: int
    prediction: int
    radius: float
    seconds: float = 0.0

    @property
    def correct(self):
        return self.prediction != ABSTAIN and self.prediction == self.label


def sample_under_noise(pipeline, x, count, seed, context, batch=1000):
    """Class counts of the base classifier over ``count`` noise draws."""
    if count < 1:
        raise ValueError("count must be positive")
    x = np.asarray(x, dtype=np.float64)
    counts = np.zeros(pipeline.num_classes, dtype=np.int64)
    for start in range(0, count, batch):
        rows = np.arange(start, min(count, start + batch))
        delta = pipeline.sigma * gaussian_rows(seed, context, rows, x.shape[0])
        counts += np.bincount(pipeline.classify_noisy(x, delta), minlength=pipeline.num_classes)
    return counts


def _top_two(counts):
    order = np.argsort(-counts, kind="stable")
    return int(order[0]), int(counts[order[0]]), int(counts[order[1]])


def predict_smoothed(pipeline, x, params, sample_index=0):
    """Majority class if a two-sided binomial test passes at ``alpha``, else ABSTAIN."""
    counts = sample_under_noise(pipeline, x, params.n, params.seed,
                                context_id(Stream.PREDICT, sample_index), params.batch)
    return predict_from_counts(counts, params.alpha)


def predict_from_counts(counts, alpha):
    c_a, n_a, n_b = _top_two(np.asarray(counts))
    if binom_two_sided_pvalue(n_a, n_a + n_b) <= alpha:
        return c_a
    return ABSTAIN


def radius_from_count(count, n, alpha, sigma):
    """CERTIFY's radius for ``count`` top-class hits out of ``n``; None means abstain."""
    p_lower = clopper_pearson_lower(int(count), int(n), alpha)
    if p_lower <= 0.5:
        return None
    return sigma * std_normal_quantile(p_lower)


def certify(pipeline, x, params, sample_index=0):
    """Returns ``(class, radius)``, or ``(ABSTAIN, 0.0)``.

    The guess draws are discarded before the estimation draws are counted.
    """
    guess = sample_under_noise(pipeline, x, params.n0, params.seed,
                               context_id(Stream.CERT_GUESS, sample_index), params.batch)
    c_hat = int(np.argmax(guess))
    counts = sample_under_noise(pipeline, x, params.n, params.seed,
                                context_id(Stream.CERT_ESTIMATE, sample_index), params.batch)
    radius = radius_from_count(counts[c_hat], params.n, params.alpha, pipeline.sigma)
    if radius is None:
        return ABSTAIN, 0.0
    return c_hat, radius


def certified_radius_theorem(p_a, p_b, sigma):
    """Two-class-gap radius ``sigma / 2 * (Phi^-1(p_a) - Phi^-1(p_b))``."""
    if not p_a > p_b:
        raise DomainError(f"need p_a > p_b, got {p_a} <= {p_b}")
    return 0.5 * sigma * (std_normal_quantile(p_a) - std_normal_quantile(p_b))


def acr_and_table(records, radii=DEFAULT_RADII):
    """Average certified radius and certified accuracy at each radius."""
    if not records:
        return 0.0, [0.0 for _ in radii]
    correct = np.array([r.correct for r in records])
    rad = np.array([r.radius for r in records], dtype=np.float64)
    acr = float(np.sum(rad * correct) / len(records))
    table = [float(np.mean(correct & (rad > r))) for r in radii]
    return acr, table


def evaluate_certification(pipeline, dataset, params, radii=DEFAULT_RADII, threads=1, indices=None):
    """CERTIFY every sample; returns ``(records, acr, table)``.

    ``indices`` label the records and key the noise streams (defaults to the
    row positions). Results do not depend on ``threads``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    ids = np.arange(len(dataset)) if indices is None else np.asarray(indices)

    def run(k):
        start = time.perf_counter()
        pred, rad = certify(pipeline, dataset.inputs[k], params, int(ids[k]))
        return CertificationRecord(int(ids[k]), int(dataset.labels[k]), pred, rad, time.perf_counter() - start)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run, range(len(dataset))))
    else:
        records = [run(k) for k in range(len(dataset))]
    acr, table = acr_and_table(records, radii)
    return records, acr, table
