import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import zero_denoiser
from smoothcert.classifier import Classifier, Regime, predict_base
from smoothcert.datasets import LabeledDataset
from smoothcert.diffusion import build_schedule
from smoothcert.numerics import DomainError, FeedForwardNet, Layer, std_normal_cdf
from smoothcert.smoothing import (
    ABSTAIN,
    DEFAULT_RADII,
    CertificationRecord,
    CertifyParams,
    SmoothedPipeline,
    acr_and_table,
    certified_radius_theorem,
    certify,
    evaluate_certification,
    predict_from_counts,
    predict_smoothed,
    radius_from_count,
    sample_under_noise,
)


def threshold_classifier():
    """1-D base classifier: class 1 iff x > 0."""
    return Classifier(FeedForwardNet([Layer([[-1.0], [1.0]], [0.0, 0.0])], 1))


def test_tiny_sigma_counts_land_on_base_prediction(desk, desk_models):
    _, test, den = desk
    clf = desk_models[Regime.CLEAN]
    pipe = SmoothedPipeline(clf, 1e-9)
    for k in (0, 17, 101):
        counts = sample_under_noise(pipe, test.inputs[k], 200, seed=0, context=k)
        assert counts[predict_base(clf, test.inputs[k])] == 200


def test_constant_classifier_counts_all_zero_class():
    clf = Classifier(FeedForwardNet([Layer(np.zeros((3, 4)), np.zeros(3))], 4))
    s = build_schedule()
    pipe = SmoothedPipeline(clf, 0.5, zero_denoiser(4, s), s)
    assert sample_under_noise(pipe, np.ones(4), 777, 1, 2, batch=100).tolist() == [777, 0, 0]


def test_counts_independent_of_batch_size():
    pipe = SmoothedPipeline(threshold_classifier(), 1.0)
    a = sample_under_noise(pipe, [0.1], 2500, 3, 4, batch=1000)
    b = sample_under_noise(pipe, [0.1], 2500, 3, 4, batch=7)
    np.testing.assert_array_equal(a, b)


def test_predict_from_counts():
    assert predict_from_counts([90, 10], 0.001) == 0
    assert predict_from_counts([10, 3, 90], 0.001) == 2
    assert predict_from_counts([60, 40], 0.001) == ABSTAIN
    assert predict_from_counts([50, 50], 0.001) == ABSTAIN
    assert predict_from_counts([0, 0], 0.001) == ABSTAIN


def test_certify_count_to_radius():
    assert radius_from_count(4000, 10_000, 0.001, 0.5) is None
    assert radius_from_count(10_000, 10_000, 0.001, 0.5) == pytest.approx(1.599288757369166, rel=1e-10)
    assert radius_from_count(5000, 10_000, 0.001, 0.5) is None


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 500), st.floats(0.1, 2.0))
def test_radius_monotone_in_count(n, sigma):
    prev = 0.0
    for k in range(n + 1):
        r = radius_from_count(k, n, 0.001, sigma)
        r = 0.0 if r is None else r
        assert r >= prev
        prev = r


def test_theorem_radius():
    # with p_b = 1 - p_a the gap form reduces to sigma * Phi^-1(p_a)
    for p in (0.6, 0.8, 0.99, 0.999):
        assert certified_radius_theorem(p, 1 - p, 0.7) == pytest.approx(0.7 * _q(p), rel=1e-9)
    assert certified_radius_theorem(0.99, 0.01, 1.0) == pytest.approx(2.3263478740408408, rel=1e-12)
    assert certified_radius_theorem(0.9, 0.05, 2.0) == pytest.approx(2 * certified_radius_theorem(0.9, 0.05, 1.0))
    with pytest.raises(DomainError):
        certified_radius_theorem(0.4, 0.4, 1.0)


def _q(p):
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if std_normal_cdf(mid) < p else (lo, mid)
    return 0.5 * (lo + hi)


def test_acr_examples():
    abstains = [CertificationRecord(k, 0, ABSTAIN, 0.0) for k in range(5)]
    acr, table = acr_and_table(abstains)
    assert acr == 0.0 and all(v == 0.0 for v in table)
    acr, table = acr_and_table([CertificationRecord(0, 1, 1, 1.2), CertificationRecord(1, 0, 1, 5.0)], radii=(0, 1.2, 1.5))
    assert acr == pytest.approx(0.6)
    assert table == [0.5, 0.0, 0.0]  # strict inequality at r = 1.2


def test_threshold_soundness():
    # smoothed threshold at 0 keeps its decision boundary at 0, so the true radius is |x|
    pipe = SmoothedPipeline(threshold_classifier(), 1.0)
    params = CertifyParams(n0=100, n=10_000, alpha=0.001, seed=5)
    for k, x in enumerate((-1.5, -0.6, 0.3, 0.9, 2.0)):
        c, r = certify(pipe, np.array([x]), params, sample_index=k)
        if c != ABSTAIN:
            assert c == int(x > 0) and r <= abs(x)
    c, r = certify(pipe, np.array([2.0]), params)
    assert c == 1 and r > 1.5
    assert r <= 1.0 * _q(std_normal_cdf(2.0))


def test_predict_agrees_with_certify_when_confident():
    pipe = SmoothedPipeline(threshold_classifier(), 0.5)
    params = CertifyParams(n0=100, n=2000, seed=1)
    for k, x in enumerate((-1.0, 1.0, 0.8)):
        pred = predict_smoothed(pipe, np.array([x]), params, k)
        c, _ = certify(pipe, np.array([x]), params, k)
        assert pred == c == int(x > 0)
    assert predict_smoothed(pipe, np.array([0.0]), params) == ABSTAIN


def test_thread_count_does_not_change_records(desk, desk_models):
    _, test, den = desk
    pipe = SmoothedPipeline(desk_models[Regime.NTD_AUG], 0.5, den, den.schedule)
    sub = LabeledDataset(test.inputs[:12], test.labels[:12], test.num_classes, test.side)
    params = CertifyParams(n0=20, n=200, seed=3, batch=64)
    one, acr1, table1 = evaluate_certification(pipe, sub, params, threads=1, indices=np.arange(100, 112))
    many, acr8, table8 = evaluate_certification(pipe, sub, params, threads=8, indices=np.arange(100, 112))
    strip = lambda recs: [dataclasses.replace(r, seconds=0.0) for r in recs]
    assert strip(one) == strip(many)
    assert acr1 == acr8 and table1 == table8
    assert [r.index for r in one] == list(range(100, 112))


def test_pipeline_validation():
    s = build_schedule()
    with pytest.raises(ValueError):
        SmoothedPipeline(threshold_classifier(), 0.5, denoiser=zero_denoiser(1, s))
    with pytest.raises(ValueError):
        SmoothedPipeline(threshold_classifier(), 0.0)
    with pytest.raises(ValueError):
        CertifyParams(n0=10, n=5)
    assert SmoothedPipeline(threshold_classifier(), 0.5, zero_denoiser(1, s), s).t_star >= 1
    assert DEFAULT_RADII[0] == 0.0 and math.isclose(DEFAULT_RADII[-1], 3.0) and len(DEFAULT_RADII) == 13
