"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Each test records its verdict before asserting, so the summary lists every
criterion even when one fails.
"""
import json
import statistics
import time

import numpy as np
import pytest
from scipy import special

from conftest import random_net, record
from smoothcert.classifier import (
    Classifier,
    Regime,
    TrainConfig,
    cross_entropy,
    jensen_sides,
    noised_denoised,
    train_classifier,
)
from smoothcert.cli import run_subcommand
from smoothcert.datasets import gen_synthetic
from smoothcert.diffusion import Denoiser, build_schedule, forward_noise, select_tstar, single_shot_denoise
from smoothcert.numerics import (
    Rng,
    Stream,
    binom_two_sided_pvalue,
    clopper_pearson_lower,
    context_id,
    net_backward,
    net_forward,
    net_to_bytes,
    std_normal_cdf,
    std_normal_quantile,
)
from smoothcert.presets import DESK_CLASSIFIER, DESK_DATA, desk_classifiers, desk_data, desk_denoiser
from smoothcert.shiftattack import AttackParams, extreme_shift_batch, loss_and_eps_grad
from smoothcert.shiftmeter import shift_study
from smoothcert.smoothing import CertifyParams, SmoothedPipeline, certify, evaluate_certification

from test_smoothing import threshold_classifier


def central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gf[i] = (up - down) / (2 * h)
    return g


def worst_rel(got, want, floor=1e-8):
    """Largest relative error, with an absolute floor for gradients near zero."""
    return float(np.max(np.abs(got - want) / np.maximum(np.maximum(np.abs(want), np.abs(got)), floor)))


def test_criterion_1_gradient_fidelity():
    start = time.perf_counter()
    worst = 0.0
    schedule = build_schedule()
    for k in range(20):
        rng = np.random.default_rng(1000 + k)
        d, hidden, c = rng.integers(2, 6), rng.integers(3, 9), rng.integers(2, 5)
        # parameters and inputs of a bare net
        net = random_net(rng, [d, hidden, hidden, c])
        x, g = rng.standard_normal(d), rng.standard_normal(c)
        out, tape = net_forward(net, x)
        grads, dx = net_backward(net, tape, g)
        scalar = lambda: float(g @ net(x))
        for p, gp in zip(net.parameters(), grads):
            worst = max(worst, worst_rel(gp, central_diff(scalar, p)))
        worst = max(worst, worst_rel(dx, central_diff(scalar, x)))
        # grad wrt eps through noising, denoising and classification
        den = Denoiser(random_net(rng, [d, hidden, d], conditioning_dim=2, scale=0.4), schedule)
        clf = Classifier(random_net(rng, [d, hidden, c]))
        y, eps = int(rng.integers(c)), rng.standard_normal(d)
        t = select_tstar(float(rng.choice([0.25, 0.5, 1.0])), schedule)
        _, ge = loss_and_eps_grad(x[None], [y], eps[None], t, clf, den, schedule)
        loss = lambda: float(cross_entropy(clf.logits(noised_denoised(x, eps, t, den, schedule)), y)[0])
        worst = max(worst, worst_rel(ge[0], central_diff(loss, eps)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 10
    record(1, ok, f"gradient fidelity: worst relative error {worst:.2e} over 20 instances, {elapsed:.1f}s")
    assert ok


def test_criterion_2_statistical_exactness():
    grid = np.concatenate([np.logspace(-12, -1, 250), np.linspace(0.1, 0.9, 500), 1 - np.logspace(-1, -12, 250)])
    assert len(grid) == 1000
    q_err = max(abs(std_normal_cdf(std_normal_quantile(p)) - p) for p in grid)
    closed = max(abs(clopper_pearson_lower(n, n, a) - a ** (1.0 / n)) for n in (1, 7, 100, 1000, 10_000)
                 for a in (0.001, 0.05))

    def oracle(k, n, a):
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            # P(Bin(n, mid) >= k) is the regularized incomplete beta I_mid(k, n - k + 1)
            lo, hi = (lo, mid) if special.betainc(k, n - k + 1, mid) > a else (mid, hi)
        return 0.5 * (lo + hi)

    cases = [(k, n, a) for n in (5, 20, 100, 1000, 10_000) for k in sorted({1, n // 3, n // 2, (9 * n) // 10, n - 1})
             for a in (0.001, 0.05)]
    cp_err = max(abs(clopper_pearson_lower(k, n, a) - oracle(k, n, a)) for k, n, a in cases)
    pv_ok = True
    for n in range(1, 21):
        pmf = [special.comb(n, j, exact=True) for j in range(n + 1)]
        for k in range(n + 1):
            want = min(1.0, sum(w for w in pmf if w <= pmf[k]) / 2 ** n)
            pv_ok &= abs(binom_two_sided_pvalue(k, n) - want) <= 1e-15
    ok = q_err <= 1e-10 and closed <= 1e-15 and cp_err <= 1e-9 and pv_ok
    record(2, ok, f"statistics: quantile {q_err:.1e}, CP closed form {closed:.1e}, CP vs beta oracle {cp_err:.1e}, "
                  f"p-values exact for n<=20: {pv_ok}")
    assert ok


def test_criterion_3_certify_soundness():
    start = time.perf_counter()
    sigma, x = 1.0, 0.5
    p_true = std_normal_cdf(x / sigma)
    true_radius = sigma * std_normal_quantile(p_true)
    pipe = SmoothedPipeline(threshold_classifier(), sigma)
    false_cert = 0
    for run in range(500):
        c, r = certify(pipe, np.array([x]), CertifyParams(n0=100, n=1000, alpha=0.001, seed=run))
        false_cert += c != -1 and (c != 1 or r > true_radius)
    rate, elapsed = false_cert / 500, time.perf_counter() - start
    ok = rate <= 0.01 and elapsed < 120
    record(3, ok, f"CERTIFY soundness: false-certification rate {rate:.3f} over 500 runs "
                  f"(true radius {true_radius:.3f}), {elapsed:.1f}s")
    assert ok


def test_criterion_4_denoiser_algebra():
    s = build_schedule()
    ident = mismatch = 0.0
    for k in range(50):
        rng = Rng(k, 77)
        x0, eps, guess = rng.at(0).gaussian(64), rng.at(1).gaussian(64), rng.at(2).gaussian(64)
        for t in (1, 10, 100, 500, 1000):
            xt = forward_noise(x0, t, eps, s)
            ident = max(ident, float(np.abs(single_shot_denoise(xt, t, lambda *_: eps, s) - x0).max()))
            shift = single_shot_denoise(xt, t, lambda *_: guess, s) - x0
            mismatch = max(mismatch, float(np.abs(shift - s.sigma_equiv[t - 1] * (eps - guess)).max()))
    ok = ident <= 1e-12 and mismatch <= 1e-10
    record(4, ok, f"denoiser algebra: oracle identity {ident:.1e}, mismatch identity {mismatch:.1e}")
    assert ok


def test_criterion_5_shift_trend(desk):
    _, _, den = desk
    # 1,000 fresh samples from the desk test distribution
    data = gen_synthetic(125, seed=2, **DESK_DATA)
    start = time.perf_counter()
    means = shift_study(data, den, den.schedule, [0.25, 0.5, 1.0], 1000, seed=0).means()
    elapsed = time.perf_counter() - start
    ok = means[0] <= means[1] <= means[2] and elapsed < 60
    record(5, ok, "shift trend: mean l2 " + ", ".join(f"{m:.3f}" for m in means) + f" over 1000 samples, {elapsed:.1f}s")
    assert ok


def test_criterion_6_jensen_bound(desk, desk_models):
    _, test, den = desk
    clf = desk_models[Regime.NTD_AUG]
    start = time.perf_counter()
    violations = 0
    for k in range(len(test)):
        sample_loss, smoothed_loss, _ = jensen_sides(test.inputs[k], test.labels[k], clf, den, den.schedule,
                                                     0.5, 1000, seed=6, context=k)
        violations += sample_loss < smoothed_loss
    rate, elapsed = violations / len(test), time.perf_counter() - start
    ok = rate <= 0.01 and elapsed < 60
    record(6, ok, f"Jensen bound: violated on {violations}/{len(test)} samples, {elapsed:.1f}s")
    assert ok


def test_criterion_7_attack_efficacy(desk, desk_models):
    train, test, den = desk
    clf = desk_models[Regime.CLEAN]
    ids = np.arange(len(test))
    eps0 = np.stack([Rng(7, context_id(Stream.ATTACK, int(i))).gaussian(test.dim) for i in ids])
    _, _, trace = extreme_shift_batch(test.inputs, test.labels, clf, den, den.schedule,
                                      AttackParams(0.5, eta=0.1, M=1), eps0)
    before, after = float(trace[0].mean()), float(trace[1].mean())
    kw = dict(sigma=0.5, epochs=DESK_CLASSIFIER["finetune_epochs"], batch=DESK_CLASSIFIER["batch"],
              lr=DESK_CLASSIFIER["lr"], seed=0)
    ntd = train_classifier(train, TrainConfig(Regime.NTD_AUG, **kw), den, den.schedule, init=clf)
    adv = train_classifier(train, TrainConfig(Regime.ADV_EPS, eta=0.0, **kw), den, den.schedule, init=clf)
    same = net_to_bytes(ntd.net) == net_to_bytes(adv.net)
    ok = len(test) >= 200 and after > before and same
    record(7, ok, f"attack efficacy: mean loss {before:.4f} -> {after:.4f} over {len(test)} samples; "
                  f"eta=0 ADV_EPS bitwise equal to NTD_AUG: {same}")
    assert ok


@pytest.mark.slow
def test_criterion_8_directional_acr(desk, desk_models):
    start = time.perf_counter()
    regimes = (Regime.CLEAN, Regime.GAUSS_AUG, Regime.NTD_AUG, Regime.ADV_EPS)
    per_seed = []
    for seed in range(3):
        if seed == 0:
            (train, test, den), models = desk, desk_models
        else:
            train, test = desk_data(seed)
            den = desk_denoiser(train, seed)
            models = desk_classifiers(train, den, sigma=0.5, seed=seed)
        params = CertifyParams(n0=100, n=1000, alpha=0.001, seed=seed)
        acr = {}
        for regime in regimes:
            # GAUSS_AUG is the plain smoothing baseline, certified without the denoiser
            pipe = (SmoothedPipeline(models[regime], 0.5) if regime == Regime.GAUSS_AUG
                    else SmoothedPipeline(models[regime], 0.5, den, den.schedule))
            acr[regime] = evaluate_certification(pipe, test, params)[1]
        assert len(test) == 200
        per_seed.append(acr)
    gap = lambda a, b: statistics.median(s[a] - s[b] for s in per_seed)
    g_adv, g_ntd, g_gauss = (gap(Regime.ADV_EPS, Regime.NTD_AUG), gap(Regime.NTD_AUG, Regime.GAUSS_AUG),
                             gap(Regime.GAUSS_AUG, Regime.CLEAN))
    elapsed = time.perf_counter() - start
    ok = g_adv > 0 and g_ntd >= -0.02 and g_gauss >= -0.02 and elapsed < 1800
    table = "; ".join(", ".join(f"{r.value} {s[r]:.3f}" for r in regimes) for s in per_seed)
    record(8, ok, f"directional ACR: median gaps adv-ntd {g_adv:+.3f}, ntd-gauss {g_ntd:+.3f}, "
                  f"gauss-clean {g_gauss:+.3f}, {elapsed:.0f}s  [{table}]")
    assert ok


@pytest.mark.slow
def test_criterion_9_thread_determinism(tmp_path):
    start = time.perf_counter()
    base = ["--output-dir", str(tmp_path), "--seed", "0"]
    steps = [["gen-data"], ["train-denoiser"], ["train-classifier"], ["train-classifier", "--regime", "ntd_aug"],
             ["certify", "--regime", "clean"], ["certify", "--regime", "ntd_aug", "--threads", "1"], ["report"]]
    codes = [run_subcommand(step + base) for step in steps]
    smoke = time.perf_counter() - start
    csv = tmp_path / "certify_ntd_aug_sigma0.5.csv"
    one = csv.read_bytes()
    code8 = run_subcommand(["certify", "--regime", "ntd_aug", "--threads", "8"] + base)
    same = csv.read_bytes() == one
    rows = len(one.decode().splitlines()) - 1
    report = json.loads((tmp_path / "report.json").read_text())
    ok = codes == [0] * len(steps) and code8 == 0 and same and rows == 200 and smoke < 600
    record(9, ok, f"determinism: --threads 1 vs 8 CSV byte-identical: {same} ({rows} rows); "
                  f"smoke pipeline {smoke:.0f}s, report rows {len(report['rows'])}")
    assert ok
