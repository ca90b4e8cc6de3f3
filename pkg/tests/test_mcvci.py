import dataclasses
import math

import numpy as np
import pytest

from hanm import data, mcvae, mcvci
from hanm.errors import ConfigError, SelectionError, TrainingError
from hanm.mcvae import MixtureCvaeConfig
from hanm.mcvci import InferenceConfig, Verdict

FAST = InferenceConfig(model=MixtureCvaeConfig(epochs=40, hidden_width=8), k_grid=(2,))


def test_config_validation_and_round_trip():
    for bad in (dict(split=1.0), dict(split=0.0), dict(alpha=0.0), dict(k_grid=()), dict(k_grid=(0,))):
        with pytest.raises(ConfigError):
            InferenceConfig(**bad)
    cfg = InferenceConfig(k_grid=[3, 1], seed=4)
    assert cfg.k_grid == (3, 1)
    assert InferenceConfig.from_dict(cfg.to_dict()) == cfg


def test_gate_examples():
    x = np.linspace(-1, 1, 30)
    passes, corr = mcvci.correlation_gate(x, x)
    assert passes and corr == pytest.approx(1.0)
    passes, corr = mcvci.correlation_gate(x, -x)
    assert passes and corr == pytest.approx(-1.0)
    gate = mcvci.correlation_gate(x, np.ones(30))
    assert not gate.passes and "zero variance" in gate.reason
    with pytest.raises(ValueError):
        mcvci.correlation_gate([1.0, 2.0], [1.0, 2.0])


def test_gate_matches_scipy_pearson():
    rng = np.random.default_rng(0)
    from scipy import stats
    for _ in range(20):
        x = rng.normal(size=40)
        y = 0.3 * x + rng.normal(size=40)
        gate = mcvci.correlation_gate(x, y)
        ref = stats.pearsonr(x, y)
        assert gate.corr == pytest.approx(ref.statistic, abs=1e-12)
        assert gate.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_gate_rejects_independent_data_at_nominal_level():
    rng = np.random.default_rng(1)
    failures = sum(not mcvci.correlation_gate(rng.normal(size=500), rng.normal(size=500)).passes
                   for _ in range(100))
    assert failures >= 90


def test_gate_invariant_to_positive_affine_rescaling():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=50), rng.normal(size=50)
    y += 0.4 * x
    a = mcvci.correlation_gate(x, y)
    b = mcvci.correlation_gate(3.0 * x + 7.0, 0.5 * y - 2.0)
    assert a.passes == b.passes and a.corr == pytest.approx(b.corr, abs=1e-12)


def test_kde_two_point_hand_value():
    train = np.array([-1.0, 1.0])
    h = 1.06 * math.sqrt(2.0) * 2 ** -0.2
    kernel = math.exp(-0.5 * (1.0 / h) ** 2) / (h * math.sqrt(2 * math.pi))
    assert mcvci.marginal_log_density(train, [0.0]) == pytest.approx(math.log(kernel), abs=1e-12)


def test_kde_far_point_is_finite_and_very_negative():
    v = mcvci.marginal_log_density(np.array([-1.0, 0.0, 1.0]), [40.0])
    assert math.isfinite(v) and v < -100


def test_kde_errors():
    with pytest.raises(ValueError):
        mcvci.marginal_log_density([1.0], [0.0])
    with pytest.raises(ValueError):
        mcvci.marginal_log_density([2.0, 2.0, 2.0], [0.0])


def test_kde_chunking_matches_single_block(monkeypatch):
    rng = np.random.default_rng(3)
    train, points = rng.normal(size=300), rng.normal(size=77)
    whole = mcvci.marginal_log_density(train, points)
    monkeypatch.setattr(mcvci, "KDE_CHUNK", 900)
    assert mcvci.marginal_log_density(train, points) == pytest.approx(whole, abs=1e-12)


def test_kde_large_sample_approaches_gaussian_entropy():
    # mean log density of N(0, 1) is minus its entropy, -0.5 * log(2 pi e)
    rng = np.random.default_rng(4)
    sample = rng.standard_normal(100_000)
    subset = sample[rng.choice(sample.size, 5000, replace=False)]
    value = mcvci.marginal_log_density(sample, subset)
    assert abs(value + 0.5 * math.log(2 * math.pi * math.e)) < 0.05


def test_confidence_examples():
    assert mcvci.confidence(-1.0, -2.0) == pytest.approx(0.5)
    assert mcvci.confidence(-2.0, -1.0) == pytest.approx(0.5)
    assert mcvci.confidence(-3.0, -3.0) == 0.0
    assert mcvci.confidence(0.0, 0.0) == 0.0
    assert 0.0 <= mcvci.confidence(1.0, -1.0) < 1.0
    rng = np.random.default_rng(5)
    for a, b in rng.normal(scale=10, size=(1000, 2)):
        assert 0.0 <= mcvci.confidence(a, b) < 1.0
        # on positive losses it is exactly 1 - min/max
        sa, sb = abs(a) + 1, abs(b) + 1
        assert mcvci.confidence(-sa, -sb) == pytest.approx(1 - min(sa, sb) / max(sa, sb), abs=1e-15)


def test_verdict_from_scores():
    assert mcvci.verdict_from_scores(-1.0, -2.0) == Verdict.X_TO_Y
    assert mcvci.verdict_from_scores(-2.0, -1.0) == Verdict.Y_TO_X
    assert mcvci.verdict_from_scores(-1.5, -1.5) == Verdict.UNDECIDED


def test_decision_rate_curve_examples():
    assert mcvci.decision_rate_curve([(0.9, True), (0.5, False)], grid=(50, 100)) == [(50, 1.0), (100, 0.5)]
    curve = mcvci.decision_rate_curve([(t, True) for t in np.linspace(0, 0.9, 37)])
    assert [k for k, _ in curve] == list(range(10, 101, 10))
    assert all(a == 1.0 for _, a in curve)
    with pytest.raises(ValueError):
        mcvci.decision_rate_curve([])


def test_decision_rate_curve_uses_integer_ceiling():
    # 7 * 30 / 100 = 2.1 -> top 3; exact integer arithmetic avoids float slop
    decisions = [(1.0 - i / 10, i < 2) for i in range(7)]
    assert dict(mcvci.decision_rate_curve(decisions, grid=(30,)))[30] == pytest.approx(2 / 3)
    assert dict(mcvci.decision_rate_curve(decisions[:10], grid=(100,)))[100] == pytest.approx(2 / 7)


def test_split_indices():
    train, test = mcvci.split_indices(10, 0.8, 0)
    assert train.size == 8 and test.size == 2
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))
    again = mcvci.split_indices(10, 0.8, 0)
    assert train.tolist() == again[0].tolist()


def _f1(seed=0, n=100):
    ds = data.standardize(data.gen_mechanism_mixture(data.default_specs("f1", n_samples=n), seed))
    return ds.x, ds.y


def test_select_k_singleton_and_ties(monkeypatch):
    x, y = _f1(n=20)
    assert mcvci.select_K(x, y, dataclasses.replace(FAST, k_grid=(1,))) == 1
    monkeypatch.setattr(mcvci, "_heldout_elbo", lambda *a, **k: -1.0)
    assert mcvci.select_K(x, y, dataclasses.replace(FAST, k_grid=(2, 1))) == 1


def test_select_k_all_diverged(monkeypatch):
    def boom(*a, **k):
        raise TrainingError("diverged", 0, "recon")

    monkeypatch.setattr(mcvci, "_fit", boom)
    x, y = _f1(n=20)
    with pytest.raises(SelectionError):
        mcvci.select_K(x, y, dataclasses.replace(FAST, k_grid=(1, 2)))


def test_select_k_matches_recomputed_validation_elbos():
    x, y = _f1()
    cfg = InferenceConfig(model=MixtureCvaeConfig(epochs=150), k_grid=(1, 2, 3))
    train, _ = mcvci.split_indices(x.size, cfg.split, cfg.seed)
    chosen, scores = mcvci.select_k_scores(x[train], y[train], cfg)
    fit, val = mcvci.split_indices(train.size, 1 - cfg.validation_fraction, cfg.seed + 1)
    xt, yt = x[train], y[train]
    recomputed = {}
    for k in (1, 2, 3):
        model, _ = mcvae.train(dataclasses.replace(cfg.model, n_components=k), xt[fit], yt[fit])
        recomputed[k] = mcvae.mean_elbo(model, xt[val], yt[val], cfg.eval_draws,
                                        np.random.default_rng([cfg.seed, 7919]))
    assert scores == pytest.approx(recomputed, abs=1e-12)
    assert chosen == max(recomputed, key=lambda k: (recomputed[k], -k))


def test_score_direction_definition_and_determinism():
    x, y = _f1(n=30)
    a = mcvci.score_direction(x, y, FAST)
    b = mcvci.score_direction(x, y, FAST)
    assert a.total == a.log_marginal + a.elbo_term
    assert a.total == b.total and a.k == 2


def test_decide_antisymmetry():
    ds = data.gen_mechanism_mixture(data.default_specs("f4", n_samples=30), seed=2)
    fw = mcvci.decide(ds, config=FAST)
    bw = mcvci.decide(ds.swapped(), config=FAST)
    assert fw.l_forward.total == bw.l_backward.total and fw.l_backward.total == bw.l_forward.total
    mirror = {Verdict.X_TO_Y: Verdict.Y_TO_X, Verdict.Y_TO_X: Verdict.X_TO_Y}
    assert bw.verdict == mirror.get(fw.verdict, fw.verdict)


def test_decide_independent_data_is_no_causal_relation():
    rng = np.random.default_rng(12)
    x, y = rng.normal(size=300), rng.normal(size=300)
    assert not mcvci.correlation_gate(x, y).passes
    d = mcvci.decide(x, y, FAST)
    assert d.verdict == Verdict.NO_CAUSAL_RELATION and d.tau == 0.0
    assert d.l_forward is None and d.l_backward is None


@pytest.mark.slow
def test_single_mechanism_forward_beats_backward():
    cfg = InferenceConfig(k_grid=(1,))
    wins = 0
    for seed in range(20):
        ds = data.gen_mechanism_mixture([data.MechanismSpec("f3", offset=(1.0, 1.0), sigma=0.05)], seed)
        st = data.standardize(ds)
        wins += mcvci.score_direction(st.x, st.y, cfg).total > mcvci.score_direction(st.y, st.x, cfg).total
    assert wins >= 17
