import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from bayesbench import inference, models
from bayesbench.distributions import RngStream
from bayesbench.errors import ConfigError, InitializationError, ParameterError
from bayesbench.inference import (
    ChainSettings,
    adapt_scale,
    gibbs_flip_step,
    gumbel_softmax_relax,
    relaxed_log_density,
    run_chain,
    run_rwm,
    rwm_step,
    sample_relaxed_prior,
    topic_conditional,
    warmup_windows,
)
from bayesbench.models import GraphStructure, ModelConfig, ModelInstance, check_support


def small_noisy_or(leak=0.3):
    # three topics in a chain plus four words; moderate leaks keep both
    # states of every topic plausible
    s = GraphStructure.from_edges(
        3, 4, [leak] * 7,
        [(0, 1, 1.2), (0, 3, 0.8), (1, 2, 0.9), (1, 4, 1.5), (2, 5, 1.0), (2, 6, 0.7), (0, 6, 0.4)])
    cfg = ModelConfig("noisy_or_topic", n_topics=3, n_words=4).resolved()
    inst = ModelInstance(cfg, {"z_topics": np.array([1, 0, 1])}, structure=s)
    train = {"words": np.array([1, 0, 1, 1])}
    return inst, train


def exact_topic_marginals(inst, train):
    states = np.array(list(itertools.product([0, 1], repeat=inst.config.n_topics)))
    lj = np.array([models.log_joint(inst, train, {"z_topics": z}) for z in states])
    w = np.exp(lj - lj.max())
    w /= w.sum()
    return w @ states


# -- random-walk Metropolis -----------------------------------------------------------

def test_rwm_step_rejects_by_returning_same_state():
    state = np.zeros(2)
    new, acc = rwm_step(lambda v: 0.0 if np.all(np.abs(v) < 1e-9) else -np.inf,
                        state, 1.0, RngStream(0))
    assert not acc and new is not None and np.array_equal(new, state)


def test_rwm_step_needs_finite_start():
    with pytest.raises(InitializationError):
        rwm_step(lambda v: -np.inf, np.zeros(1), 1.0, RngStream(0))


def test_adapt_scale_direction():
    assert adapt_scale(1.0, True, 1, 0.35) > 1.0
    assert adapt_scale(1.0, False, 1, 0.35) < 1.0
    # gains shrink with the step index
    assert adapt_scale(1.0, True, 100, 0.35) < adapt_scale(1.0, True, 1, 0.35)


def test_warmup_windows():
    assert warmup_windows(1000) == [(400, 566), (566, 900)]
    assert warmup_windows(20) == []
    assert warmup_windows(0) == []


def test_rwm_recovers_correlated_gaussian():
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    prec = np.linalg.inv(cov)

    def target(v):
        return -0.5 * v @ prec @ v

    settings = ChainSettings(n_warmup=2000, n_samples=20000)
    _, draws, acc, _ = run_rwm(target, np.array([3.0, -3.0]), settings, RngStream(1))
    assert 0.15 < acc < 0.6
    np.testing.assert_allclose(draws.mean(axis=0), 0.0, atol=0.1)
    np.testing.assert_allclose(np.cov(draws, rowvar=False), cov, atol=0.12)


def test_rwm_is_reproducible():
    def target(v):
        return -0.5 * v @ v

    s = ChainSettings(n_warmup=100, n_samples=50)
    a = run_rwm(target, np.ones(3), s, RngStream(4))
    b = run_rwm(target, np.ones(3), s, RngStream(4))
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[0], b[0])


# -- Gibbs ------------------------------------------------------------------------------

def test_topic_conditional_matches_joint_ratio():
    inst, train = small_noisy_or()
    for z in itertools.product([0, 1], repeat=3):
        for j in range(3):
            on, off = np.array(z), np.array(z)
            on[j], off[j] = 1, 0
            l1 = models.log_joint(inst, train, {"z_topics": on})
            l0 = models.log_joint(inst, train, {"z_topics": off})
            want = 1.0 / (1.0 + math.exp(l0 - l1))
            got = topic_conditional(inst, train, {"z_topics": np.array(z)}, j)
            assert got == pytest.approx(want, rel=1e-10)


def test_gibbs_marginals_match_enumeration():
    inst, train = small_noisy_or()
    exact = exact_topic_marginals(inst, train)
    point = {"z_topics": np.zeros(3, dtype=np.int64)}
    rng = RngStream(2)
    draws = []
    for _ in range(20000):
        point = gibbs_flip_step(inst, train, point, rng)
        draws.append(point["z_topics"])
    np.testing.assert_allclose(np.mean(draws, axis=0), exact, atol=0.02)


def test_gibbs_keeps_binary_states():
    inst, train = small_noisy_or()
    point = gibbs_flip_step(inst, train, {"z_topics": np.array([1, 1, 0])}, RngStream(3))
    assert set(point["z_topics"].tolist()) <= {0, 1}


# -- relaxation ------------------------------------------------------------------------

def test_gumbel_softmax_is_on_simplex():
    g = np.array([0.3, -1.2, 0.8])
    x = gumbel_softmax_relax(np.log([0.2, 0.5, 0.3]), 0.5, g)
    assert x.sum() == pytest.approx(1.0) and np.all(x > 0)


def test_gumbel_softmax_rejects_bad_temperature():
    with pytest.raises(ParameterError):
        gumbel_softmax_relax([0.0, 0.0], 0.0, [0.0, 0.0])


def test_gumbel_softmax_low_temperature_is_one_hot():
    x = gumbel_softmax_relax(np.log([0.3, 0.7]), 0.01, np.array([0.0, 0.1]))
    assert x[1] > 1 - 1e-6


def test_relaxed_density_integrates_to_one():
    # one topic, one word: integrate over the logit and sum over the word
    s = GraphStructure.from_edges(1, 1, [0.7, 0.2], [(0, 1, 1.3)])
    cfg = ModelConfig("noisy_or_topic", n_topics=1, n_words=1).resolved()
    inst = ModelInstance(cfg, {"z_topics": np.array([1])}, structure=s)
    for tau in (0.5, 1.0, 2.0):
        total = 0.0
        for w in (0, 1):
            f = lambda y: math.exp(relaxed_log_density(inst, {"words": np.array([w])},
                                                       np.array([y]), tau))
            total += integrate.quad(f, -np.inf, np.inf, limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-6)


def test_relaxed_prior_root_topic_frequency():
    inst, _ = small_noisy_or(leak=0.5)
    draws = np.array([sample_relaxed_prior(inst, 0.1, RngStream(7).derive(i))
                      for i in range(4000)])
    freq = (draws[:, 0] > 0).mean()
    assert freq == pytest.approx(1 - math.exp(-0.5), abs=0.025)


def test_relaxed_chain_approaches_exact_posterior():
    inst, train = small_noisy_or()
    exact = exact_topic_marginals(inst, train)
    data = models.Dataset(train, train)
    chain = run_chain(inst, data, "relaxed_rwm",
                      ChainSettings(n_warmup=2000, n_samples=20000, temperature=0.1),
                      RngStream(5))
    np.testing.assert_allclose(chain.samples["z_topics"].mean(axis=0), exact, atol=0.06)


# -- run_chain ----------------------------------------------------------------------------

def _logistic(seed=0):
    cfg = ModelConfig("logistic_regression", n_train=400, k_covariates=2)
    inst = models.instantiate(cfg, RngStream(seed).derive("i"))
    return inst, models.simulate(inst, RngStream(seed).derive("s"))


def test_run_chain_shapes_support_and_warmup():
    inst, data = _logistic()
    chain = run_chain(inst, data, "rwm", ChainSettings(n_warmup=100, n_samples=60, keep_warmup=True),
                      RngStream(1))
    assert len(chain) == 60
    assert chain.samples["beta"].shape == (60, 2)
    assert len(list(chain.warmup_points())) == 100
    assert all(check_support(models.layout(inst), p) is None for p in chain.points())
    assert 0.0 <= chain.accept_rate <= 1.0 and chain.inference_seconds > 0


def test_run_chain_is_deterministic():
    inst, data = _logistic()
    s = ChainSettings(n_warmup=50, n_samples=30)
    a = run_chain(inst, data, "rwm", s, RngStream(9))
    b = run_chain(inst, data, "rwm", s, RngStream(9))
    assert np.array_equal(a.samples["beta"], b.samples["beta"])


def test_run_chain_rejects_incompatible_backend():
    inst, data = _logistic()
    with pytest.raises(ConfigError):
        run_chain(inst, data, "rwm_within_gibbs", ChainSettings(), RngStream(0))
    with pytest.raises(ConfigError):
        run_chain(inst, data, "hmc", ChainSettings(), RngStream(0))
    with pytest.raises(ConfigError):
        run_chain(inst, data, "rwm", ChainSettings(n_samples=0), RngStream(0))


def test_rwm_posterior_concentrates_near_truth():
    cfg = ModelConfig("logistic_regression", n_train=3000, k_covariates=2)
    inst = models.instantiate(cfg, RngStream(3).derive("i"))
    data = models.simulate(inst, RngStream(3).derive("s"))
    chain = run_chain(inst, data, "rwm", ChainSettings(n_warmup=500, n_samples=500), RngStream(2))
    beta = chain.samples["beta"]
    z = (beta.mean(axis=0) - inst.ground_truth["beta"]) / beta.std(axis=0)
    assert np.all(np.abs(z) < 4)


@pytest.mark.parametrize("kind,backend", [
    ("robust_regression", "rwm"),
    ("crowdsourced_annotation", "rwm"),
    ("noisy_or_topic", "rwm_within_gibbs"),
    ("noisy_or_topic", "relaxed_rwm"),
])
def test_every_backend_runs(kind, backend):
    cfg = ModelConfig(kind, n_train=100, k_covariates=2, n_items=20, n_labelers=4,
                      n_topics=5, n_words=15)
    inst = models.instantiate(cfg, RngStream(0).derive("i"))
    data = models.simulate(inst, RngStream(0).derive("s"))
    chain = run_chain(inst, data, backend, ChainSettings(n_warmup=40, n_samples=20), RngStream(0))
    assert len(chain) == 20
    assert all(np.isfinite(models.log_joint(inst, data.train, p)) for p in chain.points())


def test_backend_table_is_consistent():
    assert set(inference.COMPATIBLE) == set(inference.BACKENDS)
    covered = {k for kinds in inference.COMPATIBLE.values() for k in kinds}
    assert covered == set(models.MODEL_KINDS)
