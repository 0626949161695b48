import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayesbench import diagnostics as dg
from bayesbench.errors import DegenerateVarianceError, InputError
from bayesbench.inference import Chain
from bayesbench.models import ParamSpec


def ar1(rho, n, seed, m=1):
    rng = np.random.default_rng(seed)
    x = np.empty((m, n))
    x[:, 0] = rng.standard_normal(m) / math.sqrt(1 - rho**2)
    eps = rng.standard_normal((m, n))
    for t in range(1, n):
        x[:, t] = rho * x[:, t - 1] + eps[:, t]
    return x


# -- PLL ----------------------------------------------------------------------------

def test_pll_at_n_small_example():
    assert dg.pll_at_n([math.log(0.2), math.log(0.4)], 2) == pytest.approx(math.log(0.3), abs=1e-12)


def test_pll_uses_prefix_only():
    x = [math.log(0.2), math.log(0.4), 50.0]
    assert dg.pll_at_n(x, 1) == pytest.approx(math.log(0.2), abs=1e-15)


def test_pll_is_stable_for_large_negative_values():
    x = np.array([-1e5, -1e5 + math.log(3.0)])
    assert dg.pll_at_n(x, 2) == pytest.approx(-1e5 + math.log(2.0), abs=1e-9)


def test_pll_argument_errors():
    with pytest.raises(InputError):
        dg.pll_at_n([0.0], 0)
    with pytest.raises(InputError):
        dg.pll_at_n([0.0], 2)


def test_running_pll_matches_batch():
    x = np.random.default_rng(0).normal(-300.0, 5.0, size=400)
    run = dg.running_pll(x)
    for n in (1, 37, 400):
        assert run[n - 1] == pytest.approx(dg.pll_at_n(x, n), abs=1e-10)


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=40), st.floats(-1e3, 1e3))
def test_running_pll_shift_and_bounds(x, c):
    x = np.array(x)
    run = dg.running_pll(x)
    np.testing.assert_allclose(dg.running_pll(x + c), run + c, atol=1e-7)
    prefix_max = np.maximum.accumulate(x)
    prefix_min = np.minimum.accumulate(x)
    assert np.all(run <= prefix_max + 1e-9) and np.all(run >= prefix_min - 1e-9)


def test_curve_aggregates_trials():
    a = np.log([0.2, 0.4, 0.3])
    b = np.log([0.5, 0.1, 0.3])
    curve = dg.curve_from_logliks("x", [a, b])
    ra, rb = dg.running_pll(a), dg.running_pll(b)
    np.testing.assert_allclose(curve.pll_min, np.minimum(ra, rb))
    np.testing.assert_allclose(curve.pll_max, np.maximum(ra, rb))
    np.testing.assert_allclose(curve.pll_mean, (ra + rb) / 2)
    rows = list(curve.rows())
    assert rows[0][:2] == ("x", 1) and len(rows) == 3


def test_curve_rejects_ragged_trials():
    with pytest.raises(InputError):
        dg.curve_from_logliks("x", [[0.0, 1.0], [0.0]])
    with pytest.raises(InputError):
        dg.curve_from_logliks("x", [])


# -- ESS ----------------------------------------------------------------------------------

def test_ess_ar1_matches_analytic():
    n = 100_000
    e = dg.ess(ar1(0.9, n, seed=42))
    assert abs(e / n - 0.1 / 1.9) < 0.3 * (0.1 / 1.9)


def test_ess_ar1_multichain():
    x = ar1(0.5, 20_000, seed=1, m=4)
    want = x.size * 0.5 / 1.5
    assert dg.ess(x) == pytest.approx(want, rel=0.1)


def test_ess_iid():
    n = 50_000
    e = dg.ess(np.random.default_rng(3).standard_normal((1, n)))
    assert 0.75 * n <= e <= 1.25 * n


def test_ess_antithetic_is_capped():
    x = np.tile([1.0, -1.0], 500) + 1e-3 * np.random.default_rng(0).standard_normal(1000)
    assert dg.ess([x]) == pytest.approx(1.5 * 1000)


def test_ess_constant_series():
    with pytest.raises(DegenerateVarianceError):
        dg.ess([np.ones(100)])


def test_ess_needs_equal_lengths():
    with pytest.raises(InputError):
        dg.ess([np.zeros(20), np.zeros(30)])


# -- R-hat --------------------------------------------------------------------------------

def test_rhat_iid_chains_near_one():
    rng = np.random.default_rng(5)
    r = dg.split_rhat(rng.standard_normal((2, 5000)))
    assert 0.99 <= r <= 1.01


def test_rhat_separated_chains():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 1000))
    x[1] += 3.0
    assert dg.split_rhat(x) > 1.5


def test_rhat_detects_within_chain_drift():
    # split halves catch a trend that a single mean would hide
    t = np.linspace(0.0, 4.0, 2000)
    rng = np.random.default_rng(7)
    x = np.vstack([t + rng.standard_normal(2000), t + rng.standard_normal(2000)])
    assert dg.split_rhat(x) > 1.2


def test_rhat_matches_textbook_formula():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((3, 200)) + np.array([[0.0], [0.3], [0.1]])
    halves = np.vstack([x[:, :100], x[:, 100:]])
    n = 100
    w = halves.var(axis=1, ddof=1).mean()
    b = n * halves.mean(axis=1).var(ddof=1)
    want = math.sqrt(((n - 1) / n * w + b / n) / w)
    assert dg.split_rhat(x) == pytest.approx(want, rel=1e-12)


def test_rhat_degenerate():
    with pytest.raises(DegenerateVarianceError):
        dg.split_rhat(np.zeros((2, 50)))


# -- summaries ------------------------------------------------------------------------------

def chain(values, seconds=2.0, bid="b"):
    return Chain({"a": np.asarray(values, dtype=float),
                  "z": np.zeros((len(values), 2))}, 0.3, seconds, bid)


LAYOUT = [ParamSpec("a", (), "real"), ParamSpec("z", (2,), "real")]


def test_variable_diagnostics_flags():
    rng = np.random.default_rng(0)
    rows = dg.variable_diagnostics([chain(rng.standard_normal(100)),
                                    chain(rng.standard_normal(100))], LAYOUT)
    names = [r.name for r in rows]
    assert names == ["a", "z[0]", "z[1]"]
    assert rows[0].flag is None and rows[0].r_hat is not None
    assert rows[0].ess_per_sec == pytest.approx(rows[0].ess / 4.0)
    assert rows[1].flag == dg.DEGENERATE and rows[1].ess is None


def test_single_trial_omits_rhat():
    rows = dg.summarize({"b": [chain(np.random.default_rng(1).standard_normal(50))]}, LAYOUT)
    assert rows[0].r_hat_omitted
    assert rows[0].variables[0].r_hat is None
    assert rows[0].variables[0].flag == dg.SINGLE_TRIAL


def test_summarize_failures_and_json():
    rng = np.random.default_rng(2)
    rows = dg.summarize({"ok": [chain(rng.standard_normal(60), bid="ok") for _ in range(2)]},
                        LAYOUT, final_pll={"ok": [-1.0, float("-inf")]},
                        failures={"bad": {"reason": "timeout", "detail": "x"}})
    assert [r.backend_id for r in rows] == ["ok", "bad"]
    assert rows[1].status == "failed"
    js = json.loads(json.dumps(rows[0].to_json(), allow_nan=False))
    assert js["final_pll"] == [-1.0, None]
    assert set(js["ess_per_sec"]) == {"min", "median", "max"}


def test_min_median_max():
    assert dg.min_median_max([3.0, None, 1.0, 2.0, float("nan")]) == \
        {"min": 1.0, "median": 2.0, "max": 3.0}
    assert dg.min_median_max([]) == {"min": None, "median": None, "max": None}


def test_extra_metric_hook():
    dg.register_metric("logistic_regression", "n_chains", lambda inst, data, chains: {"n": len(chains)})
    try:
        class Inst:
            class config:
                model_kind = "logistic_regression"
        assert dg.extra_metrics(Inst, None, [1, 2]) == {"n_chains": {"n": 2}}
    finally:
        dg.EXTRA_METRICS["logistic_regression"].pop("n_chains")
    with pytest.raises(InputError):
        dg.register_metric("nope", "x", lambda *a: {})


def test_short_chains_are_flagged_not_fatal():
    rows = dg.variable_diagnostics([chain([0.1, 0.5, 0.2]), chain([0.3, 0.2, 0.9])], LAYOUT)
    assert rows[0].flag == dg.TOO_SHORT and rows[0].ess is None
