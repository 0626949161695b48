"""Acceptance criteria, one test each.

Every test prints (and records for the terminal summary) a line of the form
``[PASS] 1 convergence-to-truth: ...`` before asserting, so a failing
criterion still reports the measured numbers.
"""

import itertools
import json
import math
import sys
import time
import textwrap

import numpy as np
import pytest
from scipy.special import logsumexp

from bayesbench import diagnostics as dg
from bayesbench import models
from bayesbench.distributions import RngStream, sample_gumbel
from bayesbench.harness import config_from_dict, read_samples, run_benchmark, validate_run_dir
from bayesbench.harness.cli import main
from bayesbench.harness.io import dataset_from_json, read_json, write_samples
from bayesbench.harness.runner import data_streams
from bayesbench.inference import gumbel_softmax_relax
from bayesbench.models import build_alpha_matrix, collapsed_item_loglik

from conftest import ACCEPTANCE_LINES


def report(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def run(tmp_path, name, obj, serial=True):
    obj = dict(obj, output_dir=str(tmp_path / name))
    return run_benchmark(config_from_dict(obj), serial=serial)


def final_mean(artifacts, backend_id):
    row = next(b for b in artifacts.metrics["backends"] if b["backend_id"] == backend_id)
    return float(np.mean(row["final_pll"]))


# -- 1 ---------------------------------------------------------------------------------------

def test_criterion_1_logistic_converges_to_truth(tmp_path):
    obj = {"model": {"model_kind": "logistic_regression", "n_train": 2000, "n_test": 2000,
                     "k_covariates": 5},
           "backends": ["rwm"], "n_trials": 4,
           "chain": {"n_warmup": 500, "n_samples": 500}, "seed": 0}
    t0 = time.perf_counter()
    art = run(tmp_path, "logistic", obj)
    elapsed = time.perf_counter() - t0
    inst, data = dataset_from_json(read_json(art.dataset_path))
    truth = models.test_pred_loglik(inst, data.test, inst.ground_truth)
    gap = abs(final_mean(art, "rwm") - truth) / 2000
    ok = gap <= 0.02 and elapsed <= 300
    report(1, "convergence-to-truth", ok,
           f"|final mean PLL - truth PLL| = {gap:.5f} nats/datapoint (<= 0.02), {elapsed:.1f} s")
    assert ok


# -- 2 ---------------------------------------------------------------------------------------

def exact_posterior_pll(inst, data):
    states = np.array(list(itertools.product([0, 1], repeat=inst.config.n_topics)))
    lj = np.array([models.log_joint(inst, data.train, {"z_topics": z}) for z in states])
    lt = np.array([models.test_pred_loglik(inst, data.test, {"z_topics": z}) for z in states])
    return float(logsumexp(lj + lt) - logsumexp(lj))


def test_criterion_2_noisy_or_backends_agree(tmp_path):
    obj = {"model": {"model_kind": "noisy_or_topic", "n_topics": 8, "n_words": 40},
           "backends": ["rwm_within_gibbs", "relaxed_rwm"], "n_trials": 4,
           "chain": {"n_warmup": 1000, "n_samples": 1000, "temperature": 0.1}, "seed": 0}
    t0 = time.perf_counter()
    art = run(tmp_path, "noisy_or", obj)
    elapsed = time.perf_counter() - t0
    inst, data = dataset_from_json(read_json(art.dataset_path))
    gibbs, relaxed = final_mean(art, "rwm_within_gibbs"), final_mean(art, "relaxed_rwm")
    exact = exact_posterior_pll(inst, data)
    ok = abs(gibbs - relaxed) <= 0.5 and abs(gibbs - exact) <= 0.1 and elapsed <= 300
    report(2, "cross-backend agreement", ok,
           f"|gibbs - relaxed| = {abs(gibbs - relaxed):.4f} (<= 0.5), "
           f"|gibbs - exact| = {abs(gibbs - exact):.4f} (<= 0.1), {elapsed:.1f} s")
    assert ok


# -- 3 ---------------------------------------------------------------------------------------

def test_criterion_3_collapsed_likelihood():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n_labelers = int(rng.integers(1, 4))
        pi = rng.dirichlet(np.ones(3))
        theta = rng.dirichlet(np.ones(3), size=(n_labelers, 3))
        labels = [(l, int(rng.integers(3))) for l in range(n_labelers)]
        direct = sum(pi[z] * math.prod(theta[l, z, y] for l, y in labels) for z in range(3))
        got = collapsed_item_loglik(pi, theta, labels)
        worst = max(worst, abs(got - math.log(direct)) / abs(math.log(direct)))
    alpha = build_alpha_matrix(3, 10.0, 0.5)
    want = np.array([[5.0, 2.5, 2.5], [2.5, 5.0, 2.5], [2.5, 2.5, 5.0]])
    ok = worst <= 1e-10 and np.array_equal(alpha, want)
    report(3, "collapsed likelihood", ok,
           f"max relative error {worst:.2e} over 50 items (<= 1e-10), "
           f"alpha matrix exact: {np.array_equal(alpha, want)}")
    assert ok


# -- 4 ---------------------------------------------------------------------------------------

def test_criterion_4_diagnostics_oracles():
    t0 = time.perf_counter()
    n = 100_000
    rng = np.random.default_rng(12345)
    eps = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = eps[0] / math.sqrt(1 - 0.81)
    for t in range(1, n):
        x[t] = 0.9 * x[t - 1] + eps[t]
    ar_ratio = dg.ess([x]) / (0.0526 * n)
    iid = dg.ess([rng.standard_normal(n)]) / n
    r_sep = dg.split_rhat(np.vstack([rng.standard_normal(2000), 3.0 + rng.standard_normal(2000)]))
    r_iid = dg.split_rhat(rng.standard_normal((2, 2000)))
    elapsed = time.perf_counter() - t0
    ok = (abs(ar_ratio - 1) <= 0.3 and 0.75 <= iid <= 1.25 and r_sep > 1.5
          and 0.99 <= r_iid <= 1.01 and elapsed <= 60)
    report(4, "diagnostics oracles", ok,
           f"AR(1) ESS / 0.0526n = {ar_ratio:.3f}, iid ESS/n = {iid:.3f}, "
           f"R-hat shifted = {r_sep:.3f}, R-hat iid = {r_iid:.4f}, {elapsed:.2f} s")
    assert ok


# -- 5 ---------------------------------------------------------------------------------------

def test_criterion_5_pll_estimator():
    small = abs(dg.pll_at_n([math.log(0.2), math.log(0.4)], 2) - math.log(0.3))
    x = np.random.default_rng(5).normal(-1500.0, 20.0, size=1000)
    run_ = dg.running_pll(x)
    diffs = [abs(run_[n - 1] - dg.pll_at_n(x, n)) for n in (1, 333, 1000)]
    ok = small <= 1e-12 and max(diffs) <= 1e-10
    report(5, "PLL estimator", ok,
           f"|PLL(2) - log 0.3| = {small:.1e} (<= 1e-12), "
           f"max incremental-vs-batch gap {max(diffs):.1e} (<= 1e-10)")
    assert ok


# -- 6 ---------------------------------------------------------------------------------------

def test_criterion_6_gumbel_softmax():
    alpha = np.array([0.2, 0.5, 0.3])
    g = sample_gumbel(RngStream(6), (100_000, 3))
    soft = gumbel_softmax_relax(np.log(alpha), 0.1, g)
    freq = np.bincount(soft.argmax(axis=1), minlength=3) / 100_000
    dev = float(np.max(np.abs(freq - alpha)))
    forced = gumbel_softmax_relax(np.log([0.3, 0.7]), 0.01, np.array([0.0, 0.1]))[1]
    ok = dev <= 0.01 and forced > 1 - 1e-6
    report(6, "Gumbel-softmax relaxation", ok,
           f"max |argmax frequency - alpha| = {dev:.4f} (<= 0.01), "
           f"forced soft coordinate 1 - {1 - forced:.1e}")
    assert ok


# -- 7 ---------------------------------------------------------------------------------------

def _artifact_bytes(root):
    files = ["dataset.json", "pll_curve.csv", "pll.svg"]
    files += sorted(str(p.relative_to(root)) for p in root.glob("*/trial_*/samples.jsonl"))
    return {f: (root / f).read_bytes() for f in files}


def test_criterion_7_determinism_and_round_trips(tmp_path):
    configs = {
        "noisy": {"model": {"model_kind": "noisy_or_topic", "n_topics": 6, "n_words": 25},
                  "n_trials": 2, "chain": {"n_warmup": 200, "n_samples": 200}, "seed": 17},
        "crowd": {"model": {"model_kind": "crowdsourced_annotation", "n_items": 40,
                            "n_labelers": 5},
                  "n_trials": 2, "chain": {"n_warmup": 200, "n_samples": 100}, "seed": 17},
    }
    identical = True
    n_files = 0
    for name, obj in configs.items():
        run(tmp_path, name + "_a", obj, serial=False)
        run(tmp_path, name + "_b", obj, serial=True)
        a, b = _artifact_bytes(tmp_path / (name + "_a")), _artifact_bytes(tmp_path / (name + "_b"))
        identical &= a == b
        n_files += len(a)

    # samples JSONL round trip: read, write again, compare values and bytes
    path = tmp_path / "crowd_a" / "rwm" / "trial_0" / "samples.jsonl"
    inst, _ = dataset_from_json(read_json(tmp_path / "crowd_a" / "dataset.json"))
    chain = read_samples(path, models.layout(inst))
    chain.inference_seconds = 0.0
    write_samples(tmp_path / "again.jsonl", chain, include_timing=False)
    again = read_samples(tmp_path / "again.jsonl", models.layout(inst))
    exact = all(again.samples[k].tobytes() == chain.samples[k].tobytes() for k in chain.samples)
    same_bytes = (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()
    ok = identical and exact and same_bytes
    report(7, "determinism and round trips", ok,
           f"{n_files} artifact files byte-identical across reruns: {identical}; "
           f"samples round trip bit-exact: {exact and same_bytes}")
    assert ok


# -- 8 ---------------------------------------------------------------------------------------

def test_criterion_8_end_to_end_cli(tmp_path):
    base = {"model": {"model_kind": "logistic_regression", "n_train": 2000, "k_covariates": 5},
            "backends": ["rwm"], "n_trials": 2,
            "chain": {"n_warmup": 500, "n_samples": 500}, "seed": 1}
    (tmp_path / "ok.json").write_text(json.dumps(base))
    code_ok = main(["run", "--config", str(tmp_path / "ok.json"), "--out", str(tmp_path / "ok")])
    problems = validate_run_dir(tmp_path / "ok")

    script = tmp_path / "failing_adapter.py"
    script.write_text(textwrap.dedent("""\
        import sys
        print("adapter crashed on purpose", file=sys.stderr)
        sys.exit(5)
    """))
    mixed = dict(base, backends=["rwm", {"backend_id": "broken",
                                         "command": [sys.executable, str(script)],
                                         "timeout_seconds": 60}])
    (tmp_path / "mixed.json").write_text(json.dumps(mixed))
    code_mixed = main(["run", "--config", str(tmp_path / "mixed.json"),
                       "--out", str(tmp_path / "mixed")])
    metrics = read_json(tmp_path / "mixed" / "metrics.json")
    rows = {b["backend_id"]: b for b in metrics["backends"]}
    recorded = (rows["broken"]["status"] == "failed"
                and rows["broken"]["failure"]["reason"] == "exit_code")
    unaffected = rows["rwm"]["status"] == "ok" and all(
        (tmp_path / "ok" / "rwm" / f"trial_{t}" / "samples.jsonl").read_bytes()
        == (tmp_path / "mixed" / "rwm" / f"trial_{t}" / "samples.jsonl").read_bytes()
        for t in range(2))
    ok = code_ok == 0 and not problems and code_mixed == 3 and recorded and unaffected
    report(8, "end-to-end CLI", ok,
           f"clean run exit {code_ok}, schema problems {len(problems)}; "
           f"failing adapter exit {code_mixed}, failure recorded {recorded}, "
           f"other backend unaffected {unaffected}")
    assert ok
