"""Run orchestration: one dataset, many (backend, trial) chains, one report.

Run directory layout::

    config.json                      resolved configuration + tool version
    dataset.json                     ground truth, train and test blocks
    <backend_id>/trial_<t>/samples.jsonl
    <backend_id>/trial_<t>/timing.json
    metrics.json                     diagnostics per backend
    pll_curve.csv                    backend_id, n, pll_min, pll_mean, pll_max
    pll.svg
    FAILED.json                      only when a stage or a backend failed

Random streams hang off the run seed: ``data`` feeds model instantiation and
simulation, ``chain/<backend_id>/<trial>`` feeds one chain. The dataset
therefore does not depend on the backends, trial count or plot settings.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .. import diagnostics, models
from ..distributions import RngStream
from ..errors import BackendFailure, BenchError
from ..inference import run_chain
from .adapter import run_external_backend
from .config import AdapterSpec, RunConfig, echo_config, load_schema
from .io import (
    dataset_to_json,
    read_json,
    read_pll_csv,
    write_json,
    write_pll_csv,
    write_samples,
)
from .svg import render_pll_svg

log = logging.getLogger("bayesbench")

FAILURE_MARKER = "FAILED.json"


class RunFailure(BenchError):
    """A run stage failed outside of any single backend."""

    def __init__(self, stage, detail):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {detail}")


@dataclass
class RunArtifacts:
    directory: Path
    status: str
    samples: dict = field(default_factory=dict)    # (backend_id, trial) -> path
    timings: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def config_path(self):
        return self.directory / "config.json"

    @property
    def dataset_path(self):
        return self.directory / "dataset.json"

    @property
    def metrics_path(self):
        return self.directory / "metrics.json"

    @property
    def curve_path(self):
        return self.directory / "pll_curve.csv"

    @property
    def svg_path(self):
        return self.directory / "pll.svg"


@dataclass
class _TrialResult:
    backend_id: str
    trial: int
    chain: object = None
    failure: BackendFailure | None = None
    logliks: np.ndarray | None = None          # post-warmup test log-likelihoods
    warmup_logliks: np.ndarray | None = None


def chain_stream(seed: int, backend_id: str, trial: int) -> RngStream:
    return RngStream(seed).derive("chain").derive(backend_id).derive(trial)


def data_streams(seed: int) -> tuple[RngStream, RngStream]:
    data = RngStream(seed).derive("data")
    return data.derive("instance"), data.derive("simulate")


def trial_dir(root: Path, backend_id: str, trial: int) -> Path:
    return Path(root) / backend_id / f"trial_{trial}"


def _run_trial(cfg: RunConfig, spec, trial, instance, dataset, layout, out: Path) -> _TrialResult:
    res = _TrialResult(spec.backend_id, trial)
    tdir = trial_dir(out, spec.backend_id, trial)
    tdir.mkdir(parents=True, exist_ok=True)
    stream = chain_stream(cfg.seed, spec.backend_id, trial)
    try:
        if isinstance(spec, AdapterSpec):
            seed = int(stream.derive("adapter_seed").generator.integers(0, 2**63))
            chain = run_external_backend(spec, out / "dataset.json", cfg.chain, seed, layout,
                                         tdir, cfg.model.model_kind)
        else:
            settings = dataclasses.replace(spec.settings(cfg.chain),
                                           keep_warmup=cfg.include_warmup_in_plot)
            chain = run_chain(instance, dataset, spec.backend, settings, stream)
            chain.backend_id = spec.backend_id
            write_samples(tdir / "samples.jsonl", chain, include_timing=False)
    except BackendFailure as exc:
        res.failure = exc
        return res
    except Exception as exc:    # a crashing sampler must not take the run down
        log.debug("backend %s trial %d crashed", spec.backend_id, trial, exc_info=True)
        res.failure = BackendFailure("exception", f"{type(exc).__name__}: {exc}")
        return res
    write_json(tdir / "timing.json", {
        "backend_id": spec.backend_id, "trial": trial,
        "inference_seconds": float(chain.inference_seconds), "source": chain.timing_source,
    }, indent=2)
    res.chain = chain
    res.logliks = diagnostics.chain_test_logliks(chain, instance, dataset.test)
    if cfg.include_warmup_in_plot and chain.warmup_samples:
        res.warmup_logliks = np.array([models.test_pred_loglik(instance, dataset.test, p)
                                       for p in chain.warmup_points()])
    return res


def _write_marker(out: Path, stage: str, detail: str, **extra) -> None:
    write_json(out / FAILURE_MARKER, {"stage": stage, "detail": detail, **extra}, indent=2)


def run_benchmark(cfg: RunConfig, serial: bool = False) -> RunArtifacts:
    """Execute a configured run and write all artifacts.

    Backend failures are recorded in ``metrics.json`` and never abort the
    run; failures of shared stages raise :class:`RunFailure` after writing
    the failure marker.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILURE_MARKER
    if marker.exists():
        marker.unlink()
    write_json(out / "config.json", echo_config(cfg), indent=2)

    stage = "dataset"
    try:
        inst_rng, sim_rng = data_streams(cfg.seed)
        instance = models.instantiate(cfg.model, inst_rng)
        dataset = models.simulate(instance, sim_rng)
        write_json(out / "dataset.json", dataset_to_json(instance, dataset))
        layout = models.layout(instance)

        stage = "sampling"
        jobs = [(spec, t) for spec in cfg.backends for t in range(cfg.n_trials)]
        log.info("running %d chains for %s", len(jobs), ", ".join(cfg.backend_ids))

        def job(item):
            spec, t = item
            return _run_trial(cfg, spec, t, instance, dataset, layout, out)

        if serial:
            results = [job(j) for j in jobs]
        else:
            workers = cfg.max_workers or os.cpu_count() or 1
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(job, jobs))

        stage = "diagnostics"
        artifacts, curves = _aggregate(cfg, instance, dataset, layout, results, out)

        stage = "report"
        write_pll_csv(out / "pll_curve.csv", curves)
        if curves:
            plot_run_dir(out)
        elif (out / "pll.svg").exists():
            (out / "pll.svg").unlink()
    except BenchError as exc:
        _write_marker(out, stage, str(exc))
        raise RunFailure(stage, exc) from exc
    except Exception as exc:
        _write_marker(out, stage, f"{type(exc).__name__}: {exc}",
                      traceback=traceback.format_exc(limit=5))
        raise RunFailure(stage, exc) from exc

    failed = [b["backend_id"] for b in artifacts.metrics["backends"] if b["status"] == "failed"]
    if failed:
        _write_marker(out, "sampling", "backend failure", failed_backends=failed)
    return artifacts


def _aggregate(cfg, instance, dataset, layout, results, out):
    by_backend = {bid: [] for bid in cfg.backend_ids}
    for r in results:
        by_backend[r.backend_id].append(r)

    chains, failures, final_pll, extra, curves = {}, {}, {}, {}, []
    artifacts = RunArtifacts(out, "ok")
    for bid, rs in by_backend.items():
        rs.sort(key=lambda r: r.trial)
        bad = next((r for r in rs if r.failure is not None), None)
        if bad is None and len({len(r.chain) for r in rs}) != 1:
            bad = _TrialResult(bid, rs[0].trial, failure=BackendFailure(
                "invalid_output", "trials returned different numbers of samples"))
        if bad is not None:
            log.info("backend %s failed: %s", bid, bad.failure)
            failures[bid] = {"reason": bad.failure.reason, "detail": bad.failure.detail,
                             "trial": bad.trial}
            continue
        chains[bid] = [r.chain for r in rs]
        for r in rs:
            artifacts.samples[(bid, r.trial)] = trial_dir(out, bid, r.trial) / "samples.jsonl"
            artifacts.timings[(bid, r.trial)] = trial_dir(out, bid, r.trial) / "timing.json"
        final_pll[bid] = [float(diagnostics.running_pll(r.logliks)[-1]) for r in rs]
        warm = [r.warmup_logliks for r in rs]
        if cfg.include_warmup_in_plot and all(w is not None and len(w) for w in warm):
            seqs = [np.concatenate([w, r.logliks]) for w, r in zip(warm, rs)]
            curves.append(diagnostics.curve_from_logliks(bid, seqs, len(warm[0])))
        else:
            curves.append(diagnostics.curve_from_logliks(bid, [r.logliks for r in rs]))
        extra[bid] = diagnostics.extra_metrics(instance, dataset, chains[bid])

    rows = diagnostics.summarize({b: chains[b] for b in chains}, layout, final_pll, failures, extra)
    order = {bid: i for i, bid in enumerate(cfg.backend_ids)}
    rows.sort(key=lambda row: order[row.backend_id])
    if not cfg.report_rhat:
        for row in rows:
            row.r_hat_omitted = True
            for v in row.variables:
                v.r_hat = None
    n_failed = len(failures)
    status = "ok" if not n_failed else ("failed" if n_failed == len(by_backend) else "partial")
    metrics = diagnostics.RunMetrics(cfg.model.model_kind, cfg.n_trials, rows).to_json()
    metrics = {"model_kind": metrics["model_kind"], "n_trials": metrics["n_trials"],
               "status": status, "backends": metrics["backends"]}
    jsonschema.validate(metrics, load_schema("metrics"))
    write_json(out / "metrics.json", metrics, indent=2)
    artifacts.status = status
    artifacts.metrics = metrics
    return artifacts, curves


def _plotted_warmup(config: dict) -> dict:
    """Per backend id, how many leading CSV rows are warmup draws."""
    if not config.get("include_warmup_in_plot"):
        return {}
    base = config["chain"]
    out = {}
    for b in config["backends"]:
        if "command" in b:
            out[b["backend_id"]] = 0
        else:
            out[b["backend_id"]] = b.get("chain", {}).get("n_warmup", base["n_warmup"])
    return out


def plot_run_dir(run_dir) -> Path:
    """(Re)render ``pll.svg`` from ``pll_curve.csv`` and ``config.json``."""
    run_dir = Path(run_dir)
    config = read_json(run_dir / "config.json")
    curves = read_pll_csv(run_dir / "pll_curve.csv")
    warm = _plotted_warmup(config)
    for c in curves:
        c.n_warmup = min(warm.get(c.backend_id, 0), len(c))
    svg = render_pll_svg(curves, include_warmup=bool(config.get("include_warmup_in_plot")),
                         title=config["model"]["model_kind"])
    path = run_dir / "pll.svg"
    path.write_text(svg, encoding="utf-8")
    return path


def validate_run_dir(run_dir) -> list[str]:
    """Check a finished run directory against the shipped schemas.

    Returns the list of problems; empty means valid.
    """
    run_dir = Path(run_dir)
    problems = []
    for name in ("config.json", "dataset.json", "metrics.json", "pll_curve.csv", "pll.svg"):
        if not (run_dir / name).exists():
            problems.append(f"{name}: missing")
    checks = [("dataset.json", "dataset"), ("metrics.json", "metrics")]
    for name, schema in checks:
        path = run_dir / name
        if path.exists():
            problems += [f"{name}: {e.message}" for e in
                         jsonschema.Draft202012Validator(load_schema(schema)).iter_errors(read_json(path))]
    if (run_dir / "config.json").exists():
        cfg = read_json(run_dir / "config.json")
        cfg.pop("tool_version", None)
        problems += [f"config.json: {e.message}" for e in
                     jsonschema.Draft202012Validator(load_schema("config")).iter_errors(cfg)]
        timing_schema = jsonschema.Draft202012Validator(load_schema("timing"))
        metrics = read_json(run_dir / "metrics.json") if (run_dir / "metrics.json").exists() else {}
        ok = {b["backend_id"] for b in metrics.get("backends", []) if b["status"] == "ok"}
        for bid in sorted(ok):
            for t in range(cfg["n_trials"]):
                tdir = trial_dir(run_dir, bid, t)
                for name in ("samples.jsonl", "timing.json"):
                    if not (tdir / name).exists():
                        problems.append(f"{bid}/trial_{t}/{name}: missing")
                if (tdir / "timing.json").exists():
                    problems += [f"{bid}/trial_{t}/timing.json: {e.message}"
                                 for e in timing_schema.iter_errors(read_json(tdir / "timing.json"))]
    return problems
