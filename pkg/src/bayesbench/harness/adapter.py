"""External samplers driven through the samples-file protocol.

The harness runs::

    <command...> --dataset <dataset.json> --settings <settings.json> \\
                 --out <samples.jsonl> --seed <int>

``settings.json`` carries the backend id, model kind, chain settings and the
parameter layout the samples file must follow. Adapters are expected to read
only the ``train`` block of the dataset; the ground truth stored under
``instance`` is there for evaluation, not for inference.
"""

from __future__ import annotations

import math
import os
import subprocess
import time
from pathlib import Path

from ..errors import BackendFailure, SampleFormatError
from ..inference import Chain, ChainSettings
from .config import AdapterSpec
from .io import read_samples, write_json

STDERR_TAIL = 2000


def settings_json(adapter: AdapterSpec, model_kind: str, settings: ChainSettings, layout) -> dict:
    return {
        "backend_id": adapter.backend_id,
        "model_kind": model_kind,
        "chain": {"n_warmup": settings.n_warmup, "n_samples": settings.n_samples},
        "layout": [{"name": s.name, "shape": list(s.shape), "kind": s.kind} for s in layout],
    }


def run_external_backend(adapter: AdapterSpec, dataset_path, chain_settings: ChainSettings,
                         trial_stream_seed: int, layout, out_dir, model_kind: str = "") -> Chain:
    """Spawn ``adapter`` for one trial and parse what it wrote.

    Parameters
    ----------
    adapter : AdapterSpec
    dataset_path : path
        The run's ``dataset.json``.
    chain_settings : ChainSettings
    trial_stream_seed : int
        Seed handed to the adapter through ``--seed``.
    layout : list of ParamSpec
        Parameters the samples must contain, used for validation.
    out_dir : path
        Trial directory; receives ``settings.json`` and ``samples.jsonl``.

    Returns
    -------
    Chain
        ``inference_seconds`` is the adapter's own report when it gives one,
        otherwise the wall time around the subprocess.

    Raises
    ------
    BackendFailure
        Reason ``missing_executable``, ``timeout``, ``exit_code`` or
        ``invalid_output``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    settings_path = out_dir / "settings.json"
    samples_path = out_dir / "samples.jsonl"
    write_json(settings_path, settings_json(adapter, model_kind, chain_settings, layout), indent=2)
    if samples_path.exists():
        samples_path.unlink()
    argv = [*adapter.command, "--dataset", os.fspath(dataset_path), "--settings",
            os.fspath(settings_path), "--out", os.fspath(samples_path),
            "--seed", str(int(trial_stream_seed))]

    start = time.perf_counter()
    try:
        proc = subprocess.run(argv, capture_output=True, text=True,
                              timeout=adapter.timeout_seconds, check=False)
    except FileNotFoundError as exc:
        raise BackendFailure("missing_executable", str(exc)) from None
    except PermissionError as exc:
        raise BackendFailure("missing_executable", str(exc)) from None
    except subprocess.TimeoutExpired:
        raise BackendFailure("timeout", f"no result after {adapter.timeout_seconds} s") from None
    wall = time.perf_counter() - start

    if proc.returncode != 0:
        tail = (proc.stderr or "").strip()[-STDERR_TAIL:]
        raise BackendFailure("exit_code", f"exit status {proc.returncode}" + (f": {tail}" if tail else ""))
    if not samples_path.exists():
        raise BackendFailure("invalid_output", f"adapter did not write {samples_path.name}")
    try:
        chain = read_samples(samples_path, layout, adapter.backend_id)
    except SampleFormatError as exc:
        raise BackendFailure("invalid_output", str(exc)) from None
    if math.isnan(chain.inference_seconds):
        chain.inference_seconds = wall
    else:
        chain.timing_source = "adapter"
    return chain
