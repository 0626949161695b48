"""Artifact files: dataset JSON, samples JSONL, PLL curve CSV.

Floats are written with Python's shortest round-trip ``repr``, so reading a
file back yields the exact same doubles.

Samples wire format
-------------------
One JSON object per line::

    {"idx": 0, "params": {"alpha": 0.31, "beta": [1.2, -0.4]}}
    {"idx": 1, "params": {"alpha": 0.29, "beta": [1.1, -0.3]}}
    {"meta": {"inference_seconds": 0.84, "accept_rate": 0.31}}

``idx`` counts from 0 without gaps, ``params`` holds every parameter of the
model layout (scalars or nested row-major arrays) and the ``meta`` footer is
the last line. ``inference_seconds`` may be ``null``, in which case the
caller's wall-clock measurement is used.
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections import OrderedDict

import numpy as np

from .. import models
from ..diagnostics import PllCurve
from ..errors import InputError, SampleFormatError
from ..inference import Chain
from ..models import ModelConfig, check_support, point_to_json

CSV_COLUMNS = ("backend_id", "n", "pll_min", "pll_mean", "pll_max")


def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_json(path, obj, indent=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if indent is None:
            fh.write(dumps(obj))
        else:
            json.dump(obj, fh, indent=indent, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# -- dataset -----------------------------------------------------------------------------

def dataset_to_json(instance, dataset) -> dict:
    model = models.get_model(instance)
    inst = model.instance_to_json(instance)
    if dataset.hidden:
        inst["latents"] = point_to_json(dataset.hidden)
    return {
        "model_kind": instance.config.model_kind,
        "model": instance.config.to_dict(),
        "instance": inst,
        "train": model.block_to_json(dataset.train),
        "test": model.block_to_json(dataset.test),
    }


def dataset_from_json(obj):
    """Rebuild ``(instance, dataset)`` from a parsed ``dataset.json``."""
    config = ModelConfig(**obj["model"])
    model = models.get_model(config.model_kind)
    instance = model.instance_from_json(config, obj["instance"])
    hidden = {k: np.asarray(v) for k, v in obj["instance"].get("latents", {}).items()}
    return instance, models.Dataset(model.block_from_json(obj["train"]),
                                    model.block_from_json(obj["test"]), hidden)


# -- samples -----------------------------------------------------------------------------

def write_samples(path, chain: Chain, include_timing: bool = True) -> None:
    """Write ``chain`` in the JSONL wire format.

    With ``include_timing=False`` the footer carries ``null`` seconds so that
    the file depends only on the seed; the timing then lives in
    ``timing.json``.
    """
    names = list(chain.samples)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(chain)):
            params = {k: np.asarray(chain.samples[k][i]).tolist() for k in names}
            fh.write(dumps({"idx": i, "params": params}) + "\n")
        seconds = float(chain.inference_seconds) if include_timing else None
        fh.write(dumps({"meta": {"inference_seconds": seconds,
                                 "accept_rate": float(chain.accept_rate)}}) + "\n")


def _fail(path, lineno, msg):
    raise SampleFormatError(f"{os.fspath(path)}:{lineno}: {msg}")


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def read_samples(path, layout, backend_id: str = "external") -> Chain:
    """Parse and validate a samples file against a model ``layout``.

    Raises
    ------
    SampleFormatError
        On malformed JSON, a duplicate or out-of-order ``idx``, unknown or
        missing parameters, wrong shapes, support violations (naming the
        sample index and coordinate) or a missing ``meta`` footer.
    """
    specs = OrderedDict((s.name, s) for s in layout)
    draws = {name: [] for name in specs}
    meta = None
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if meta is not None:
            _fail(path, lineno, "content after the meta footer")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            _fail(path, lineno, f"invalid JSON: {exc.msg}")
        if not isinstance(obj, dict):
            _fail(path, lineno, "expected a JSON object")
        if "meta" in obj:
            meta = _parse_meta(path, lineno, obj)
            continue
        _parse_sample(path, lineno, obj, specs, draws)
    if meta is None:
        _fail(path, len(lines), "missing meta footer")
    n = len(draws[next(iter(specs))]) if specs else 0
    if n == 0:
        _fail(path, len(lines), "file holds no samples")
    samples = {k: np.stack(v) for k, v in draws.items()}
    seconds = meta["inference_seconds"]
    return Chain(samples, float(meta["accept_rate"]),
                 float("nan") if seconds is None else float(seconds), backend_id)


def _parse_meta(path, lineno, obj):
    if set(obj) != {"meta"} or not isinstance(obj["meta"], dict):
        _fail(path, lineno, "meta line must be {\"meta\": {...}}")
    meta = obj["meta"]
    unknown = sorted(set(meta) - {"inference_seconds", "accept_rate"})
    if unknown:
        _fail(path, lineno, f"unknown meta key {unknown[0]!r}")
    if "accept_rate" not in meta or not _is_real(meta["accept_rate"]) \
            or not 0.0 <= meta["accept_rate"] <= 1.0:
        _fail(path, lineno, "meta.accept_rate must be a real in [0, 1]")
    secs = meta.get("inference_seconds")
    if secs is not None and (not _is_real(secs) or secs < 0):
        _fail(path, lineno, "meta.inference_seconds must be a non-negative real or null")
    return {"inference_seconds": secs, "accept_rate": meta["accept_rate"]}


def _parse_sample(path, lineno, obj, specs, draws):
    unknown = sorted(set(obj) - {"idx", "params"})
    if unknown:
        _fail(path, lineno, f"unknown key {unknown[0]!r}")
    idx = obj.get("idx")
    if not isinstance(idx, int) or isinstance(idx, bool):
        _fail(path, lineno, "idx must be an integer")
    expected = len(draws[next(iter(specs))]) if specs else 0
    if idx < expected:
        _fail(path, lineno, f"duplicate idx {idx}")
    if idx != expected:
        _fail(path, lineno, f"idx {idx} out of order, expected {expected}")
    params = obj.get("params")
    if not isinstance(params, dict):
        _fail(path, lineno, f"sample {idx}: params must be an object")
    for key in params:
        if key not in specs:
            _fail(path, lineno, f"sample {idx}: unknown parameter {key!r}")
    point = {}
    for name, spec in specs.items():
        if name not in params:
            _fail(path, lineno, f"sample {idx}: missing parameter {name!r}")
        try:
            value = np.asarray(params[name], dtype=np.int64 if spec.kind == "binary" else float)
        except (TypeError, ValueError):
            _fail(path, lineno, f"sample {idx}: parameter {name!r} is not a numeric array "
                                f"of shape {spec.shape}")
        if spec.kind == "binary" and not np.array_equal(value, np.asarray(params[name], dtype=float)):
            _fail(path, lineno, f"sample {idx}: parameter {name!r} must hold integers")
        if value.shape != spec.shape:
            _fail(path, lineno, f"sample {idx}: parameter {name!r} has shape {value.shape}, "
                                f"expected {spec.shape}")
        point[name] = value
    bad = check_support(list(specs.values()), point)
    if bad is not None:
        _fail(path, lineno, f"sample {idx}: {bad}")
    for name, value in point.items():
        draws[name].append(value)


# -- PLL curve CSV ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_pll_csv(path, curves) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for curve in curves:
            for bid, n, lo, mid, hi in curve.rows():
                w.writerow([bid, n, _fmt(lo), _fmt(mid), _fmt(hi)])


def read_pll_csv(path, n_samples: int | None = None) -> list[PllCurve]:
    """Read curves back; rows beyond ``n_samples`` per backend count as warmup."""
    rows = OrderedDict()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise InputError(f"{os.fspath(path)}: expected header {','.join(CSV_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise InputError(f"{os.fspath(path)}:{lineno}: expected {len(CSV_COLUMNS)} columns")
            rows.setdefault(row[0], []).append([float(v) for v in row[2:]])
    curves = []
    for bid, vals in rows.items():
        arr = np.array(vals, dtype=float)
        n_warm = max(len(arr) - n_samples, 0) if n_samples is not None else 0
        curves.append(PllCurve(bid, arr[:, 0], arr[:, 1], arr[:, 2], n_warm))
    return curves
