"""Run orchestration, artifact files, adapters, plotting and the CLI."""

from .adapter import run_external_backend
from .config import AdapterSpec, BuiltinSpec, RunConfig, config_from_dict, load_config
from .io import read_samples, write_samples
from .runner import RunArtifacts, RunFailure, plot_run_dir, run_benchmark, validate_run_dir
from .svg import render_pll_svg

__all__ = [
    "AdapterSpec", "BuiltinSpec", "RunArtifacts", "RunConfig", "RunFailure", "config_from_dict",
    "load_config", "plot_run_dir", "read_samples", "render_pll_svg", "run_benchmark",
    "run_external_backend", "validate_run_dir", "write_samples",
]
