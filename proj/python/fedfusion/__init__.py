"""Gated cross-modal fusion classifier with federated training.

Thin wrapper over the compiled ``_core`` module. Configs, grids and reports
cross the boundary as plain dicts mirroring the JSON files the CLI reads and
writes.
"""

try:
    from ._core import (
        __version__,
        augment_corpus,
        config_hash,
        corpus_summary,
        current_profile,
        default_config,
        emit_report,
        format_percent,
        generate_corpus,
        grad_check_fusion,
        grid_search,
        mix_seed,
        pause_tokens,
        render_table,
        run_experiment,
        set_profile,
    )
except ImportError as err:  # pragma: no cover
    raise ImportError(
        "fedfusion._core is not built; run a CMake build (the module lands in "
        "python/fedfusion/) or pip install the package"
    ) from err

__all__ = [
    "__version__",
    "augment_corpus",
    "config_hash",
    "corpus_summary",
    "current_profile",
    "default_config",
    "emit_report",
    "format_percent",
    "generate_corpus",
    "grad_check_fusion",
    "grid_search",
    "mix_seed",
    "pause_tokens",
    "render_table",
    "run_experiment",
    "set_profile",
]
