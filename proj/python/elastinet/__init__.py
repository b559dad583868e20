"""Elastic multi-variant network runtime: Python surface over the C++ core.

The heavy lifting (tensor kernels, staged training, the analytic profiler,
the B+-tree-indexed performance tables, and the adaptation loop) lives in the
compiled ``_core`` extension; this package re-exports its public names.
"""

from ._core import (
    ArchSpec,
    Dataset,
    DeviceProfile,
    ElasticNetwork,
    PerfTables,
    __version__,
    make_bars_dataset,
    operator_names,
    parse_arch_file,
    parse_arch_text,
    predict,
    run_loop,
    select_variant,
    synth_trace,
    write_chart,
)

__all__ = [
    "ArchSpec",
    "Dataset",
    "DeviceProfile",
    "ElasticNetwork",
    "PerfTables",
    "__version__",
    "make_bars_dataset",
    "operator_names",
    "parse_arch_file",
    "parse_arch_text",
    "predict",
    "run_loop",
    "select_variant",
    "synth_trace",
    "write_chart",
]
