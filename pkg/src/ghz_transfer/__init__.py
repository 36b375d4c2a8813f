"""Numerical simulator for coupler-mediated GHZ transfer between two cavities."""

from ghz_transfer.hilbert import (
    DensityMatrix,
    OperatorMatrix,
    QuantumState,
    SystemLayout,
    build_layout,
    embed_site_operator,
    load_state,
    mode_annihilation,
    mode_creation,
    partial_trace,
    save_state,
)

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "OperatorMatrix",
    "QuantumState",
    "SystemLayout",
    "build_layout",
    "embed_site_operator",
    "load_state",
    "mode_annihilation",
    "mode_creation",
    "partial_trace",
    "save_state",
    "__version__",
]
