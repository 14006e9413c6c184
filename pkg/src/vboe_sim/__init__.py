"""Simulator for verifiable blind estimation of a binary observable in MBQC."""

__version__ = "0.1.0"

from .errors import VBOEError  # noqa: E402
from .mbqc import Flow, Graph, MeasurementPattern, load_pattern, path_pattern, run_dmbqc  # noqa: E402
from .protocol import ProtocolParams, Verdict, run_vboe, sdoe_ideal, sdqc_ideal, validate_params  # noqa: E402

__all__ = [
    "Flow",
    "Graph",
    "MeasurementPattern",
    "ProtocolParams",
    "VBOEError",
    "Verdict",
    "load_pattern",
    "path_pattern",
    "run_dmbqc",
    "run_vboe",
    "sdoe_ideal",
    "sdqc_ideal",
    "validate_params",
]
