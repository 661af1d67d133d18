"""Python access to the satellite stereo engine."""

from ._core import (
    Error,
    IoError,
    ParseError,
    RpcModel,
    UndefinedMetricError,
    ValidationError,
    dsm_scores,
    five_number,
    format_matches,
    load_matches,
    load_rpc,
    month_diff,
    orientation_gate,
    parse_matches,
    relative_change,
    triangulate,
)
from .matchfile import HEADER, write_match_csv

__all__ = [
    "Error",
    "HEADER",
    "IoError",
    "ParseError",
    "RpcModel",
    "UndefinedMetricError",
    "ValidationError",
    "dsm_scores",
    "five_number",
    "format_matches",
    "load_matches",
    "load_rpc",
    "month_diff",
    "orientation_gate",
    "parse_matches",
    "relative_change",
    "triangulate",
    "write_match_csv",
]
