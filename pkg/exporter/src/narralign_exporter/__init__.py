"""narralign-exporter: paragraph JSONL -> binary embedding matrix files."""

from .export import (
    DimensionMismatch,
    ExportJob,
    ExporterError,
    ModelUnavailable,
    export,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionMismatch",
    "ExportJob",
    "ExporterError",
    "ModelUnavailable",
    "export",
    "verify",
]
