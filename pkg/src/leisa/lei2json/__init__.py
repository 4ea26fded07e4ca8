from .convert import PublishSummary, RowError, convert, convert_and_publish
from .mapping import ColumnMapping, ColumnSpec, default_mapping, load_mapping

__all__ = [
    "PublishSummary", "RowError", "convert", "convert_and_publish",
    "ColumnMapping", "ColumnSpec", "default_mapping", "load_mapping",
]
