"""Stimulus feature export: CNN activation volumes in the FVOL format."""

from feature_exporter.export import ExportError, export_features
from feature_exporter.fvol import read_fvol, write_fvol
from feature_exporter.toyfeatures import export_toy_features

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "export_features",
    "export_toy_features",
    "read_fvol",
    "write_fvol",
]
