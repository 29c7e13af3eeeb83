"""Named-layer CNN activation export in the FMAP interchange format."""

__version__ = "0.1.0"

from .errors import ExportConfigError, ExportDataError, ExportError
from .export import ExportConfig, Exporter, export_sequence
from .fmap import fmap_path, write_fmap
from .models import REGISTRY, build_backbone, build_fcn8s, list_layers

__all__ = [
    "ExportConfig", "Exporter", "export_sequence", "ExportError",
    "ExportConfigError", "ExportDataError", "fmap_path", "write_fmap",
    "REGISTRY", "build_backbone", "build_fcn8s", "list_layers", "__version__",
]
