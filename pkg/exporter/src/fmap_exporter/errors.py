class ExportError(Exception):
    """Base class for exporter failures."""


class ExportConfigError(ExportError):
    """Configuration problem: unknown model, bad layer, missing weights."""


class ExportDataError(ExportError):
    """Input data problem: unreadable frames or ground-truth boxes."""
