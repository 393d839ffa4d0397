"""Exception hierarchy for the exporter."""


class ExportError(Exception):
    """Base class for all exporter failures."""


class MetadataError(ExportError):
    """Metadata file or index map violates the corpus contract."""


class BackendError(ExportError):
    """Embedding backend is unavailable, misconfigured, or failing."""
