from .exporter import ExportError, ExportJob, ExportResult, export, read_corpus
from .models import MODEL_REGISTRY, ModelError, StubModel, load_model

__version__ = "0.1.0"

__all__ = [
    "MODEL_REGISTRY",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "ModelError",
    "StubModel",
    "export",
    "load_model",
    "read_corpus",
]
