"""Static figures from training and bound-check CSVs."""

from .figures import SCHEMAS, FigureSpec, SchemaError, render

__version__ = "0.1.0"
__all__ = ["SCHEMAS", "FigureSpec", "SchemaError", "render", "__version__"]
