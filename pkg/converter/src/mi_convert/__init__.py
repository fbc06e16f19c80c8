"""One-shot converter: BCI Competition IV .mat recordings to trial bundles."""

from .convert import ConversionError, ConversionSpec, DATASETS, convert

__version__ = "0.1.0"

__all__ = ["ConversionError", "ConversionSpec", "DATASETS", "convert"]
