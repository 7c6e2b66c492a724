"""Columnar dataset engine over a flat file or a DAOS-like object store."""

__version__ = "0.1.0"
