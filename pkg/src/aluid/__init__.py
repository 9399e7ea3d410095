"""System identification workbench for an aluminum electrolysis cell."""

__version__ = "0.1.0"
