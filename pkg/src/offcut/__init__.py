"""offcut: waste-minimizing plank furniture design and layout optimization."""

__version__ = "0.1.0"
