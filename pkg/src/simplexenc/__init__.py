"""Simplex-lattice multiresolution hash encoding."""

__version__ = "0.1.0"
