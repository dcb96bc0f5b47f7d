"""Exact homological perturbation engine: graded algebra, BV homotopy
transfer, half-line TQM effective theories, and derived BV structures."""

__version__ = "0.1.0"
