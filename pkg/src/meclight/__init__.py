"""Light shift and metastability-exchange dynamics of helium-3 nuclear spin precession."""

__version__ = "0.1.0"
