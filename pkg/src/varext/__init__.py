"""Varopoulos-type extensions on planar domains with Ahlfors-regular boundaries."""

__version__ = "0.1.0"
