"""Brick-kiln detection post-processing, geolocation and emission inventory."""

__version__ = "0.1.0"
