"""Indoor 3D radio-map simulation and estimation."""
__version__ = "0.1.0"
