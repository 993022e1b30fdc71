"""Transport mode detection from kinetic energy harvester voltage."""
__version__ = "0.1.0"
