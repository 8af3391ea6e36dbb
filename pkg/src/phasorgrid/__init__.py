"""Space-phasor and quasistationary-phasor modelling of converter-rich grids."""

__version__ = "0.1.0"

from .config import load_config  # noqa: E402
