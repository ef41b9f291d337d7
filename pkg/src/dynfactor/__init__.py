"""Generalised dynamic factor panels: simulation, spectral diagnostics,
transfer-function blocking, causal inversion and common-shock recovery."""

__version__ = "0.1.0"

from .core import (
    Panel,
    MatrixPolynomial,
    SpectralGrid,
    ShockSeries,
    GdfmSpec,
    IdioSpec,
    scalar_poly,
    demean,
    frequency_grid,
)

__all__ = [
    "Panel",
    "MatrixPolynomial",
    "SpectralGrid",
    "ShockSeries",
    "GdfmSpec",
    "IdioSpec",
    "scalar_poly",
    "demean",
    "frequency_grid",
    "__version__",
]
