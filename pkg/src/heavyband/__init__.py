"""Banded symmetric matrices with heavy-tailed noise: Green functions, spectra and Monte Carlo checks."""

from .core import (
    BandedSymmetricMatrix,
    RemovalSet,
    SpectralDomain,
    SpectralParameter,
    domain_mesh,
    removal_set,
)
from .models import (
    classical_locations,
    green_closed_form,
    laplacian_1d,
    laplacian_trace,
    stieltjes_arcsine,
    stieltjes_semicircle,
)
from .noise import NoiseSpec, build_noise, classify_label, detect_DN, sample_labels
from .resolvent import GreenReport, factorize, green_report, stieltjes_trace
from .spectrum import eigenvalues, reduce_to_tridiagonal

__version__ = "0.1.0"
