"""Bistable nanomechanical resonators tuned by a single chemical bond.

Modules: ``potential`` (bond models and fitting), ``tuning`` (control-force
map and its inverse), ``duffing`` (steady-state response and bifurcation),
``sde`` (stochastic integrators), ``analysis`` (spectra, switching,
stochastic-resonance inversion), ``noisebudget`` and ``cli``.
"""

from importlib.metadata import PackageNotFoundError, version

from ._backend import BACKEND
from .errors import BistateError, DivergenceError, DomainError, FitError, InstabilityError, NotFoundError

try:
    __version__ = version("artifact")  # distribution name
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "BACKEND",
    "BistateError",
    "DivergenceError",
    "DomainError",
    "FitError",
    "InstabilityError",
    "NotFoundError",
    "__version__",
]
