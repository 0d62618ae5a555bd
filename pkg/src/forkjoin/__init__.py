"""Performance and power analysis of (n, k) fork-join systems with probabilistic slowdown.

Modules
-------
model      configuration, state and report types
approx     closed-form tandem-queue approximation
ctmc       exact lumped Markov chain and a truncated stationary solver
sim        trajectory and server-level simulators
optimizer  tradeoff curves and SLA-constrained choice of ``p``
cli        command-line front end
"""
__version__ = "0.1.0"

from .errors import ForkJoinError  # noqa: E402
from .model import PowerModel, SystemConfig, reference_config  # noqa: E402

__all__ = ["ForkJoinError", "PowerModel", "SystemConfig", "reference_config", "__version__"]
