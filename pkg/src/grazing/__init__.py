"""Near-grazing periodic orbits of impacting hybrid systems.

Submodules:

``model``         vector fields, reset laws and the linear impact oscillator
``maps``          global, virtual and discontinuity maps and the VIVID function
``mps``           one-impact p-loop periodic orbits, stability, admissibility
``theory``        closed-form unfolding quantities and resonance coefficients
``continuation``  branch and bifurcation-curve continuation
``scan``          brute-force simulation and orbit diagrams
``cli``           the ``grazing`` command
"""

from .errors import DomainError, GrazingError, NumericalFailure
from .model import ImpactOscillator, ParamPoint, State, a_graz, z_graz

__all__ = ["DomainError", "GrazingError", "ImpactOscillator", "NumericalFailure", "ParamPoint",
           "State", "a_graz", "z_graz"]
