"""wavekin: resonant wave-kinetics laboratory at desk scale.

Subpackages follow the derivation chain: `lattice` (exact resonant
quadruplets), `effective` (slow-time stochastic integrators), `moments`
(moment chain and quasi-Gaussian closure), `kinetic` (continuum collision
integral and power-law spectra), `cli` (experiment runner).
"""

__version__ = "0.1.0"
