"""Shared ensembles for the moment and acceptance tests.

Session-scoped so the Monte Carlo runs happen once; every consumer works on
the same frozen seeds.
"""

import numpy as np
import pytest

from wavekin.effective import DampingProfile, ForcingProfile, SimConfig, simulate
from wavekin.lattice import build_lattice, quadruplet_table

NINE_DAMPING = DampingProfile(eps1=1.0, eps2=1.0, beta=2.0)
NINE_FORCING = ForcingProfile(b0=1.0, p=1.0)


@pytest.fixture(scope="session")
def nine_lattice():
    return build_lattice(2, 1, 1.5)


@pytest.fixture(scope="session")
def nine_table(nine_lattice):
    return quadruplet_table(nine_lattice)


@pytest.fixture(scope="session")
def ou_ensemble(nine_lattice, nine_table):
    """Stationary rho=0 ensemble: independent complex OU per mode."""
    cfg = SimConfig(rho=0.0, dt=0.01, T=6.0, ensemble_size=1500, seed=4242,
                    stride=200)
    res = simulate(nine_lattice, cfg, NINE_DAMPING, NINE_FORCING,
                   table=nine_table)
    return res


@pytest.fixture(scope="session")
def chain_ensemble(nine_lattice, nine_table):
    """Transient rho>0 ensemble with snapshots bracketing tau0 = 0.5."""
    cfg = SimConfig(rho=0.3, dt=0.005, T=0.7, ensemble_size=4000, seed=99,
                    stride=20)  # snapshots every 0.1
    res = simulate(nine_lattice, cfg, NINE_DAMPING, NINE_FORCING,
                   table=nine_table)
    return res
