import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vmdg.state import (
    MeshSpec,
    PhysicsConstants,
    SimConfig,
    SpeciesSpec,
    StateVector,
)


def make_config(
    method="rku",
    n_cells=(3, 1, 1),
    lengths=(2.0, 1.0, 1.0),
    dg_degree=1,
    orders=(3, 2, 2),
    omega_ratio=2.5,
    nu=0.7,
    two_species=True,
    shift=(0.3, 0.0, -0.2),
    dt=0.01,
    t_end=1.0,
    **kw,
):
    species = [SpeciesSpec("e", 1.0, -1.0, orders, (1.1, 0.9, 1.3), shift)]
    if two_species:
        species.append(SpeciesSpec("i", 4.0, 1.0, (2, 2, 2), (0.5, 0.6, 0.7)))
    return SimConfig(
        mesh=MeshSpec(n_cells, lengths, dg_degree),
        species=tuple(species),
        physics=PhysicsConstants(omega_ratio=omega_ratio, collision_rate=nu),
        method=method,
        dt=dt,
        t_end=t_end,
        **kw,
    )


def vacuum_config(method="rku", n_cells=(4, 1, 1), lengths=(2.0, 1.0, 1.0),
                  dg_degree=1, omega_ratio=1.0, dt=0.05, t_end=1.0, **kw):
    return SimConfig(
        mesh=MeshSpec(n_cells, lengths, dg_degree),
        species=(),
        physics=PhysicsConstants(omega_ratio=omega_ratio),
        method=method,
        dt=dt,
        t_end=t_end,
        **kw,
    )


def random_state(config, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    layout = config.layout
    return StateVector(layout, scale * rng.standard_normal(layout.total_len))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
