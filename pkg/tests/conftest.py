import numpy as np
import pytest

from slerpshield.evaluation import SyntheticPopulation, generate_population
from slerpshield.protection import ProtectionParams
from slerpshield.templates import GroupLayout


def random_unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


@pytest.fixture(scope="session")
def small_pop():
    """Cheap population for protocol-level tests: d=64, 4 groups."""
    cfg = SyntheticPopulation(
        identities=10, samples_per_identity=3, d=64, intra_angle=np.radians(25.0),
        seed=101, m=4,
    )
    return generate_population(cfg)


@pytest.fixture(scope="session")
def standard_pop():
    """The default evaluation population: 50 identities, d=784, 49 groups."""
    cfg = SyntheticPopulation(
        identities=50, samples_per_identity=4, d=784, intra_angle=np.radians(25.0),
        seed=11, m=49,
    )
    return generate_population(cfg)


@pytest.fixture(scope="session")
def standard_params():
    return ProtectionParams(0.9, 0.5, GroupLayout(784, 49))


@pytest.fixture(scope="session")
def small_params():
    return ProtectionParams(0.9, 0.5, GroupLayout(64, 4))
