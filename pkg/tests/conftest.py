import os

import pytest

from smibctrl import machine
from smibctrl.networks import load_weights

CONFIGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "configs")


def config_path(name: str) -> str:
    return os.path.join(CONFIGS, name)


@pytest.fixture(scope="session")
def ref_params():
    return machine.MachineParams()


@pytest.fixture(scope="session")
def nominal_eq(ref_params):
    """Equilibrium state and field voltage at the nominal operating point."""
    return machine.find_equilibrium(ref_params, 1.1392)


@pytest.fixture(scope="session")
def shipped_nets():
    return load_weights(config_path("narx_ref.nwt"))
