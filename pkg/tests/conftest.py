import numpy as np
import pytest

from gridreg.config import load_scenario, packaged_scenario_path
from gridreg.controllers import CommGraph
from gridreg.dispatch import CostModel
from gridreg.network import AreaParams, GridGraph
from gridreg.sim import simulate

# Four-area ring used across the suite, rebuilt from literals so tests do
# not depend on the shipped scenario files.
AREA_M = (5.22, 3.98, 4.49, 4.22)
AREA_A = (1.60, 1.22, 1.38, 1.42)
AREA_T_DO = (5.54, 7.41, 6.11, 6.22)
AREA_X_D = (1.84, 1.62, 1.80, 1.94)
AREA_X_DP = (0.25, 0.17, 0.36, 0.44)
AREA_E_F = (4.41, 4.20, 4.37, 4.45)
AREA_B_SELF = (-49.61, -61.66, -52.17, -40.18)
AREA_Q = (1.00, 0.75, 1.50, 0.50)
RING_EDGES = ((0, 1, 25.6), (1, 2, 33.1), (2, 3, 16.6), (0, 3, 21.0))
COMM_LINKS = ((0, 1), (0, 2), (0, 3), (1, 2), (2, 3))
LOAD_BEFORE = (2.0, 1.0, 1.5, 1.0)
LOAD_AFTER = (2.2, 1.05, 1.55, 1.1)


@pytest.fixture(scope="session")
def four_area():
    g = GridGraph(4, list(RING_EDGES), AREA_B_SELF)
    p = AreaParams(
        M=AREA_M, A=AREA_A, T_do=AREA_T_DO, X_d=AREA_X_D, X_dp=AREA_X_DP, E_f=AREA_E_F
    )
    cost = CostModel(np.asarray(AREA_Q))
    comm = CommGraph(4, list(COMM_LINKS))
    return g, p, cost, comm


@pytest.fixture(scope="session")
def scenario1():
    return load_scenario(packaged_scenario_path("scenario1"))


@pytest.fixture(scope="session")
def scenario2():
    return load_scenario(packaged_scenario_path("scenario2"))


@pytest.fixture(scope="session")
def traj1(scenario1):
    return simulate(scenario1)


@pytest.fixture(scope="session")
def traj2(scenario2):
    return simulate(scenario2)
