import pytest

from core.lp import Grid
from core.models import Params, PressureLaw


def build_params(epsilon=0.01, tau=0.1, gamma_plus=2.0, gamma_minus=1.4, alpha_bar_plus=0.5, rho_bar_plus=1.0):
    return Params.build(
        epsilon=epsilon,
        tau=tau,
        law_plus=PressureLaw(1.0, gamma_plus),
        law_minus=PressureLaw(1.0, gamma_minus),
        alpha_bar_plus=alpha_bar_plus,
        rho_bar_plus=rho_bar_plus,
    )


@pytest.fixture
def make_params():
    return build_params


@pytest.fixture
def params():
    return build_params()


@pytest.fixture
def grid():
    return Grid(1, 64)


@pytest.fixture
def physics_section():
    return {
        "epsilon": 0.05,
        "tau": 0.5,
        "A_plus": 1.0,
        "gamma_plus": 2.0,
        "A_minus": 1.0,
        "gamma_minus": 1.4,
        "alpha_bar_plus": 0.5,
        "rho_bar_plus": 1.0,
    }
