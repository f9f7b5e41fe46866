import pytest

from riccati_mdp import solve_dare
from riccati_mdp.models import planar_model, scalar_study_model


@pytest.fixture(scope="session")
def scalar_model():
    return scalar_study_model()


@pytest.fixture(scope="session")
def planar():
    return planar_model()


@pytest.fixture(scope="session")
def scalar_pstar(scalar_model):
    return solve_dare(scalar_model).p_star


@pytest.fixture(scope="session")
def planar_pstar(planar):
    return solve_dare(planar).p_star
