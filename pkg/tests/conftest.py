import pytest

from cascadelab import validate_params


@pytest.fixture(scope="session")
def params21():
    return validate_params(2, 1)


@pytest.fixture(scope="session")
def params32():
    return validate_params(3, 2)
