import warnings

import pytest

from meclight.quantities import default_config


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture
def no_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        yield
