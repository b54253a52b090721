import mpmath
import pytest


@pytest.fixture(autouse=True)
def oracle_precision():
    """Reference values are computed at 160 bits unless a test says otherwise."""
    with mpmath.workprec(160):
        yield
