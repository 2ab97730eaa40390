import math

import pytest

from fermi2d.config import ScaleParams
from fermi2d.scales import ScaleModel, quadratic_model


@pytest.fixture(scope="session")
def params():
    return ScaleParams()


@pytest.fixture(scope="session")
def disp():
    return quadratic_model()


@pytest.fixture(scope="session")
def scales(params, disp):
    return ScaleModel(params, disp)


@pytest.fixture(scope="session")
def fermi_point(disp):
    """A point on the Fermi curve (angle 0.3) and its angle."""
    th = 0.3
    rad = float(disp.fermi_radius(th))
    return th, rad * math.cos(th), rad * math.sin(th)
