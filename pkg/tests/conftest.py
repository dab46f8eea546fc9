import math

import pytest
from hypothesis import HealthCheck, settings

from flowlab.field import builtin

settings.register_profile(
    "flowlab", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("flowlab")


@pytest.fixture(scope="session")
def cosh():
    return builtin("cosh")[0]


@pytest.fixture(scope="session")
def cellular():
    return builtin("cellular", alpha=1.0, beta=1.0)[0]


@pytest.fixture(scope="session")
def sine_shear():
    return builtin("shear", V="2+sin(x2)", W="2*x2-cos(x2)")[0]


@pytest.fixture(scope="session")
def unit_shear():
    return builtin("shear", V="1")[0]


@pytest.fixture(scope="session")
def couette():
    return builtin("couette", a=1.0, b=2.0)[0]


@pytest.fixture(scope="session")
def admissible_fields(cosh, sine_shear, couette):
    return {"cosh": cosh, "sine_shear": sine_shear, "couette": couette,
            "tilted_shear": builtin("shear", V="1.5+cos(2*x2)", W="1.5*x2+sin(2*x2)/2",
                                    angle=math.pi / 5)[0]}
