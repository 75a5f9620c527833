import numpy as np
import pytest

from narrowtube import (ExampleFamilySpec, build_example_family,
                        limiting_scale_speed)


@pytest.fixture(scope="session")
def flat_spec():
    return ExampleFamilySpec(v1=(1.0,))


@pytest.fixture(scope="session")
def skew_spec():
    # alpha=1, beta=1, mu=0: pure scale discontinuity
    return ExampleFamilySpec(v1=(1.0,), beta=1.0, mu=0.0)


@pytest.fixture(scope="session")
def sticky_spec():
    # alpha=1, beta=0, mu=0.5: pure speed atom
    return ExampleFamilySpec(v1=(1.0,), beta=0.0, mu=0.5)


@pytest.fixture(scope="session")
def flat_family(flat_spec):
    return build_example_family(flat_spec, 0.05)


@pytest.fixture(scope="session")
def flat_table(flat_spec):
    return limiting_scale_speed(flat_spec, np.linspace(-1.0, 1.0, 21))


@pytest.fixture(scope="session")
def skew_table(skew_spec):
    return limiting_scale_speed(skew_spec, np.linspace(-1.0, 1.0, 21))


@pytest.fixture(scope="session")
def sticky_table(sticky_spec):
    return limiting_scale_speed(sticky_spec, np.linspace(-1.0, 1.0, 21))


@pytest.fixture(scope="session")
def bumpy_descriptor():
    spec = ExampleFamilySpec(v1=(1.0, 0.1, 0.4), beta=0.7, mu=0.25,
                             delta_exponent=0.3, split="symmetric")
    return build_example_family(spec, 0.05).descriptor
