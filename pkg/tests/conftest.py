import math

import numpy as np
import pytest

from r0kit import ModelSpec, MollifierFamily, MollifierKind, RateFunction

INF = math.inf


def const(c):
    return RateFunction.constant(c)


def age_model(beta, mu=1.0, D=2.0):
    """Constant-coefficient diffusive model on [0, inf)."""
    return ModelSpec(x0=0.0, x_max=INF, gamma=const(1.0), mu=const(mu),
                     beta=beta, D=D)


def size_model(beta, gamma=1.0, mu=1.0):
    """Pure-transport model on [0, inf)."""
    return ModelSpec(x0=0.0, x_max=INF, gamma=const(gamma), mu=const(mu),
                     beta=beta, D=0.0)


def cell_model(scale=1.0, mu=1.0):
    """Division at size 1, offspring concentrated at 1/2, fertility scaled."""
    return ModelSpec(x0=0.5, x_max=1.0, x_left=0.0, gamma=const(1.0),
                     mu=const(mu), beta=const(0.0), D=0.0,
                     birth_multiplicity=2.0 * scale, birth_sample_point=1.0)


def uniform_family(m):
    return MollifierFamily.for_model(MollifierKind.UNIFORM_INDICATOR, m)


def triangular_family(m):
    return MollifierFamily.for_model(MollifierKind.TRIANGULAR, m)


def bump_family(m):
    return MollifierFamily.for_model(MollifierKind.SMOOTH_BUMP, m)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
