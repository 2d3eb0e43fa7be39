import time

import numpy as np
import pytest

from bubblelab.diagnostics_cli import RunConfig, _solve
from bubblelab.profile_core import DimensionParams, PotentialSpec
from bubblelab.quadrature_constants import compute_universal, derive_constants

MU_SWEEP = (16.0, 32.0, 64.0)


@pytest.fixture(scope="session")
def dims7():
    return DimensionParams(7)


@pytest.fixture(scope="session")
def unit_potential():
    return PotentialSpec(a=1.0, beta=4.0, period_L=5.0)


@pytest.fixture(scope="session")
def univ7(dims7, unit_potential):
    return compute_universal(dims7, unit_potential)


@pytest.fixture(scope="session")
def derived7(univ7, dims7, unit_potential):
    return derive_constants(univ7, dims7, unit_potential)


class Solutions(dict):
    seconds = 0.0


@pytest.fixture(scope="session")
def two_bubble_solutions():
    """Converged two-bubble solutions (N=7, beta=4, L=5) keyed by mu; .seconds is the solve time."""
    cfg = RunConfig()
    t0 = time.perf_counter()
    out = Solutions((mu, _solve(cfg, mu)) for mu in MU_SWEEP)
    out.seconds = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20261018)
