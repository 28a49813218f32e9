import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

import prunebench as pb


@pytest.fixture(scope="session")
def tiny_spec():
    return pb.ModelSpec(pb.NetworkParam(1, 1, 1, 1), 16)


@pytest.fixture(scope="session")
def small_spec():
    return pb.ModelSpec(pb.NetworkParam(2, 3, 3, 4), 16)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
