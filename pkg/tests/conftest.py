"""Shared fixtures: parameter profiles and key material are expensive to
build (keygen runs a full NTT key-switching setup), so they are created
once per session and treated as immutable by every test."""

import numpy as np
import pytest

from fedfhe import ckks


@pytest.fixture(scope="session")
def desk_params():
    return ckks.make_params("desk")


@pytest.fixture(scope="session")
def desk_keys(desk_params):
    return ckks.keygen(desk_params, seed=42)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
