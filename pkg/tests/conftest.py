"""Shared fixtures.

The two reference eigenpairs are expensive enough (a few seconds each) to be
worth computing once per session; everything else builds its own small
objects.
"""
import numpy as np
import pytest

from abpole.rays import ModelProblem, ReferenceSolution, reference_solution


@pytest.fixture(scope="session")
def ref1() -> ReferenceSolution:
    return reference_solution(ModelProblem(index=1))


@pytest.fixture(scope="session")
def ref2() -> ReferenceSolution:
    return reference_solution(ModelProblem(index=2))


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)
