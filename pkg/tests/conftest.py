import functools

import numpy as np
import pytest
from hypothesis import strategies as st

from strongmix.config import preset
from strongmix.spaces import UNILATERAL, FSpace, SparseVector

coef = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


@st.composite
def sparse_vectors(draw, side=UNILATERAL, max_index=30, max_terms=6, dyadic=False):
    lo = 1 if side == UNILATERAL else -max_index
    idx = draw(st.lists(st.integers(lo, max_index), max_size=max_terms, unique=True))
    if dyadic:
        vals = [draw(st.integers(-64, 64)) / 8 for _ in idx]
    else:
        vals = [draw(coef) for _ in idx]
    return SparseVector(side, dict(zip(idx, vals)))


spaces = st.sampled_from([FSpace.lp(1), FSpace.lp(2), FSpace.lp(3.5), FSpace.lp(0.5), FSpace.omega()])


@functools.lru_cache(maxsize=None)
def model_for(name, depth=12):
    return preset(name).replace(depth=depth).build()


@pytest.fixture(scope="session")
def doubling():
    return model_for("l2-doubling")


@pytest.fixture(scope="session")
def bilateral():
    return model_for("l2-bilateral")


@pytest.fixture(scope="session")
def omega():
    return model_for("omega-any")


def rng(seed=0):
    return np.random.default_rng(seed)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
