import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from micropolar.params import PhysicalParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def params_strategy():
    """Admissible parameters with lambda > nu, log-uniform on [0.1, 10]."""
    from hypothesis import strategies as st

    pos = st.floats(min_value=0.1, max_value=10.0, allow_nan=False)

    @st.composite
    def build(draw):
        nu = draw(pos)
        lam = nu * (1.0 + draw(st.floats(min_value=0.01, max_value=3.0)))
        rest = [draw(pos) for _ in range(6)]
        return PhysicalParams(lam, nu, *rest)

    return build()


def lattice_strategy(kmax=30):
    from hypothesis import strategies as st
    c = st.integers(min_value=-kmax, max_value=kmax)
    return st.tuples(c, c, c).map(lambda t: np.array(t, dtype=float))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
