import numpy as np
import pytest

from hypdich.problem import ProblemSpec

# Reflection matrix of the benchmark system: u1(0,t)=0, u2(1,t)=u1(1,t).
P_BENCHMARK = np.array([[0.0, 0.0], [1.0, 0.0]])
# Cyclic exchange matrix violating the smoothing hypothesis.
P_CYCLIC = np.array([[0.0, 1.0], [1.0, 0.0]])


def benchmark_linear_spec(lam: float = 0.0, T: float = 1.0,
                          p: np.ndarray | None = None,
                          f=("0", "0")) -> ProblemSpec:
    """The 2x2 constant-speed benchmark: speeds +-1, coupling -u2 into the
    first equation, parameter ``lam`` on the diagonal."""
    return ProblemSpec(
        n=2, m=1,
        A=("1", "-1"),
        B=((f"{-lam}", "1"), ("0", "0")),
        f=f,
        p=P_BENCHMARK if p is None else p,
        T=T,
        delta0=0.5,
        lambda0_declared=1.0,
    )


@pytest.fixture
def linear_spec():
    return benchmark_linear_spec()
