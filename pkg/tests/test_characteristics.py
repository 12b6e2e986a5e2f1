import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hypdich.characteristics import (
    exit_point,
    integrating_factor,
    trace_characteristic,
)
from hypdich.errors import TracingError
from hypdich.problem import ProblemSpec

from conftest import benchmark_linear_spec


def spec_with_speeds(A, m, B=None, T=None):
    n = len(A)
    B = B if B is not None else tuple(tuple("0" for _ in range(n)) for _ in range(n))
    return ProblemSpec(n=n, m=m, A=A, B=B, f=tuple("0" for _ in range(n)),
                       p=np.zeros((n, n)), T=T or 2 * math.pi, delta0=0.5)


def test_constant_speed_forward_family():
    spec = benchmark_linear_spec()
    tr = trace_characteristic(spec, None, 0, x=0.7, t=5.0)
    kind, loc, tau = exit_point(tr)
    assert kind == "boundary0" and loc == 0.0
    assert tau == pytest.approx(5.0 - 0.7, abs=1e-12)
    np.testing.assert_allclose(tr.tau, 5.0 + (tr.xi - 0.7), atol=1e-12)


def test_constant_speed_backward_family():
    spec = benchmark_linear_spec()
    tr = trace_characteristic(spec, None, 1, x=0.25, t=2.0)
    kind, loc, tau = exit_point(tr)
    assert kind == "boundary1" and loc == 1.0
    assert tau == pytest.approx(2.0 - 0.75, abs=1e-12)


def test_anchor_identity():
    spec = spec_with_speeds(("2+sin(t)", "-1"), m=1)
    tr = trace_characteristic(spec, None, 0, x=0.42, t=1.3)
    assert tr.xi[0] == 0.42 and tr.tau[0] == 1.3


def test_floor_hit():
    spec = benchmark_linear_spec()
    tr = trace_characteristic(spec, None, 0, x=0.9, t=1.0, floor_time=0.5)
    kind, loc, tau = exit_point(tr)
    assert kind == "floor"
    assert tau == 0.5
    assert loc == pytest.approx(0.4, abs=1e-10)


def test_variable_speed_matches_adaptive_reference():
    spec = spec_with_speeds(("2+sin(t)", "-1"), m=1)
    x0, t0 = 1.0, 3.7
    tr = trace_characteristic(spec, None, 0, x=x0, t=t0)

    sol = solve_ivp(lambda xi, tau: 1.0 / (2.0 + np.sin(tau[0])),
                    (x0, 0.0), [t0], rtol=1e-12, atol=1e-13, dense_output=True)
    ref = sol.sol(tr.xi)[0]
    np.testing.assert_allclose(tr.tau, ref, atol=1e-8)


def test_semigroup_along_curve():
    spec = spec_with_speeds(("2+sin(t)", "-1"), m=1)
    direct = trace_characteristic(spec, None, 0, x=0.9, t=2.0, substeps_per_unit=128)
    # restart from an exact sample of the direct trace; misalign the
    # substeps of the second leg so agreement is not trivially bitwise
    k = len(direct.xi) // 2
    x_mid, tau_mid = float(direct.xi[k]), float(direct.tau[k])
    rest = trace_characteristic(spec, None, 0, x=x_mid, t=tau_mid,
                                substeps_per_unit=192)
    assert rest.exit_time == pytest.approx(direct.exit_time, abs=1e-8)


def test_exit_boundary_law_after_crossing_time():
    # elapsed time beyond 1/Lambda0: exit abscissa is the constant of each family
    spec = benchmark_linear_spec()
    for j, expected in ((0, "boundary0"), (1, "boundary1")):
        tr = trace_characteristic(spec, None, j, x=0.5, t=10.0, floor_time=0.0)
        assert tr.exit_kind == expected


def test_speed_guard():
    spec = spec_with_speeds(("x - 0.5", "-1"), m=1)
    with pytest.raises(TracingError):
        trace_characteristic(spec, None, 0, x=1.0, t=0.0)


def test_integrating_factor_zero_coupling():
    spec = benchmark_linear_spec()
    tr = trace_characteristic(spec, None, 1, x=0.3, t=4.0)
    assert integrating_factor(spec, tr) == pytest.approx(1.0, abs=1e-14)


def test_integrating_factor_unit_case():
    # b_jj = 1, a_j = 1, from (1, t) to xi=0: integral of 1 dxi from 1 to 0 = -1
    spec = spec_with_speeds(("1",), m=1, B=(("1",),))
    tr = trace_characteristic(spec, None, 0, x=1.0, t=0.0)
    assert integrating_factor(spec, tr) == pytest.approx(math.exp(-1.0), rel=1e-10)


def test_integrating_factor_constant_ratio_closed_form():
    # b_jj = a_j = const c: integrand 1, c_j = exp(xi_exit - x)
    spec = spec_with_speeds(("3", "-2"), m=1, B=(("3", "0"), ("0", "-2")))
    tr0 = trace_characteristic(spec, None, 0, x=0.6, t=0.0)
    assert integrating_factor(spec, tr0) == pytest.approx(math.exp(-0.6), rel=1e-10)
    tr1 = trace_characteristic(spec, None, 1, x=0.6, t=0.0)
    assert integrating_factor(spec, tr1) == pytest.approx(math.exp(0.4), rel=1e-10)


def test_integrating_factor_override_callable():
    spec = benchmark_linear_spec()
    tr = trace_characteristic(spec, None, 0, x=1.0, t=2.0, substeps_per_unit=512)
    # oracle: closed form of int_1^0 xi dxi = -1/2
    c = integrating_factor(spec, tr, b_jj=lambda xi, tau: xi)
    assert c == pytest.approx(math.exp(-0.5), rel=1e-8)
