import numpy as np
import pytest

from hypdich.fields import SpaceTimeField
from hypdich.problem import ProblemSpec
from hypdich.quasilinear import (
    c1_difference,
    freeze_coefficients,
    iterate,
    pde_residual,
)

from conftest import P_BENCHMARK

TWO_PI = 6.283185307179586
PI = 3.141592653589793


def quasi_spec(eps, slope=0.4):
    """State-dependent speeds around +-1, stable linearization."""
    return ProblemSpec(
        n=2, m=1,
        A=(f"1 + {slope}*u1", f"-1 + {slope}*u2"),
        B=(("-0.2*u1", "1 - 0.2*u2"), ("0", "0")),
        f=(f"{eps}*sin({TWO_PI}*t)*sin({PI}*x)",
           f"{eps}*cos({TWO_PI}*t)*sin({PI}*x)"),
        p=P_BENCHMARK,
        T=1.0, delta0=0.5, lambda0_declared=1.0)


def linear_spec_with_f(eps):
    return ProblemSpec(
        n=2, m=1, A=("1", "-1"),
        B=(("0", "1"), ("0", "0")),
        f=(f"{eps}*sin({TWO_PI}*t)*sin({PI}*x)", "0"),
        p=P_BENCHMARK, T=1.0, delta0=0.5)


def test_freeze_at_zero_matches_linearization():
    spec = quasi_spec(0.0)
    zero = SpaceTimeField.zeros(2, 32, 0.0, 0.125, 9, periodic=True)
    coeffs = freeze_coefficients(spec, zero)
    x = np.linspace(0, 1, 33)
    np.testing.assert_allclose(coeffs.a[0](x, 0.3), np.ones_like(x))
    np.testing.assert_allclose(coeffs.a[1](x, 0.3), -np.ones_like(x))
    np.testing.assert_allclose(coeffs.b[0][1](x, 0.3), np.ones_like(x))


def test_freeze_constant_state_binding():
    spec = quasi_spec(0.0)
    field = SpaceTimeField(np.full((9, 2, 33), 0.25), 0.0, 0.125, periodic=True)
    coeffs = freeze_coefficients(spec, field)
    x = np.linspace(0, 1, 33)
    np.testing.assert_allclose(coeffs.a[0](x, 0.5), 1.1 * np.ones_like(x))


def test_freeze_warns_outside_ball():
    spec = quasi_spec(0.0)
    field = SpaceTimeField(np.full((9, 2, 33), 0.9), 0.0, 0.125, periodic=True)
    with pytest.warns(UserWarning, match="delta0"):
        freeze_coefficients(spec, field)


def test_c1_difference_zero_on_equal():
    f = SpaceTimeField(np.random.default_rng(0).standard_normal((5, 2, 17)),
                       0.0, 0.25)
    g = SpaceTimeField(f.values.copy(), 0.0, 0.25)
    assert c1_difference(f, g) == 0.0


def test_pde_residual_trivials():
    spec = quasi_spec(0.0)
    zero = SpaceTimeField.zeros(2, 16, 0.0, 1 / 16, 17, periodic=True)
    assert pde_residual(spec, zero) == 0.0
    spec_f = quasi_spec(0.08)
    # u = 0 with f nonzero: residual is sup |f|
    assert pde_residual(spec_f, zero) == pytest.approx(0.08, abs=1e-3)


def test_iterate_zero_forcing_returns_zero():
    rep = iterate(quasi_spec(0.0), nx=41, max_iter=5)
    assert rep.converged and rep.iterates == 1
    assert rep.solution.sup_norm() == 0.0
    assert rep.residual == 0.0


def test_iterate_linear_problem_converges_second_step():
    # coefficients independent of the state: the map is constant after u^1
    rep = iterate(linear_spec_with_f(0.1), nx=41, max_iter=5, tol=1e-10)
    assert rep.converged
    assert rep.iterates == 2
    assert rep.diffs[-1] < 1e-12


def test_iterate_contracts_and_scales_with_f():
    rep1 = iterate(quasi_spec(0.04), nx=81, max_iter=20)
    rep2 = iterate(quasi_spec(0.02), nx=81, max_iter=20)
    assert rep1.converged and rep2.converged
    assert rep1.rho_measured < 0.5
    factor = rep2.rho_measured / rep1.rho_measured
    assert 0.3 <= factor <= 0.7
    # small-solution bound: the solution size shrinks with f as well
    assert rep2.solution_sup < 0.7 * rep1.solution_sup
    assert rep1.solution.periodicity_defect() < 1e-6


def test_iterate_fixed_point_property():
    from hypdich.dichotomy import solve_periodic_linear

    rep = iterate(quasi_spec(0.04), nx=41, max_iter=20, tol=1e-9)
    coeffs = freeze_coefficients(quasi_spec(0.04), rep.solution)
    again = solve_periodic_linear(coeffs, 0.0, 1.0, 41, dt=rep.solution.dt)
    assert c1_difference(again, rep.solution) < 1e-7


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_iterate_reports_divergence_not_crash():
    # huge forcing: far outside the contraction regime
    rep = iterate(quasi_spec(40.0, slope=0.02), nx=41, max_iter=12, tol=1e-10)
    assert not rep.converged
    assert rep.diverged or rep.dichotomy_lost_at is not None


def test_reuse_monodromy_still_converges():
    # stale period map: faster, with the documented periodicity penalty
    rep = iterate(quasi_spec(0.04), nx=41, max_iter=20, reuse_monodromy=True)
    assert rep.converged
    assert rep.periodic_defect < 1e-3
    exact = iterate(quasi_spec(0.04), nx=41, max_iter=20)
    assert exact.periodic_defect < rep.periodic_defect
