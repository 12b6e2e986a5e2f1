import numpy as np
import pytest

from hypdich.dichotomy import (
    assemble_monodromy,
    robustness_scan,
    solve_periodic_linear,
)
from hypdich.errors import DichotomyError, SpecValidationError
from hypdich.fields import GridFunction
from hypdich.linear_solver import LinearCoeffs, solve_ivp
from hypdich.problem import ProblemSpec

from conftest import P_BENCHMARK, benchmark_linear_spec

NX = 81


def decoupled_spec():
    return ProblemSpec(n=2, m=1, A=("1", "-1"),
                       B=(("0", "0"), ("0", "0")), f=("0", "0"),
                       p=P_BENCHMARK, T=3.0)


def steady_n1_spec():
    return ProblemSpec(n=1, m=1, A=("1",), B=(("1",),), f=("1",),
                       p=np.zeros((1, 1)), T=1.0)


def test_decoupled_period_map_is_nilpotent():
    # period longer than the smoothing time: the map annihilates all data
    coeffs = LinearCoeffs.from_spec(decoupled_spec(), homogeneous=True)
    dec = assemble_monodromy(coeffs, 0.0, 3.0, NX, cfl=1.0)
    assert np.max(np.abs(dec.eigenvalues)) < 1e-6
    assert dec.unstable_dim == 0
    assert dec.dichotomy
    assert dec.alpha_hat > 4.0
    assert dec.m_hat >= 1.0


def test_monodromy_rejects_aperiodic_coefficients():
    spec = ProblemSpec(n=1, m=1, A=("1 + 0.2*sin(t)",), B=(("0",),),
                       f=("0",), p=np.zeros((1, 1)), T=1.0)
    coeffs = LinearCoeffs.from_spec(spec, homogeneous=True)
    with pytest.raises(SpecValidationError):
        assemble_monodromy(coeffs, 0.0, 1.0, 16)


def test_exponential_decay_realized():
    lam = 0.0
    spec = benchmark_linear_spec(lam)
    coeffs = LinearCoeffs.from_spec(spec, homogeneous=True)
    dec = assemble_monodromy(coeffs, 0.0, 1.0, NX)
    assert dec.dichotomy and dec.unstable_dim == 0
    rng = np.random.default_rng(17)
    dim = 2 * (NX + 1)
    for _ in range(4):
        phi = rng.standard_normal(dim)
        v = phi.copy()
        for k in range(1, 6):
            v = dec.matrix @ v
            bound = dec.m_hat * np.exp(-dec.alpha_hat * k * dec.T)
            assert np.linalg.norm(v) <= bound * np.linalg.norm(phi) * (1 + 1e-9)


def test_spectral_consistency_under_refinement():
    spec = benchmark_linear_spec(0.0)
    coeffs = LinearCoeffs.from_spec(spec, homogeneous=True)
    dec1 = assemble_monodromy(coeffs, 0.0, 1.0, 100)
    dec2 = assemble_monodromy(coeffs, 0.0, 1.0, 200)
    top1 = dec1.eigenvalues[:6]
    top2 = dec2.eigenvalues[:6]
    for z1, z2 in zip(top1, top2):
        assert abs(z1 - z2) / abs(z1) < 0.02


def test_periodic_solve_homogeneous_is_zero():
    coeffs = LinearCoeffs.from_spec(benchmark_linear_spec(0.0),
                                    homogeneous=True)
    out = solve_periodic_linear(coeffs, 0.0, 1.0, NX)
    assert out.sup_norm() < 1e-12


def test_periodic_solve_steady_benchmark():
    coeffs = LinearCoeffs.from_spec(steady_n1_spec())
    out = solve_periodic_linear(coeffs, 0.0, 1.0, 201)
    x = np.linspace(0, 1, 202)
    exact = 1.0 - np.exp(-x)
    assert np.max(np.abs(out.values[-1][0] - exact)) < 1e-4
    assert out.periodicity_defect() < 1e-8


def test_periodic_solve_is_fixed_point_under_repropagation():
    coeffs = LinearCoeffs.from_spec(steady_n1_spec())
    out = solve_periodic_linear(coeffs, 0.0, 1.0, NX)
    again = solve_ivp(coeffs, out.level(0), 0.0, 1.0, out.dt)
    diff = GridFunction(again.values[-1] - out.values[0]).l2_norm()
    assert diff < 1e-6


def test_periodic_solve_additive_in_f():
    base = benchmark_linear_spec(0.0)
    spec_f1 = benchmark_linear_spec(
        0.0, f=("sin(6.283185307179586*t)", "0"))
    spec_f2 = benchmark_linear_spec(0.0, f=("0", "x*(1-x)"))
    spec_sum = benchmark_linear_spec(
        0.0, f=("sin(6.283185307179586*t)", "x*(1-x)"))
    outs = [solve_periodic_linear(LinearCoeffs.from_spec(s), 0.0, 1.0, NX)
            for s in (spec_f1, spec_f2, spec_sum)]
    np.testing.assert_allclose(outs[2].values,
                               outs[0].values + outs[1].values, atol=1e-9)


def test_periodic_solve_requires_dichotomy():
    # lambda sitting on a characteristic root: modulus-one eigenvalues
    from hypdich.example21 import find_xi_roots
    xi0 = find_xi_roots(1)[0]
    coeffs = LinearCoeffs.from_spec(benchmark_linear_spec(xi0),
                                    homogeneous=True)
    dec = assemble_monodromy(coeffs, 0.0, 1.0, 201, gap=0.02)
    assert not dec.dichotomy
    assert dec.ambiguous_count > 0
    with pytest.raises(DichotomyError):
        solve_periodic_linear(coeffs, 0.0, 1.0, 201, decomposition=dec)


def test_projectors_split_identity():
    coeffs = LinearCoeffs.from_spec(
        benchmark_linear_spec(1.9630371816), homogeneous=True)
    dec = assemble_monodromy(coeffs, 0.0, 1.0, 41)
    ps = dec.projector("stable")
    pu = dec.projector("unstable")
    np.testing.assert_allclose(ps @ ps, ps, atol=1e-8)
    np.testing.assert_allclose(pu @ pu, pu, atol=1e-8)
    assert round(np.trace(pu)) == dec.unstable_dim
    # the period map commutes with its spectral projectors
    np.testing.assert_allclose(dec.matrix @ ps, ps @ dec.matrix, atol=1e-8)


def test_robustness_scan_epsilon_zero_matches_base():
    spec = benchmark_linear_spec(1.9630371816)
    result = robustness_scan(
        spec, ["0.1*sin(6.283185307179586*t)", "0"],
        [["0", "0"], ["0", "0"]], [0.0, 0.02], nx=NX)
    entry0 = result["scan"][0]
    assert entry0["epsilon"] == 0.0
    assert entry0["alpha_hat"] == result["base"]["alpha_hat"]
    assert entry0["unstable_dim"] == result["base"]["unstable_dim"]


def test_robustness_persists_for_small_perturbations():
    spec = benchmark_linear_spec(1.9630371816)
    result = robustness_scan(
        spec, ["0.1*sin(6.283185307179586*t)", "0"],
        [["0", "0"], ["0", "0"]], [0.01, 0.02, 0.04], nx=NX)
    assert all(e["persists"] for e in result["scan"])
    assert result["persistence_threshold"] == 0.04
