"""Frozen-coefficient fixed-point iteration for the quasilinear problem.

Starting from the zero guess, each iterate freezes the state-dependent
coefficients at the previous solution and takes the unique periodic
solution of the resulting linear problem.  For small right-hand sides
the map contracts in a C1-type norm with a factor proportional to the
size of f, so the measured ratios shrink roughly linearly when f is
rescaled.  Divergence and a lost dichotomy are reported as outcomes, not
raised: the admissible smallness threshold is not computable a priori,
so the report carries the measured ratios for the user to judge.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import expr
from .dichotomy import assemble_monodromy, solve_periodic_linear
from .errors import NumericalError, SpecValidationError
from .fields import SpaceTimeField
from .linear_solver import LinearCoeffs
from .problem import ProblemSpec, u_names

__all__ = [
    "IterationReport",
    "freeze_coefficients",
    "iterate",
    "pde_residual",
    "c1_difference",
]


def freeze_coefficients(spec: ProblemSpec, u_k: SpaceTimeField) -> LinearCoeffs:
    """Linear coefficients with the state slots bound to ``u_k``.

    The frozen field is sampled bilinearly (and periodically in t).
    Warns when the iterate leaves the state ball the hyperbolicity
    check sampled.
    """
    sup_ball = float(np.max(np.sqrt(np.sum(u_k.values**2, axis=1))))
    if sup_ball > spec.delta0:
        warnings.warn(
            f"frozen state norm {sup_ball:.3g} exceeds delta0={spec.delta0:.3g}; "
            "the hyperbolicity check did not sample this region",
            stacklevel=2)
    return LinearCoeffs.from_spec(spec, frozen=u_k)


def c1_difference(a: SpaceTimeField, b: SpaceTimeField) -> float:
    """sup of the value difference plus its first divided differences."""
    if a.values.shape != b.values.shape:
        raise SpecValidationError("fields must share one grid")
    w = a.values - b.values
    out = float(np.max(np.abs(w)))
    dx = 1.0 / a.nx
    out += float(np.max(np.abs(np.diff(w, axis=2)))) / dx
    if w.shape[0] > 1:
        out += float(np.max(np.abs(np.diff(w, axis=0)))) / a.dt
    return out


def pde_residual(spec: ProblemSpec, u: SpaceTimeField) -> float:
    """sup-norm of the centered finite-difference residual of the full
    quasilinear system on interior grid points."""
    if u.nx < 8 or u.nlevels < 8:
        raise SpecValidationError("residual needs nx >= 8 and >= 8 time levels")
    vals = u.values
    dt, dx = u.dt, 1.0 / u.nx
    x = np.linspace(0.0, 1.0, u.nx + 1)[1:-1]
    names = u_names(spec.n)
    worst = 0.0
    for li in range(1, u.nlevels - 1):
        t = float(u.times[li])
        mid = vals[li][:, 1:-1]
        u_t = (vals[li + 1][:, 1:-1] - vals[li - 1][:, 1:-1]) / (2 * dt)
        u_x = (vals[li][:, 2:] - vals[li][:, :-2]) / (2 * dx)
        env = {"x": x, "t": t}
        for k, name in enumerate(names):
            env[name] = mid[k]
        for j in range(spec.n):
            a_j = np.broadcast_to(
                np.asarray(expr.evaluate(spec.A[j], env), dtype=float), x.shape)
            resid = u_t[j] + a_j * u_x[j]
            for k in range(spec.n):
                bjk = expr.evaluate(spec.B[j][k], env)
                resid = resid + np.asarray(bjk, dtype=float) * mid[k]
            fj = expr.evaluate(spec.f[j], {"x": x, "t": t})
            resid = resid - np.asarray(fj, dtype=float)
            worst = max(worst, float(np.max(np.abs(resid))))
    return worst


def _f_smallness_proxy(spec: ProblemSpec, nx: int, nlevels: int) -> float:
    """sup of f and its first and second divided differences (a BC2 proxy)."""
    x = np.linspace(0.0, 1.0, nx + 1)
    ts = np.linspace(0.0, spec.T, nlevels)
    grid = np.empty((spec.n, ts.size, x.size))
    for li, t in enumerate(ts):
        env = {"x": x, "t": float(t)}
        for j in range(spec.n):
            grid[j, li] = np.broadcast_to(
                np.asarray(expr.evaluate(spec.f[j], env), dtype=float), x.shape)
    dx, dt = 1.0 / nx, spec.T / (nlevels - 1)
    out = float(np.max(np.abs(grid)))
    out += float(np.max(np.abs(np.diff(grid, axis=2)))) / dx
    out += float(np.max(np.abs(np.diff(grid, axis=1)))) / dt
    out += float(np.max(np.abs(np.diff(grid, n=2, axis=2)))) / dx**2
    out += float(np.max(np.abs(np.diff(grid, n=2, axis=1)))) / dt**2
    return out


@dataclass
class IterationReport:
    """Everything the fixed-point run produced and measured."""

    converged: bool
    iterates: int
    diffs: list[float]
    ratios: list[float]
    rho_measured: float | None
    residual: float | None
    periodic_defect: float | None
    solution: SpaceTimeField | None
    f_bc2_proxy: float
    diverged: bool = False
    dichotomy_lost_at: int | None = None
    tol: float = 0.0
    solution_sup: float | None = None

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterates": self.iterates,
            "c1_differences": list(self.diffs),
            "contraction_ratios": list(self.ratios),
            "rho_measured": self.rho_measured,
            "pde_residual": self.residual,
            "periodic_defect": self.periodic_defect,
            "f_bc2_proxy": self.f_bc2_proxy,
            "diverged": self.diverged,
            "dichotomy_lost_at": self.dichotomy_lost_at,
            "tol": self.tol,
            "solution_sup": self.solution_sup,
        }


def _ball_sup_speed(spec: ProblemSpec, nx: int, samples: int = 5) -> float:
    """sup |A_j| over the grid, one period, and the delta0 state ball."""
    import itertools

    x = np.linspace(0.0, 1.0, nx + 1)
    ts = np.linspace(0.0, spec.T, samples)
    names = u_names(spec.n)
    axis = np.linspace(-spec.delta0, spec.delta0, samples)
    worst = 0.0
    for v in itertools.product(axis, repeat=spec.n):
        for t in ts:
            env = {"x": x, "t": float(t)}
            for name, vj in zip(names, v):
                env[name] = float(vj)
            for j in range(spec.n):
                vals = np.asarray(expr.evaluate(spec.A[j], env), dtype=float)
                worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def iterate(spec: ProblemSpec, nx: int = 201, s: float = 0.0,
            cfl: float = 0.9, tol: float = 1e-8, max_iter: int = 50,
            gap: float = 0.02, reuse_monodromy: bool = False) -> IterationReport:
    """Run the frozen-coefficient iteration until the C1 difference of
    consecutive iterates drops below ``tol``.

    The step size is fixed across iterates from the worst speed over the
    delta0 ball, so all iterates live on one space-time grid.  With
    ``reuse_monodromy`` the period map of the first linearization is
    reused for later solves (faster, slightly less accurate periodic
    initial states).
    """
    if max_iter < 1:
        raise SpecValidationError("max_iter must be positive")
    T = spec.T
    sup_a = _ball_sup_speed(spec, nx)
    nsteps = max(1, math.ceil(T * sup_a * nx / cfl - 1e-9))
    dt = T / nsteps
    u_k = SpaceTimeField.zeros(spec.n, nx, s, dt, nsteps + 1, periodic=True)

    diffs: list[float] = []
    ratios: list[float] = []
    converged = False
    diverged = False
    lost_at = None
    decomposition = None
    k = 0
    for k in range(1, max_iter + 1):
        coeffs = freeze_coefficients(spec, u_k)
        if decomposition is None or not reuse_monodromy:
            try:
                dec = assemble_monodromy(coeffs, s, T, nx, dt=dt, gap=gap,
                                         check_periodic=(k == 1))
            except NumericalError:
                # coefficient drift broke the speed budget or the spectrum
                lost_at = k
                break
            if not dec.dichotomy:
                lost_at = k
                break
            decomposition = dec
        try:
            u_next = solve_periodic_linear(coeffs, s, T, nx, dt=dt, gap=gap,
                                           decomposition=decomposition)
        except NumericalError:
            lost_at = k
            break
        diffs.append(c1_difference(u_next, u_k))
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
        u_k = u_next
        if diffs[-1] < tol:
            converged = True
            break
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            diverged = True
            break

    have_solution = converged or (diffs and not diverged and lost_at is None)
    meaningful = [r for i, r in enumerate(ratios) if diffs[i + 1] > 10 * tol]
    rho = max(meaningful) if meaningful else (max(ratios) if ratios else None)
    report = IterationReport(
        converged=converged,
        iterates=k,
        diffs=diffs,
        ratios=ratios,
        rho_measured=rho,
        residual=pde_residual(spec, u_k) if have_solution else None,
        periodic_defect=u_k.periodicity_defect() if have_solution else None,
        solution=u_k if have_solution else None,
        f_bc2_proxy=_f_smallness_proxy(spec, nx, min(nsteps + 1, 64)),
        diverged=diverged,
        dichotomy_lost_at=lost_at,
        tol=tol,
        solution_sup=u_k.sup_norm() if have_solution else None,
    )
    return report
