"""Characteristic curves of the diagonal hyperbolic system.

The j-th characteristic through (x, t) is parameterized by the spatial
variable: tau = omega_j(xi, x, t) solves d tau/d xi = 1/a_j with
omega_j(x) = t.  Positive-speed families (j < m) leave the strip through
xi = 0 backward in time, negative-speed families through xi = 1.
Tracing is fixed-step classical RK4 in xi so results are deterministic
and reproducible; the substep count is a knob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr
from .errors import TracingError
from .fields import SpaceTimeField
from .problem import ProblemSpec, u_names

__all__ = ["CharTrace", "trace_characteristic", "exit_point", "integrating_factor"]


@dataclass
class CharTrace:
    """Sampled characteristic path anchored at (x, t), family j (0-based)."""

    j: int
    x: float
    t: float
    xi: np.ndarray      # sample abscissae, anchor first
    tau: np.ndarray     # ordinates tau_k = omega_j(xi_k)
    speed: np.ndarray   # a_j at the samples
    exit_kind: str      # "boundary0" | "boundary1" | "floor"
    exit_location: float
    exit_time: float


def _speed_fn(spec: ProblemSpec, frozen: SpaceTimeField | None, j: int):
    ast = spec.A[j]
    names = u_names(spec.n)

    def a(xi: float, tau: float) -> float:
        env = {"x": xi, "t": tau}
        if frozen is None:
            for name in names:
                env[name] = 0.0
        else:
            u = frozen.sample(np.array([xi]), tau)
            for k, name in enumerate(names):
                env[name] = float(u[k, 0])
        return float(expr.evaluate(ast, env))

    return a


def trace_characteristic(spec: ProblemSpec, frozen_state: SpaceTimeField | None,
                         j: int, x: float, t: float,
                         floor_time: float = -math.inf,
                         substeps_per_unit: int = 64) -> CharTrace:
    """Integrate the characteristic ODE backward in time from (x, t).

    Stops when xi reaches the family's exit boundary or tau drops to
    ``floor_time``.  ``frozen_state`` switches the speed to the
    quasilinear freeze A_j(x, t, u_frozen(x, t)).
    """
    if not 0.0 <= x <= 1.0:
        raise TracingError("anchor abscissa outside [0,1]")
    if floor_time > t:
        raise TracingError("floor time must not exceed the anchor time")
    a = _speed_fn(spec, frozen_state, j)
    expected_sign = 1.0 if j < spec.m else -1.0
    guard = spec.lambda0_declared / 2.0

    def rhs(xi, tau):
        sp = a(xi, tau)
        if abs(sp) < guard:
            raise TracingError(
                f"speed magnitude {sp:.3e} below lambda0/2 for family {j + 1}")
        if math.copysign(1.0, sp) != expected_sign:
            raise TracingError(f"speed sign change for family {j + 1}")
        return 1.0 / sp, sp

    target = 0.0 if j < spec.m else 1.0
    span = target - x
    nsteps = max(1, math.ceil(substeps_per_unit * abs(span)))
    if nsteps > 10_000_000:
        raise TracingError("step count overflow")
    h = span / nsteps if span != 0.0 else 0.0

    xis = [x]
    taus = [t]
    f0, sp0 = rhs(x, t)
    speeds = [sp0]
    exit_kind = "boundary0" if j < spec.m else "boundary1"
    exit_loc, exit_time = target, t
    xi, tau = x, t
    for k in range(nsteps):
        if h == 0.0:
            break
        k1 = f0
        k2, _ = rhs(xi + h / 2, tau + h * k1 / 2)
        k3, _ = rhs(xi + h / 2, tau + h * k2 / 2)
        k4, _ = rhs(xi + h, tau + h * k3)
        tau_next = tau + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        xi_next = x + (k + 1) * h
        if tau_next < floor_time:
            # linear interpolation of the crossing inside the substep
            frac = (tau - floor_time) / (tau - tau_next)
            xi_cross = xi + frac * (xi_next - xi)
            xis.append(xi_cross)
            taus.append(floor_time)
            _, spc = rhs(xi_cross, floor_time)
            speeds.append(spc)
            exit_kind, exit_loc, exit_time = "floor", xi_cross, floor_time
            break
        xi, tau = xi_next, tau_next
        f0, sp = rhs(xi, tau)
        xis.append(xi)
        taus.append(tau)
        speeds.append(sp)
        exit_loc, exit_time = xi, tau
    else:
        exit_kind = "boundary0" if j < spec.m else "boundary1"
        exit_loc = target

    return CharTrace(j=j, x=x, t=t, xi=np.array(xis), tau=np.array(taus),
                     speed=np.array(speeds), exit_kind=exit_kind,
                     exit_location=float(exit_loc), exit_time=float(exit_time))


def exit_point(trace: CharTrace) -> tuple[str, float, float]:
    """(which boundary was reached, abscissa, time)."""
    return trace.exit_kind, trace.exit_location, trace.exit_time


def integrating_factor(spec: ProblemSpec, trace: CharTrace,
                       b_jj=None, frozen_state: SpaceTimeField | None = None) -> float:
    """exp of the integral of b_jj/a_j along the traced path.

    Trapezoidal quadrature on the trace's own samples, oriented from the
    anchor to the exit point.  ``b_jj`` may override the problem's
    diagonal coupling with a callable (xi, tau) -> value.
    """
    if b_jj is None:
        ast = spec.B[trace.j][trace.j]
        names = u_names(spec.n)

        def b_jj(xi, tau):
            env = {"x": xi, "t": tau}
            if frozen_state is None:
                for name in names:
                    env[name] = 0.0
            else:
                u = frozen_state.sample(np.array([xi]), tau)
                for k, name in enumerate(names):
                    env[name] = float(u[k, 0])
            return float(expr.evaluate(ast, env))

    integrand = np.array([
        b_jj(float(xi), float(tau)) / sp
        for xi, tau, sp in zip(trace.xi, trace.tau, trace.speed)
    ])
    return float(np.exp(np.trapezoid(integrand, x=trace.xi)))
