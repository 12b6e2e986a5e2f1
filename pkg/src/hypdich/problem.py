"""Problem description and hypothesis checks.

A :class:`ProblemSpec` holds the full system: diagonal speeds ``A_j``,
lower-order couplings ``B_jk``, right-hand sides ``f_j`` (all as parsed
expressions), the reflection matrix ``p``, the coefficient period ``T``,
and the sampling parameters for the hyperbolicity check.

The hyperbolicity hypothesis is checked by sampling its three margins on
a tensor grid; smoothness of the coefficients is the caller's
responsibility (finite sampling cannot certify derivative bounds).  The
smoothing hypothesis on the reflection matrix is checked both by direct
enumeration of index tuples and through the trace criterion on the
absolute-value matrix; the two must agree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .errors import DomainError, EnumerationLimitError, SpecValidationError

__all__ = [
    "ProblemSpec",
    "HyperbolicityReport",
    "u_names",
    "validate_h1",
    "check_h3_combinatorial",
    "check_h3_trace",
    "smoothing_time_d",
]


def u_names(n: int) -> tuple[str, ...]:
    return tuple(f"u{j + 1}" for j in range(n))


def _as_ast(e, allowed):
    if isinstance(e, str):
        return expr.parse(e, allowed_vars=allowed)
    return e


@dataclass(eq=False)
class ProblemSpec:
    """Validated description of one hyperbolic system.

    Components 1..m travel with positive speed, m+1..n with negative
    speed.  ``delta0`` is the radius of the state ball sampled by the
    hyperbolicity check and ``lambda0_declared`` the claimed speed
    separation.
    """

    n: int
    m: int
    A: tuple
    B: tuple
    f: tuple
    p: np.ndarray
    T: float
    delta0: float = 1.0
    lambda0_declared: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise SpecValidationError("n must be a positive integer")
        if not 0 <= self.m <= self.n:
            raise SpecValidationError("m must satisfy 0 <= m <= n")
        if self.T <= 0 or self.delta0 <= 0 or self.lambda0_declared <= 0:
            raise SpecValidationError("T, delta0, lambda0 must be positive")
        allowed = frozenset(("x", "t") + u_names(self.n))
        xt_only = frozenset(("x", "t"))
        self.A = tuple(_as_ast(e, allowed) for e in self.A)
        self.B = tuple(tuple(_as_ast(e, allowed) for e in row) for row in self.B)
        self.f = tuple(_as_ast(e, allowed) for e in self.f)
        if len(self.A) != self.n or len(self.f) != self.n:
            raise SpecValidationError("A and f must each have n expressions")
        if len(self.B) != self.n or any(len(r) != self.n for r in self.B):
            raise SpecValidationError("B must be an n x n expression matrix")
        for fj in self.f:
            if expr.free_vars(fj) - xt_only:
                raise SpecValidationError("f expressions may only use x and t")
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (self.n, self.n):
            raise SpecValidationError("p must be an n x n real matrix")
        if not np.all(np.isfinite(self.p)):
            raise SpecValidationError("p entries must be finite")

    @classmethod
    def from_config(cls, cfg: dict) -> "ProblemSpec":
        try:
            return cls(
                n=int(cfg["n"]),
                m=int(cfg["m"]),
                A=tuple(cfg["A"]),
                B=tuple(tuple(row) for row in cfg["B"]),
                f=tuple(cfg["f"]),
                p=np.asarray(cfg["p"], dtype=float),
                T=float(cfg["T"]),
                delta0=float(cfg.get("delta0", 1.0)),
                lambda0_declared=float(cfg.get("lambda0", 1.0)),
            )
        except KeyError as missing:
            raise SpecValidationError(f"problem config missing key {missing}") from None

    def zero_state_env(self, x, t):
        env = {"x": x, "t": t}
        zero = np.zeros_like(np.asarray(x, dtype=float))
        for name in u_names(self.n):
            env[name] = zero
        return env


@dataclass
class HyperbolicityReport:
    """Outcome of sampling the three speed margins."""

    lambda0_measured: float
    violations: list = field(default_factory=list)
    samples_per_axis: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "lambda0_measured": self.lambda0_measured,
            "ok": self.ok,
            "samples_per_axis": self.samples_per_axis,
            "violations": self.violations[:50],
            "violation_count": len(self.violations),
        }


def _v_axis(delta0, samples):
    if samples == 1:
        return np.array([0.0])
    return np.linspace(-delta0, delta0, samples)


def validate_h1(spec: ProblemSpec, samples_per_axis: int = 5) -> HyperbolicityReport:
    """Sample the three hyperbolicity margins on a tensor grid.

    Grid: x in [0,1], t in [0,T], each state coordinate in
    [-delta0, delta0].  Reports the measured minimum margin and every
    sample point where a margin is non-positive.
    """
    if samples_per_axis < 2:
        raise SpecValidationError("samples_per_axis must be at least 2")
    s = samples_per_axis
    xs = np.linspace(0.0, 1.0, s)
    ts = np.linspace(0.0, spec.T, s)
    X, Tg = np.meshgrid(xs, ts, indexing="ij")
    Xf, Tf = X.ravel(), Tg.ravel()
    names = u_names(spec.n)
    violations = []
    lam = math.inf
    for v in itertools.product(_v_axis(spec.delta0, s), repeat=spec.n):
        env = {"x": Xf, "t": Tf}
        for name, vj in zip(names, v):
            env[name] = float(vj)
        try:
            a_vals = np.array([
                np.broadcast_to(expr.evaluate(spec.A[j], env), Xf.shape)
                for j in range(spec.n)
            ])
        except DomainError:
            bad = _locate_domain_error(spec, Xf, Tf, v, names)
            raise DomainError(
                f"speed expression undefined at sample point {bad}") from None
        for j in range(spec.m):
            lam = min(lam, float(a_vals[j].min()))
            for idx in np.flatnonzero(a_vals[j] <= 0):
                violations.append(_viol("positive_speed", j, None,
                                        Xf[idx], Tf[idx], v, a_vals[j][idx]))
        for j in range(spec.m, spec.n):
            lam = min(lam, float((-a_vals[j]).min()))
            for idx in np.flatnonzero(-a_vals[j] <= 0):
                violations.append(_viol("negative_speed", j, None,
                                        Xf[idx], Tf[idx], v, a_vals[j][idx]))
        for j in range(spec.n):
            for k in range(j + 1, spec.n):
                gap = np.abs(a_vals[j] - a_vals[k])
                lam = min(lam, float(gap.min()))
                for idx in np.flatnonzero(gap <= 0):
                    violations.append(_viol("speed_separation", j, k,
                                            Xf[idx], Tf[idx], v, gap[idx]))
    return HyperbolicityReport(lam, violations, samples_per_axis=s)


def _viol(kind, j, k, x, t, v, value):
    return {"kind": kind, "j": j + 1, "k": None if k is None else k + 1,
            "x": float(x), "t": float(t), "v": [float(c) for c in v],
            "value": float(value)}


def _locate_domain_error(spec, Xf, Tf, v, names):
    for x, t in zip(Xf, Tf):
        env = {"x": float(x), "t": float(t)}
        for name, vj in zip(names, v):
            env[name] = float(vj)
        try:
            for j in range(spec.n):
                expr.evaluate(spec.A[j], env)
        except DomainError:
            return {"x": float(x), "t": float(t), "v": [float(c) for c in v]}
    return {"v": [float(c) for c in v]}


_ENUM_LIMIT = 2_000_000


def check_h3_combinatorial(p: np.ndarray, n: int | None = None) -> bool:
    """Enumerate every (n+1)-tuple of indices and test that all products
    of reflection coefficients along it vanish exactly."""
    p = np.asarray(p, dtype=float)
    if n is None:
        n = p.shape[0]
    if n ** (n + 1) > _ENUM_LIMIT:
        raise EnumerationLimitError("n too large for enumeration")
    for tup in itertools.product(range(n), repeat=n + 1):
        prod = 1.0
        for a, b in zip(tup[:-1], tup[1:]):
            prod *= p[a, b]
            if prod == 0.0:
                break
        if prod != 0.0:
            return False
    return True


def check_h3_trace(p: np.ndarray, n: int | None = None, tol: float = 1e-12) -> bool:
    """Trace criterion: tr(W + W^2 + ... + W^n) = 0 for W = |p|."""
    p = np.asarray(p, dtype=float)
    if n is None:
        n = p.shape[0]
    w = np.abs(p)
    acc = 0.0
    power = np.eye(n)
    for _ in range(n):
        power = power @ w
        acc += float(np.trace(power))
    return abs(acc) <= tol


def smoothing_time_d(spec: ProblemSpec, start_samples: int = 17,
                     substeps_per_unit: int = 256) -> float:
    """Smoothing time d = n * (maximum strip-crossing time).

    Each family's crossing time is measured by tracing its
    characteristic across [0,1] from a sample of start times in [0,T]
    and taking the longest elapsed time.  One application of the
    reflection consumes one crossing, and n of them annihilate the
    decoupled data, hence the factor n.
    """
    from .characteristics import trace_characteristic

    worst = 0.0
    for j in range(spec.n):
        anchor_x = 1.0 if j < spec.m else 0.0
        for t0 in np.linspace(0.0, spec.T, start_samples):
            tr = trace_characteristic(spec, None, j, anchor_x, float(t0),
                                      floor_time=-math.inf,
                                      substeps_per_unit=substeps_per_unit)
            worst = max(worst, float(t0) - tr.exit_time)
    return spec.n * worst
