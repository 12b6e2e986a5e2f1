"""Closed-form spectral analysis of the 2x2 benchmark system.

The benchmark is the constant-speed system

    d_t u1 + d_x u1 = lambda*u1 - u2,   d_t u2 - d_x u2 = 0,
    u1(0,t) = 0,  u1(1,t) = u2(1,t),

whose generator spectrum is known in closed form: with xi running over
the positive solutions of

    sin(sqrt(exp(2 xi) - (1-xi)^2)) = -sqrt(1 - exp(-2 xi) (1-xi)^2)

the eigenvalues are mu_j^+- = (lambda - xi_j +- i sqrt(exp(2 xi_j) -
(1-xi_j)^2)) / 2.  The number of roots below lambda is the dimension of
the unstable subspace, which makes this system the analytic oracle for
the monodromy machinery: the period map's eigenvalues must line up with
exp(mu_j^+- T).

The sine-form residual is necessary but not sufficient: it encodes only
the imaginary part of e^z = 1 - z for z = lambda - 2 mu, so each of its
dips below zero contributes a close pair of zeros of which only one also
satisfies the real part exp(xi) cos(eta) = 1 - xi.  The companion zero
has the wrong cosine sign and corresponds to no eigenvalue; the root
finder discards it.  The surviving roots are well separated.  Dips
narrow as xi grows, so the scan brackets sign changes of the residual
directly with a fine step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dichotomy import assemble_monodromy
from .errors import DomainError, NumericalError, SpecValidationError
from .linear_solver import LinearCoeffs
from .problem import ProblemSpec

__all__ = [
    "SpectralPrediction",
    "chareq_residual",
    "find_xi_roots",
    "eigenvalues_mu",
    "linearized_spec",
    "crosscheck_monodromy",
    "CrosscheckReport",
]


def chareq_residual(xi):
    """Residual of the characteristic equation; roots are its zeros.

    Defined for xi >= 0 (both radicands are nonnegative there).
    """
    xi_arr = np.asarray(xi, dtype=float)
    r1 = np.exp(2.0 * xi_arr) - (1.0 - xi_arr) ** 2
    r2 = 1.0 - np.exp(-2.0 * xi_arr) * (1.0 - xi_arr) ** 2
    if np.any(r1 < 0) or np.any(r2 < -1e-15):
        raise DomainError("negative radicand: xi outside the validity region")
    out = np.sin(np.sqrt(r1)) + np.sqrt(np.maximum(r2, 0.0))
    return float(out) if np.isscalar(xi) or np.asarray(xi).ndim == 0 else out


def _is_genuine_root(xi: float) -> bool:
    # the sine equation fixes |cos(eta)| = |1-xi| exp(-xi); a genuine
    # eigenvalue additionally needs matching signs of the real part
    eta = math.sqrt(math.exp(2.0 * xi) - (1.0 - xi) ** 2)
    return math.cos(eta) * (1.0 - xi) > 0.0


def find_xi_roots(count: int, scan_step: float = 1e-3,
                  horizon: float = 4.0, max_horizon: float = 12.0,
                  tol: float = 1e-12) -> list[float]:
    """First ``count`` positive eigenvalue roots of the characteristic
    equation.

    Scans for sign changes of the (continuous) residual, bisects each
    bracket, and keeps the zeros that solve the full transcendental
    equation (see the module docstring).  xi = 0 solves the residual but
    is excluded: it corresponds to no eigenvalue.  The scan horizon
    grows on demand up to ``max_horizon``.
    """
    if count < 1:
        raise SpecValidationError("count must be at least 1")
    roots: list[float] = []
    lo = scan_step
    while len(roots) < count:
        if lo >= max_horizon:
            raise NumericalError(
                f"found only {len(roots)} roots below xi={max_horizon}")
        hi = min(horizon, max_horizon)
        xs = np.arange(lo, hi + scan_step, scan_step)
        rs = chareq_residual(xs)
        flips = np.flatnonzero(np.sign(rs[:-1]) * np.sign(rs[1:]) < 0)
        for i in flips:
            a, b = float(xs[i]), float(xs[i + 1])
            fa = chareq_residual(a)
            for _ in range(200):
                mid = 0.5 * (a + b)
                fm = chareq_residual(mid)
                if fa * fm <= 0:
                    b = mid
                else:
                    a, fa = mid, fm
                if b - a < tol:
                    break
            root = 0.5 * (a + b)
            if _is_genuine_root(root):
                roots.append(root)
            if len(roots) == count:
                return roots
        lo, horizon = hi, hi + 4.0
    return roots


@dataclass
class SpectralPrediction:
    """Closed-form spectrum at one value of the parameter."""

    lam: float
    xi_roots: list[float]
    mu_pairs: list[tuple[complex, complex]]
    predicted_unstable_dim: int
    gap_margin: float

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "xi_roots": list(self.xi_roots),
            "mu_pairs": [
                [{"re": mu.real, "im": mu.imag} for mu in pair]
                for pair in self.mu_pairs
            ],
            "predicted_unstable_dim": self.predicted_unstable_dim,
            "gap_margin": self.gap_margin,
        }


def eigenvalues_mu(lam: float, count: int = 6,
                   roots: list[float] | None = None) -> SpectralPrediction:
    """Generator eigenvalues mu_j^+-(lambda) from the first ``count`` roots.

    Flags lambda sitting on a root (no dichotomy there).
    """
    roots = find_xi_roots(count) if roots is None else list(roots[:count])
    margin = min(abs(lam - xi) for xi in roots)
    if margin < 1e-10:
        raise NumericalError(
            "lambda coincides with a characteristic root: no dichotomy")
    pairs = []
    for xi in roots:
        eta = math.sqrt(math.exp(2.0 * xi) - (1.0 - xi) ** 2)
        mu = 0.5 * complex(lam - xi, eta)
        pairs.append((mu, mu.conjugate()))
    dim = sum(1 for xi in roots if xi < lam)
    return SpectralPrediction(lam=lam, xi_roots=roots, mu_pairs=pairs,
                              predicted_unstable_dim=dim, gap_margin=margin)


def linearized_spec(lam: float, T: float = 1.0) -> ProblemSpec:
    """ProblemSpec of the benchmark's linearization at this lambda."""
    return ProblemSpec(
        n=2, m=1,
        A=("1", "-1"),
        B=((repr(-lam), "1"), ("0", "0")),
        f=("0", "0"),
        p=np.array([[0.0, 0.0], [1.0, 0.0]]),
        T=T,
        delta0=0.5,
        lambda0_declared=1.0,
    )


@dataclass
class CrosscheckReport:
    lam: float
    T: float
    nx: int
    predicted: list[complex]
    computed: list[complex]
    max_rel_mismatch: float
    predicted_unstable_dim: int
    monodromy_unstable_dim: int
    alpha_hat: float
    gap_margin: float

    @property
    def dims_match(self) -> bool:
        # each root below lambda contributes one unstable conjugate pair
        return 2 * self.predicted_unstable_dim == self.monodromy_unstable_dim

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "period": self.T,
            "nx": self.nx,
            "predicted": [{"re": z.real, "im": z.imag} for z in self.predicted],
            "computed": [{"re": z.real, "im": z.imag} for z in self.computed],
            "max_rel_mismatch": self.max_rel_mismatch,
            "predicted_unstable_dim": self.predicted_unstable_dim,
            "monodromy_unstable_dim": self.monodromy_unstable_dim,
            "dims_match": self.dims_match,
            "alpha_hat": self.alpha_hat,
            "gap_margin": self.gap_margin,
        }


def _greedy_match(predicted: np.ndarray, computed: np.ndarray) -> float:
    """Max relative pairing error between two eigenvalue sets."""
    remaining = list(computed)
    worst = 0.0
    for z in predicted:
        dists = [abs(z - w) / abs(z) for w in remaining]
        i = int(np.argmin(dists))
        worst = max(worst, dists[i])
        remaining.pop(i)
    return worst


def crosscheck_monodromy(lam: float, T: float = 1.0, nx: int = 201,
                         pairs: int = 2, gap: float = 0.02,
                         cfl: float = 0.9, count: int = 6,
                         roots: list[float] | None = None) -> CrosscheckReport:
    """Compare the discrete period map spectrum with exp(mu_j^+- T).

    The top ``2*pairs`` monodromy eigenvalues are matched greedily
    against the closed-form predictions; the report carries the largest
    relative mismatch and both unstable dimensions.  Runs below unit
    CFL on purpose: the interpolation's slight dissipation suppresses a
    parasitic mirror mode that the exact-shift (CFL = 1) stepping
    carries at these constant speeds.
    """
    pred = eigenvalues_mu(lam, count=count, roots=roots)
    spec = linearized_spec(lam, T=T)
    coeffs = LinearCoeffs.from_spec(spec, homogeneous=True)
    dec = assemble_monodromy(coeffs, s=0.0, T=T, nx=nx, cfl=cfl, gap=gap)
    predicted = []
    for mu_p, mu_m in pred.mu_pairs[:pairs]:
        predicted.extend([np.exp(mu_p * T), np.exp(mu_m * T)])
    predicted = np.array(sorted(predicted, key=lambda z: -abs(z)))
    computed = dec.eigenvalues[: 2 * pairs]
    return CrosscheckReport(
        lam=lam, T=T, nx=nx,
        predicted=list(predicted), computed=list(computed),
        max_rel_mismatch=_greedy_match(predicted, np.array(computed)),
        predicted_unstable_dim=pred.predicted_unstable_dim,
        monodromy_unstable_dim=dec.unstable_dim,
        alpha_hat=dec.alpha_hat,
        gap_margin=pred.gap_margin,
    )
