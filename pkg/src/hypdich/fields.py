"""Discrete state containers.

A :class:`GridFunction` is one vector-valued time slice sampled on the
uniform grid ``x_i = i/Nx`` (the discrete stand-in for a state in
L2((0,1); R^n)).  A :class:`SpaceTimeField` stacks uniformly spaced time
levels over an interval, optionally tagged as periodic; it is used both
to report solutions and to freeze quasilinear coefficients.

Serialization: CSV with header ``t,x,u1..un`` (one row per level/node)
and a little-endian binary dump with layout::

    magic b"HYPD" | u32 version=1 | u32 n | u32 nx | u32 nlevels |
    u8 periodic | 3 pad bytes | f64 t0 | f64 dt |
    nlevels*n*(nx+1) f64, row-major over (level, component, node)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, SpecValidationError

_MAGIC = b"HYPD"
_HEADER = struct.Struct("<4sIIIIB3xdd")


@dataclass
class GridFunction:
    """n components sampled at the Nx+1 nodes of [0,1], at one time."""

    values: np.ndarray  # (n, nx+1)
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] < 2:
            raise SpecValidationError("GridFunction values must be (n, nx+1) with nx >= 1")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("non-finite values in grid function")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1] - 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.shape[1])

    def copy(self) -> "GridFunction":
        return GridFunction(self.values.copy(), self.t)

    def l2_norm(self) -> float:
        """Trapezoidal L2((0,1); R^n) norm."""
        dx = 1.0 / self.nx
        w = np.full(self.nx + 1, dx)
        w[0] = w[-1] = dx / 2.0
        return float(np.sqrt(np.sum(self.values**2 * w)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @classmethod
    def zeros(cls, n: int, nx: int, t: float = 0.0) -> "GridFunction":
        return cls(np.zeros((n, nx + 1)), t)

    @classmethod
    def from_callable(cls, fns, nx: int, t: float = 0.0) -> "GridFunction":
        """Sample callables (one per component, each x-array -> array)."""
        x = np.linspace(0.0, 1.0, nx + 1)
        return cls(np.array([np.broadcast_to(f(x), x.shape) for f in fns], dtype=float), t)


@dataclass
class SpaceTimeField:
    """Uniformly spaced time levels of grid functions over one interval."""

    values: np.ndarray  # (nlevels, n, nx+1)
    t0: float
    dt: float
    periodic: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise SpecValidationError("SpaceTimeField values must be (nlevels, n, nx+1)")
        if self.dt <= 0:
            raise SpecValidationError("time spacing must be positive")

    @property
    def nlevels(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def nx(self) -> int:
        return self.values.shape[2] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nlevels)

    @property
    def span(self) -> float:
        return self.dt * (self.nlevels - 1)

    def level(self, i: int) -> GridFunction:
        return GridFunction(self.values[i].copy(), float(self.times[i]))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def periodicity_defect(self) -> float:
        """L2 distance between the first and last levels."""
        return GridFunction(self.values[-1] - self.values[0]).l2_norm()

    def sample(self, xq: np.ndarray, t: float) -> np.ndarray:
        """Bilinear sample of all components at points ``xq`` and time ``t``.

        Linear in x between grid nodes and linear in t between levels;
        periodic fields wrap t modulo the covered span.
        """
        xq = np.asarray(xq, dtype=float)
        span = self.span
        s = t - self.t0
        if self.periodic:
            s = s % span if span > 0 else 0.0
        s = min(max(s, 0.0), span)
        li = s / self.dt
        i0 = min(int(li), self.nlevels - 2)
        w = li - i0
        xg = np.linspace(0.0, 1.0, self.nx + 1)
        out = np.empty((self.n, xq.size))
        for j in range(self.n):
            v0 = np.interp(xq, xg, self.values[i0, j])
            v1 = np.interp(xq, xg, self.values[i0 + 1, j])
            out[j] = (1.0 - w) * v0 + w * v1
        return out

    @classmethod
    def zeros(cls, n: int, nx: int, t0: float, dt: float, nlevels: int,
              periodic: bool = False) -> "SpaceTimeField":
        return cls(np.zeros((nlevels, n, nx + 1)), t0, dt, periodic)

    # -- serialization -----------------------------------------------------

    def to_csv(self, path) -> None:
        n, npts = self.n, self.nx + 1
        times = self.times
        x = np.linspace(0.0, 1.0, npts)
        header = "t,x," + ",".join(f"u{j + 1}" for j in range(n))
        rows = np.empty((self.nlevels * npts, 2 + n))
        for li in range(self.nlevels):
            rows[li * npts:(li + 1) * npts, 0] = times[li]
            rows[li * npts:(li + 1) * npts, 1] = x
            rows[li * npts:(li + 1) * npts, 2:] = self.values[li].T
        np.savetxt(path, rows, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    def to_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, 1, self.n, self.nx, self.nlevels,
                                  1 if self.periodic else 0, self.t0, self.dt))
            fh.write(np.ascontiguousarray(self.values).astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "SpaceTimeField":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            magic, version, n, nx, nlevels, periodic, t0, dt = _HEADER.unpack(head)
            if magic != _MAGIC or version != 1:
                raise SpecValidationError("not a recognized field dump")
            data = np.frombuffer(fh.read(nlevels * n * (nx + 1) * 8), dtype="<f8")
        return cls(data.reshape(nlevels, n, nx + 1).astype(float), t0, dt,
                   bool(periodic))
