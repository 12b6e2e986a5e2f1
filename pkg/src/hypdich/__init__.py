"""Solver toolkit for first-order 1-D hyperbolic systems with reflection
boundary conditions.

Subpackages cover the coefficient expression DSL (`expr`), problem
validation (`problem`), characteristic tracing (`characteristics`), the
semi-Lagrangian linear solver (`linear_solver`), monodromy/dichotomy
analysis (`dichotomy`), the frozen-coefficient fixed-point iteration for
the quasilinear problem (`quasilinear`), and the closed-form benchmark
system (`example21`).
"""

__version__ = "0.1.0"
