"""Command-line interface: config ingestion, dispatch, report emission.

Subcommands::

    hypdich <check|solve|monodromy|periodic|quasilinear|example21|robustness>
            --config FILE [--out DIR] [--nx N] [--threads K] [--skip-check]

One JSON config document describes the problem and per-subcommand
options (see the README for the schema).  Every run writes
``<subcommand>_report.json`` with the fully resolved configuration
embedded; solution-producing runs also write ``solution.csv`` (columns
``t,x,u1..un``) and ``solution.bin``, and spectral runs write
``spectrum.csv`` (columns ``re,im,modulus``).  Floating-point report
fields are rounded to 12 significant digits so identical configs yield
byte-identical reports.

Exit codes: 0 success, 1 check/validation failure, 2 numerical failure
(no dichotomy, divergence), 3 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

_DEFAULTS = {
    "grid": {"nx": 201, "cfl": 0.9, "dt": None},
    "tolerances": {"solver": 1e-10, "iteration": 1e-8, "spectral_gap": 0.02},
    "check": {"samples_per_axis": 5},
    "solve": {"s": 0.0, "t_end": 1.0, "phi": None},
    "monodromy": {"s": 0.0},
    "periodic": {"s": 0.0},
    "quasilinear": {"max_iter": 50, "reuse_monodromy": False, "s": 0.0},
    "example21": {"lambda": 0.0, "count": 6, "T": 1.0, "crosscheck": False,
                  "pairs": 2},
    "robustness": {"a_tilde": None, "b_tilde": None, "epsilons": [0.01, 0.02, 0.04],
                   "s": 0.0},
}


class _CheckFailure(Exception):
    """The hypothesis checks rejected the configured problem."""


def _merge_defaults(cfg: dict) -> dict:
    out = {k: dict(v) for k, v in _DEFAULTS.items()}
    for key, val in cfg.items():
        if key in out and isinstance(val, dict):
            out[key].update(val)
        else:
            out[key] = val
    return out


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_round_floats(payload), sort_keys=True, indent=2)
                    + "\n", encoding="utf-8")


def _validate_run(cfg: dict) -> None:
    from .errors import SpecValidationError

    grid = cfg["grid"]
    if int(grid["nx"]) < 8:
        raise SpecValidationError("grid.nx must be at least 8")
    if not 0.0 < float(grid["cfl"]) <= 1.0:
        raise SpecValidationError("grid.cfl must lie in (0, 1]")
    if grid.get("dt") is not None and float(grid["dt"]) <= 0:
        raise SpecValidationError("grid.dt must be positive when given")
    for name, val in cfg["tolerances"].items():
        if float(val) <= 0:
            raise SpecValidationError(f"tolerances.{name} must be positive")


def _problem(cfg: dict):
    from .errors import SpecValidationError
    from .problem import ProblemSpec

    if "problem" not in cfg:
        raise SpecValidationError("config has no 'problem' section")
    return ProblemSpec.from_config(cfg["problem"])


def _resolve_dt(cfg: dict, coeffs, nx: int, horizon: float, t0: float = 0.0):
    from .linear_solver import max_stable_dt

    if cfg["grid"].get("dt"):
        return float(cfg["grid"]["dt"])
    return max_stable_dt(coeffs, nx, cfl=float(cfg["grid"]["cfl"]),
                         t0=t0, horizon=horizon)


def _run_checks(spec, cfg: dict) -> dict:
    from .problem import (check_h3_combinatorial, check_h3_trace,
                          smoothing_time_d, validate_h1)
    from .errors import EnumerationLimitError

    report = validate_h1(spec, samples_per_axis=int(cfg["check"]["samples_per_axis"]))
    trace_ok = check_h3_trace(spec.p)
    try:
        comb_ok = check_h3_combinatorial(spec.p)
    except EnumerationLimitError:
        comb_ok = None
    result = {
        "h1": report.to_dict(),
        "h3_trace": trace_ok,
        "h3_combinatorial": comb_ok,
        "passed": report.ok and trace_ok,
    }
    if report.ok:
        result["smoothing_time_d"] = smoothing_time_d(spec)
        result["lambda0_declared"] = spec.lambda0_declared
    return result


def _gate(spec, cfg: dict, skip: bool) -> None:
    if skip:
        return
    result = _run_checks(spec, cfg)
    if not result["passed"]:
        raise _CheckFailure("hypothesis checks failed; rerun `hypdich check` "
                            "for details or pass --skip-check")


def cmd_check(cfg, args, outdir: Path) -> tuple[int, dict]:
    spec = _problem(cfg)
    result = _run_checks(spec, cfg)
    return (0 if result["passed"] else 1), result


def cmd_solve(cfg, args, outdir: Path) -> tuple[int, dict]:
    from . import expr
    from .errors import SpecValidationError
    from .fields import GridFunction
    from .linear_solver import LinearCoeffs, jump_indicator, solve_ivp
    import numpy as np

    spec = _problem(cfg)
    _gate(spec, cfg, args.skip_check)
    sub = cfg["solve"]
    if not sub.get("phi"):
        raise SpecValidationError("solve.phi must list n initial expressions")
    phi_asts = [expr.parse(e, allowed_vars={"x"}) for e in sub["phi"]]
    if len(phi_asts) != spec.n:
        raise SpecValidationError("solve.phi must have n entries")
    nx = int(cfg["grid"]["nx"])
    x = np.linspace(0.0, 1.0, nx + 1)
    samples = np.array(
        [np.broadcast_to(np.asarray(expr.evaluate(a, {"x": x}), dtype=float),
                         x.shape) for a in phi_asts])
    phi = GridFunction(samples, float(sub["s"]))
    coeffs = LinearCoeffs.from_spec(spec)
    s, t_end = float(sub["s"]), float(sub["t_end"])
    dt = _resolve_dt(cfg, coeffs, nx, horizon=t_end - s, t0=s)
    field = solve_ivp(coeffs, phi, s, t_end, dt)
    field.to_csv(outdir / "solution.csv")
    field.to_binary(outdir / "solution.bin")
    final = field.level(field.nlevels - 1)
    return 0, {
        "s": s, "t_end": t_end, "dt": field.dt, "levels": field.nlevels,
        "final_l2_norm": final.l2_norm(),
        "final_sup_norm": final.sup_norm(),
        "final_jump_indicator": jump_indicator(final),
        "artifacts": ["solution.csv", "solution.bin"],
    }


def _spectrum_csv(path: Path, eigenvalues) -> None:
    lines = ["re,im,modulus"]
    for z in eigenvalues:
        lines.append(f"{z.real:.12g},{z.imag:.12g},{abs(z):.12g}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_monodromy(cfg, args, outdir: Path) -> tuple[int, dict]:
    from .dichotomy import assemble_monodromy
    from .linear_solver import LinearCoeffs

    spec = _problem(cfg)
    _gate(spec, cfg, args.skip_check)
    nx = int(cfg["grid"]["nx"])
    coeffs = LinearCoeffs.from_spec(spec, homogeneous=True)
    s = float(cfg["monodromy"]["s"])
    dec = assemble_monodromy(
        coeffs, s, spec.T, nx,
        dt=cfg["grid"].get("dt"), cfl=float(cfg["grid"]["cfl"]),
        gap=float(cfg["tolerances"]["spectral_gap"]))
    _spectrum_csv(outdir / "spectrum.csv", dec.eigenvalues)
    code = 0 if dec.dichotomy else 2
    return code, {**dec.to_dict(), "artifacts": ["spectrum.csv"]}


def cmd_periodic(cfg, args, outdir: Path) -> tuple[int, dict]:
    from .dichotomy import solve_periodic_linear
    from .linear_solver import LinearCoeffs

    spec = _problem(cfg)
    _gate(spec, cfg, args.skip_check)
    nx = int(cfg["grid"]["nx"])
    coeffs = LinearCoeffs.from_spec(spec)
    field = solve_periodic_linear(
        coeffs, float(cfg["periodic"]["s"]), spec.T, nx,
        dt=cfg["grid"].get("dt"), cfl=float(cfg["grid"]["cfl"]),
        gap=float(cfg["tolerances"]["spectral_gap"]))
    field.to_csv(outdir / "solution.csv")
    field.to_binary(outdir / "solution.bin")
    return 0, {
        "dt": field.dt, "levels": field.nlevels,
        "periodicity_defect": field.periodicity_defect(),
        "sup_norm": field.sup_norm(),
        "artifacts": ["solution.csv", "solution.bin"],
    }


def cmd_quasilinear(cfg, args, outdir: Path) -> tuple[int, dict]:
    from .quasilinear import iterate

    spec = _problem(cfg)
    _gate(spec, cfg, args.skip_check)
    sub = cfg["quasilinear"]
    report = iterate(
        spec, nx=int(cfg["grid"]["nx"]), s=float(sub["s"]),
        cfl=float(cfg["grid"]["cfl"]),
        tol=float(cfg["tolerances"]["iteration"]),
        max_iter=int(sub["max_iter"]),
        gap=float(cfg["tolerances"]["spectral_gap"]),
        reuse_monodromy=bool(sub["reuse_monodromy"]))
    artifacts = []
    if report.solution is not None:
        report.solution.to_csv(outdir / "solution.csv")
        report.solution.to_binary(outdir / "solution.bin")
        artifacts = ["solution.csv", "solution.bin"]
    code = 0 if report.converged else 2
    return code, {**report.to_dict(), "artifacts": artifacts}


def cmd_example21(cfg, args, outdir: Path) -> tuple[int, dict]:
    from .example21 import crosscheck_monodromy, eigenvalues_mu, find_xi_roots

    sub = cfg["example21"]
    lam = float(sub["lambda"])
    count = int(sub["count"])
    roots = find_xi_roots(count)
    pred = eigenvalues_mu(lam, count=count, roots=roots)
    result = pred.to_dict()
    if sub.get("crosscheck"):
        rep = crosscheck_monodromy(
            lam, T=float(sub["T"]), nx=int(cfg["grid"]["nx"]),
            pairs=int(sub["pairs"]), roots=roots,
            cfl=min(0.9, float(cfg["grid"]["cfl"])),
            gap=float(cfg["tolerances"]["spectral_gap"]))
        result["crosscheck"] = rep.to_dict()
    return 0, result


def cmd_robustness(cfg, args, outdir: Path) -> tuple[int, dict]:
    from .dichotomy import robustness_scan
    from .errors import SpecValidationError

    spec = _problem(cfg)
    _gate(spec, cfg, args.skip_check)
    sub = cfg["robustness"]
    a_tilde = sub.get("a_tilde") or ["0"] * spec.n
    b_tilde = sub.get("b_tilde") or [["0"] * spec.n for _ in range(spec.n)]
    if len(a_tilde) != spec.n or len(b_tilde) != spec.n:
        raise SpecValidationError("perturbation tables must match n")
    result = robustness_scan(
        spec, a_tilde, b_tilde, [float(e) for e in sub["epsilons"]],
        s=float(sub["s"]), T=spec.T, nx=int(cfg["grid"]["nx"]),
        dt=cfg["grid"].get("dt"), cfl=float(cfg["grid"]["cfl"]),
        gap=float(cfg["tolerances"]["spectral_gap"]))
    return 0, result


_COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "monodromy": cmd_monodromy,
    "periodic": cmd_periodic,
    "quasilinear": cmd_quasilinear,
    "example21": cmd_example21,
    "robustness": cmd_robustness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypdich",
        description="Hyperbolic-system solver with smoothing reflection "
                    "boundary conditions and dichotomy analysis")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--nx", type=int, default=None, help="grid override")
        p.add_argument("--threads", type=int, default=None,
                       help="cap for BLAS/OpenMP thread pools")
        p.add_argument("--skip-check", action="store_true",
                       help="skip the hypothesis gate before solving")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    report_path = outdir / f"{args.command}_report.json"

    from . import __version__
    from .errors import (ExprError, HypdichError, NumericalError,
                         SpecValidationError)

    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise SpecValidationError("config root must be a JSON object")
        cfg = _merge_defaults(raw)
        if args.nx is not None:
            cfg["grid"]["nx"] = args.nx
        _validate_run(cfg)
        code, result = _COMMANDS[args.command](cfg, args, outdir)
    except (OSError, json.JSONDecodeError) as err:
        print(f"hypdich: config error: {err}", file=sys.stderr)
        _write_json(outdir / "error.json",
                    {"error": {"type": type(err).__name__, "message": str(err)}})
        return 3
    except (SpecValidationError, ExprError) as err:
        print(f"hypdich: {err}", file=sys.stderr)
        _write_json(outdir / "error.json",
                    {"error": {"type": type(err).__name__, "message": str(err)}})
        return 3
    except _CheckFailure as err:
        print(f"hypdich: {err}", file=sys.stderr)
        _write_json(outdir / "error.json",
                    {"error": {"type": "CheckFailure", "message": str(err)}})
        return 1
    except HypdichError as err:  # numerical failures
        print(f"hypdich: {err}", file=sys.stderr)
        _write_json(outdir / "error.json",
                    {"error": {"type": type(err).__name__, "message": str(err)}})
        return 2

    payload = {
        "subcommand": args.command,
        "version": __version__,
        "config": cfg,
        "result": result,
    }
    _write_json(report_path, payload)
    print(f"hypdich: wrote {report_path}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
