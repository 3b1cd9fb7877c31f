"""Batch front door: parse a run config, execute the
build -> compile -> assemble -> solve -> export pipeline, and emit fields,
line profiles, equation/stencil dumps and convergence logs.

Exit codes: 0 ok, 2 config error, 3 non-convergence (or singular system
rejected at admission), 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import fields as fio
from .equations import InvalidOrderError, build_cda, build_pn, dump_equations
from .problems import (SingularRiskError, floor_sigma_t, make_checkerboard,
                       make_heterogeneous, make_pointsource, source_voxel,
                       validate_for_solve)
from .solver import assemble, fluence, solve_normal_cg, unstagger
from .stencil import PlacementError, assign_placement, compile_program, \
    dump_program

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOCONV = 3
EXIT_INTERNAL = 4

PROBLEMS = ("checkerboard", "pointsource", "heterogeneous")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str = "pointsource"
    method: str = "pn"            # pn | cda
    order: int = 1
    dim: int = 0                  # 0 = problem default
    res: int = 0                  # 0 = problem default
    bc: str = ""                  # '' = problem default
    floor: float = -1.0           # < 0 = problem default
    tol: float = 1e-8
    max_iter: int = 50000
    out: str = "out"
    seed: int = 0
    jacobi: bool = False

    def validated(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.method not in ("pn", "cda"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.method == "pn" and self.order < 1:
            raise ConfigError(f"order must be >= 1, got {self.order}")
        if self.bc and self.bc not in ("dirichlet", "neumann"):
            raise ConfigError(f"unknown bc {self.bc!r}")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max-iter must be >= 1")
        return self


_BOOLS = {"true": True, "false": False, "1": True, "0": False}


def config_from_mapping(mapping):
    cfg = RunConfig()
    known = {f.name: f.type for f in dc_fields(RunConfig)}
    for key, val in mapping.items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        cur = getattr(cfg, name)
        if isinstance(cur, bool):
            if str(val).lower() not in _BOOLS:
                raise ConfigError(f"bad boolean for {key!r}: {val!r}")
            setattr(cfg, name, _BOOLS[str(val).lower()])
        elif isinstance(cur, int):
            setattr(cfg, name, int(val))
        elif isinstance(cur, float):
            setattr(cfg, name, float(val))
        else:
            setattr(cfg, name, str(val))
    return cfg.validated()


def build_problem(cfg):
    res = cfg.res
    if cfg.problem == "checkerboard":
        spec = make_checkerboard(res or 71)
    elif cfg.problem == "pointsource":
        spec = make_pointsource(res or 80)
    else:
        spec = make_heterogeneous(seed=cfg.seed, res=res or 32)
    if cfg.dim and cfg.dim != spec.dim:
        raise ConfigError(
            f"problem {cfg.problem!r} is {spec.dim}-D, not {cfg.dim}-D")
    if cfg.bc:
        from dataclasses import replace
        spec = replace(spec, bc=cfg.bc)
    if cfg.floor > 0:
        spec = floor_sigma_t(spec, cfg.floor)
    return spec


def build_equations(cfg, dim):
    if cfg.method == "cda":
        return build_cda(dim)
    return build_pn(cfg.order, dim)


def center_profile(spec, coll):
    """Fluence along the +x axis-aligned line through the center voxel."""
    flu = fluence(coll)
    if spec.name == "pointsource":
        src = source_voxel(spec)
        line = flu[(slice(src[0], None),) + src[1:]]
        r = np.arange(line.shape[0]) * spec.h
    else:
        mid = tuple(r // 2 for r in spec.res)
        line = flu[(slice(None),) + mid[1:]]
        r = spec.centers(0) - spec.origin[0]
    return r, line


def run(cfg, log=print):
    spec = build_problem(cfg)
    validate_for_solve(spec)
    eqset = build_equations(cfg, spec.dim)
    placement = assign_placement(eqset)
    program = compile_program(eqset, placement)

    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "equations.txt"), "w") as fh:
        fh.write(dump_equations(eqset))
    with open(os.path.join(cfg.out, "stencil.txt"), "w") as fh:
        fh.write(dump_program(program))

    system = assemble(program, spec)
    log(f"assembled {system.A.shape[0]} rows, {system.A.nnz} nonzeros")
    u, report = solve_normal_cg(system, tol=cfg.tol, max_iter=cfg.max_iter,
                                jacobi=cfg.jacobi)
    log(f"solve: {report.iterations} iterations, converged={report.converged}, "
        f"normal={report.normal_residual:.3e}, "
        f"primal={report.primal_residual:.3e}, "
        f"wall={report.wall_time:.2f}s")

    coll = unstagger(u, program, spec.res)
    order = eqset.N if cfg.method == "pn" else 0
    fio.write_field(os.path.join(cfg.out, "field.pnfld"), coll, order)
    r, line = center_profile(spec, coll)
    fio.write_profile(os.path.join(cfg.out, "profile.csv"), zip(r, line))
    with open(os.path.join(cfg.out, "solve.log"), "w") as fh:
        fh.write(f"rows {system.A.shape[0]}\nnnz {system.A.nnz}\n")
        fh.write(f"iterations {report.iterations}\n")
        fh.write(f"converged {report.converged}\n")
        fh.write(f"normal_residual {report.normal_residual!r}\n")
        fh.write(f"primal_residual {report.primal_residual!r}\n")
        fh.write(f"wall_time {report.wall_time!r}\n")
        fh.write("# iter normal primal\n")
        for i, (nr, pr) in enumerate(zip(report.normal_history,
                                         report.primal_history), 1):
            fh.write(f"{i} {nr!r} {pr!r}\n")
    return report


def compare_profiles(r_a, v_a, r_ref, v_ref, r_min=0.0, r_max=None):
    """L2/Linf relative error and signed mean relative error of profile A
    against a reference curve (interpolated onto A's radii)."""
    r_a = np.asarray(r_a, dtype=float)
    v_a = np.asarray(v_a, dtype=float)
    if r_max is None:
        r_max = min(r_a.max(), np.max(r_ref))
    keep = (r_a >= r_min) & (r_a <= r_max)
    r = r_a[keep]
    a = v_a[keep]
    ref = np.interp(r, r_ref, v_ref)
    if not len(r):
        raise ValueError("empty comparison window")
    diff = a - ref
    rel_l2 = float(np.linalg.norm(diff) / np.linalg.norm(ref))
    rel_linf = float(np.max(np.abs(diff)) / np.max(np.abs(ref)))
    signed_mean = float(np.mean(diff / ref))
    return {"l2": rel_l2, "linf": rel_linf, "signed_mean": signed_mean,
            "n_points": int(len(r))}


def _add_run_args(p):
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--spec", help="key=value config file")
    p.add_argument("--method", choices=("pn", "cda"))
    p.add_argument("--order", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--res", type=int)
    p.add_argument("--bc", choices=("dirichlet", "neumann"))
    p.add_argument("--floor", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--jacobi", action="store_true", default=None)
    p.add_argument("--dump-equations", action="store_true")
    p.add_argument("--dump-stencil", action="store_true")


def _merge_config(args):
    mapping = {}
    if args.spec:
        mapping.update(fio.read_config(args.spec))
    for f in dc_fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            mapping[f.name] = val
    return config_from_mapping(mapping)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="pnrte",
        description="staggered-grid SH moment solver for radiative transfer")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve a problem and export artifacts")
    _add_run_args(p_run)
    p_cmp = sub.add_parser("compare", help="error metrics of a profile "
                                           "against a reference CSV")
    p_cmp.add_argument("--profile", required=True)
    p_cmp.add_argument("--reference", required=True)
    p_cmp.add_argument("--r-min", type=float, default=0.0)
    p_cmp.add_argument("--r-max", type=float, default=None)
    p_cmp.add_argument("--report", help="write metrics to this file")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0

    if args.command == "compare":
        cols_a = fio.read_profile(args.profile)
        cols_r = fio.read_profile(args.reference)
        metrics = compare_profiles(cols_a[0], cols_a[1], cols_r[0], cols_r[1],
                                   r_min=args.r_min, r_max=args.r_max)
        text = "\n".join(f"{k} {v!r}" for k, v in metrics.items())
        print(text)
        if args.report:
            with open(args.report, "w") as fh:
                fh.write(text + "\n")
        return EXIT_OK

    try:
        cfg = _merge_config(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dump_equations or args.dump_stencil:
        try:
            spec = build_problem(cfg)
            eqset = build_equations(cfg, spec.dim)
            if args.dump_equations:
                print(dump_equations(eqset), end="")
            if args.dump_stencil:
                print(dump_program(compile_program(eqset)), end="")
            return EXIT_OK
        except (PlacementError, InvalidOrderError) as exc:
            print(f"internal error: {exc}", file=sys.stderr)
            return EXIT_INTERNAL

    try:
        report = run(cfg)
    except (InvalidOrderError, ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularRiskError as exc:
        print(f"singular system: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except PlacementError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if not report.converged:
        print("solver did not converge", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
