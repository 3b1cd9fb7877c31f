"""Execute a stencil program over a voxel grid, solve the sparse system in
normal form, and post-process the staggered solution.

Row/column layout is voxel-major, unknown-minor: component (l, m) of voxel
(i, j, k) lives at flat_voxel * U + unknown_index[(l, m)] with the x index
varying fastest.  The matrix rows over voxels are independent, so assembly
is executed as whole-grid vectorized evaluation of each stencil entry; the
result is bit-identical regardless of evaluation order.

The transport term makes the system non-symmetric, so the solver runs
conjugate gradients on the normal equations A^T A u = A^T Q without ever
forming A^T A (two sparse products per iteration).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cas import evaluate
from .sh import real_sh

SQRT_4PI = math.sqrt(4.0 * math.pi)


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class SparseSystem:
    A: object               # csr_matrix, square
    Q: np.ndarray
    res: tuple
    n_unknowns: int


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    normal_residual: float = math.inf   # ||A^T (A u - Q)|| / ||A^T Q||
    primal_residual: float = math.inf   # ||A u - Q|| / ||Q||
    wall_time: float = 0.0
    normal_history: list = field(default_factory=list)
    primal_history: list = field(default_factory=list)


@dataclass
class SolutionField:
    staggered: np.ndarray    # solution vector, voxel-major unknown-minor
    collocated: np.ndarray   # (*res, U) array at voxel centers
    unknowns: list           # (l, m) per component
    spec: object             # the ProblemSpec that was solved
    report: SolveReport


def _padded(spec, name, pad):
    arr = spec.field_array(name)
    return np.pad(arr, pad, mode="edge")  # parameters replicate at the rim


def _needed_pad(program):
    from .cas import FieldSample, children_of
    pad = 1
    exprs = []
    for row in program.rows:
        exprs.append(row.residual)
        for e in row.entries:
            for k in range(program.dim):
                pad = max(pad, abs(e.offset[k]) // 2 + 1)
            exprs.append(e.coeff)
    stack = list(exprs)
    while stack:
        n = stack.pop()
        if isinstance(n, FieldSample) and n.pos is not None:
            for p in n.pos:
                pad = max(pad, abs(p) // 2 + 1)
        stack.extend(children_of(n))
    return pad


def _voxel_flat(res, *idx):
    flat = idx[0]
    stride = res[0]
    for k in range(1, len(res)):
        flat = flat + stride * idx[k]
        stride *= res[k]
    return flat


def assemble(program, spec):
    """Evaluate every stencil row at every voxel and scatter into CSR.

    Dirichlet: coefficients at boundary locations are zero, so writes
    targeting samples outside the domain or sitting exactly on the boundary
    plane (the last face sample of a staggered component) are dropped, and
    the row collocated with such a boundary sample keeps only its diagonal,
    pinning that sample through its collision term.  Neumann: writes are
    redirected to the nearest in-domain sample of the same component.
    Parameter samples at the rim replicate the nearest in-domain voxel.
    """
    res = tuple(spec.res)
    dim = program.dim
    if len(res) != dim:
        raise ValueError(f"problem is {len(res)}-D but program is {dim}-D")
    U = len(program.rows)
    nvox = int(np.prod(res))
    R = nvox * U
    h = spec.h
    pad = _needed_pad(program)
    cache = {}

    def sampler(name, pos):
        if name not in cache:
            cache[name] = _padded(spec, name, pad)
        sl = tuple(slice(pad + p // 2, pad + p // 2 + res[k])
                   for k, p in enumerate(pos))
        return cache[name][sl]

    grids = np.indices(res)
    vox_flat = _voxel_flat(res, *grids)
    neumann = spec.bc == "neumann"

    rows_acc, cols_acc, data_acc = [], [], []
    rhs = np.zeros(R)
    for row in program.rows:
        eq = program.unknown_index[row.index]
        row_ids = (vox_flat * U + eq).ravel()
        if neumann:
            row_boundary = None
        else:
            # rows collocated with a sample on the boundary plane get pinned
            row_boundary = np.zeros(res, dtype=bool)
            for k in range(dim):
                if row.location[k] == 1:
                    row_boundary |= grids[k] == res[k] - 1
        for e in row.entries:
            coeff = evaluate(e.coeff, {"h": h}, field_sampler=sampler)
            coeff = np.broadcast_to(np.asarray(coeff, dtype=float), res)
            home = program.placement.offsets[e.target]
            disp = [(e.offset[k] - home[k]) // 2 for k in range(dim)]
            t_idx = [grids[k] + disp[k] for k in range(dim)]
            if neumann:
                t_idx = [np.clip(t_idx[k], 0, res[k] - 1) for k in range(dim)]
                mask = None
            else:
                in_domain = np.ones(res, dtype=bool)
                target_interior = np.ones(res, dtype=bool)
                for k in range(dim):
                    in_domain &= (t_idx[k] >= 0) & (t_idx[k] <= res[k] - 1)
                    if home[k] == 1:  # last face sample lies on the boundary
                        target_interior &= t_idx[k] <= res[k] - 2
                is_diag = (e.target == row.index
                           and all(d == 0 for d in disp))
                if is_diag:
                    mask = in_domain
                else:
                    mask = in_domain & target_interior & ~row_boundary
                t_idx = [np.clip(t_idx[k], 0, res[k] - 1) for k in range(dim)]
            col_ids = (_voxel_flat(res, *t_idx) * U
                       + program.unknown_index[e.target]).ravel()
            vals = coeff.ravel()
            if mask is not None:
                keep = mask.ravel()
                rows_acc.append(row_ids[keep])
                cols_acc.append(col_ids[keep].astype(np.int64))
                data_acc.append(vals[keep])
            else:
                rows_acc.append(row_ids)
                cols_acc.append(col_ids.astype(np.int64))
                data_acc.append(vals)
        rhs_val = -evaluate(row.residual, {"h": h}, field_sampler=sampler)
        rhs_grid = np.broadcast_to(np.asarray(rhs_val, dtype=float), res)
        if row_boundary is not None:
            rhs_grid = np.where(row_boundary, 0.0, rhs_grid)
        rhs[row_ids] = rhs_grid.ravel()
    A = sp.coo_matrix(
        (np.concatenate(data_acc),
         (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(R, R)).tocsr()
    return SparseSystem(A=A, Q=rhs, res=res, n_unknowns=U)


def solve_normal_cg(system, tol=1e-8, max_iter=50000, primal_tol=None,
                    jacobi=False, x0=None):
    """CG on A^T A u = A^T Q, two matvecs per iteration, A^T A never formed.

    Terminates when the normal residual ||A^T(Au - Q)|| / ||A^T Q|| drops
    below tol (and, if primal_tol is given, the primal residual
    ||Au - Q|| / ||Q|| below primal_tol as well).  Non-convergence is a
    reported state, not an exception: callers inspect report.converged.
    An optional Jacobi preconditioner on diag(A^T A) is available for
    badly conditioned thresholding studies.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    A = system.A
    At = A.T.tocsr()
    b = system.Q
    t0 = time.perf_counter()
    report = SolveReport()

    norm_b = float(np.linalg.norm(b))
    atb = At @ b
    norm_atb = float(np.linalg.norm(atb))
    if norm_atb == 0.0 or norm_b == 0.0:
        report.converged = True
        report.normal_residual = 0.0
        report.primal_residual = 0.0
        report.wall_time = time.perf_counter() - t0
        return np.zeros_like(b), report

    if jacobi:
        diag = np.asarray(A.multiply(A).sum(axis=0)).ravel()
        diag[diag == 0.0] = 1.0
        minv = 1.0 / diag
    else:
        minv = None

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = At @ r
    zt = z * minv if minv is not None else z
    p = zt.copy()
    rho = float(z @ zt)
    for it in range(1, max_iter + 1):
        w = A @ p
        ww = float(w @ w)
        if ww == 0.0:
            break
        alpha = rho / ww
        x += alpha * p
        r -= alpha * w
        z = At @ r
        zt = z * minv if minv is not None else z
        rho_new = float(z @ zt)
        normal_rel = float(np.linalg.norm(z)) / norm_atb
        primal_rel = float(np.linalg.norm(r)) / norm_b
        report.normal_history.append(normal_rel)
        report.primal_history.append(primal_rel)
        report.iterations = it
        if normal_rel <= tol and (primal_tol is None
                                  or primal_rel <= primal_tol):
            report.converged = True
            break
        beta = rho_new / rho if rho != 0.0 else 0.0
        p = zt + beta * p
        rho = rho_new
    report.normal_residual = float(np.linalg.norm(At @ (A @ x - b))) / norm_atb
    report.primal_residual = float(np.linalg.norm(A @ x - b)) / norm_b
    report.wall_time = time.perf_counter() - t0
    return x, report


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------

def unknown_order(program):
    """(l, m) per solution-vector component, in component order."""
    return sorted(program.unknown_index, key=program.unknown_index.get)


def component_grid(u, system_res, n_unknowns, comp):
    """Extract one staggered component as a grid array."""
    nvox = int(np.prod(system_res))
    return u.reshape(nvox, n_unknowns)[:, comp].reshape(system_res, order="F")


def unstagger(u, program, res):
    """Interpolate every staggered component to the voxel centers.

    Components on a half-offset axis average the two straddling samples;
    the missing sample beyond the lower boundary replicates its neighbor
    (the extra boundary samples of the staggered layout are discarded).
    Returns an array of shape (*res, U).
    """
    U = len(program.rows)
    order = unknown_order(program)
    out = np.empty(tuple(res) + (U,))
    for lm in order:
        comp = program.unknown_index[lm]
        grid = component_grid(u, res, U, comp)
        for k in range(program.dim):
            if program.placement.offsets[lm][k] == 1:
                lower = np.concatenate(
                    [np.take(grid, [0], axis=k),
                     np.take(grid, range(0, res[k] - 1), axis=k)], axis=k)
                grid = 0.5 * (grid + lower)
        out[..., comp] = grid
    return out


def fluence(collocated):
    """Angle-integrated radiance: sqrt(4 pi) times the (0,0) coefficient."""
    return SQRT_4PI * collocated[..., 0]


def trilinear(collocated_comp, spec, x):
    """Interpolate a voxel-center grid at world position x (clamped weights
    inside the half-voxel rim)."""
    res = spec.res
    h = spec.h
    t = []
    i0 = []
    for k in range(spec.dim):
        s = (x[k] - spec.origin[k]) / h - 0.5
        s = min(max(s, 0.0), res[k] - 1.0)
        base = min(int(math.floor(s)), res[k] - 2) if res[k] > 1 else 0
        i0.append(base)
        t.append(s - base)
    acc = 0.0
    for corner in range(2 ** spec.dim):
        w = 1.0
        idx = []
        for k in range(spec.dim):
            bit = (corner >> k) & 1
            w *= t[k] if bit else (1.0 - t[k])
            idx.append(min(i0[k] + bit, res[k] - 1))
        acc += w * collocated_comp[tuple(idx)]
    return acc


def reconstruct_radiance(collocated, unknowns, spec, x, omega):
    """Radiance at world position x in unit direction omega: trilinear
    interpolation of each SH coefficient, then the basis dot product."""
    for k in range(spec.dim):
        if not (spec.origin[k] <= x[k] <= spec.origin[k] + spec.extent[k]):
            raise OutOfDomainError(f"position {x} outside the domain")
    omega = np.asarray(omega, dtype=float)
    omega = omega / np.linalg.norm(omega)
    theta = math.acos(max(-1.0, min(1.0, omega[2])))
    phi = math.atan2(omega[1], omega[0])
    val = 0.0
    for comp, (l, m) in enumerate(unknowns):
        c = trilinear(collocated[..., comp], spec, x)
        val += c * real_sh(l, m, theta, phi)
    return val
