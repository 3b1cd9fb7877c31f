"""Discretize moment equations on staggered grids in stencil space.

Stencil space is the frame of a hypothetical center voxel: every location is
an offset from that voxel's center, stored in doubled (half-voxel) integer
units so half offsets are exact.  Each equation is discretized at the grid
location of its own unknown.  Walking the expression tree with a location
stack:

  * a derivative along axis k replaces its subtree by the two-point
    difference of the subtree shifted by +/- half a voxel along k, divided by
    the spacing symbol h (nested derivatives recurse, widening the stencil);
  * an unknown or parameter sample whose location is off its home grid is
    replaced by the average of the 2^k nearest home-grid sites (parameters
    live at voxel centers);
  * everything else passes through unchanged.

Grid placement is not transcribed from a table: each unknown's per-axis
offset parity is solved from the coupling structure of the equations (an
unknown reached through an odd number of derivatives along an axis must sit
on the opposite parity along that axis, through an even number on the same
parity), seeded by (0,0) at the voxel center.  An inconsistent parity
requirement raises PlacementError.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cas import (Add, D, Delta, FieldSample, Mul, Num, Pow, Sym, Unknown,
                  add, factorize_canonical, mul, pow_, render)

H = Sym("h")


class PlacementError(Exception):
    pass


@dataclass(frozen=True)
class StaggeredPlacement:
    """Per-unknown grid offsets in doubled units (0 = center, 1 = +half)."""

    dim: int
    offsets: dict

    def grids(self):
        return sorted(set(self.offsets.values()))


def _derivative_couplings(expr):
    """Yield (unknown (l, m), per-axis derivative-order parities) pairs."""
    out = []

    def walk(n, orders):
        if isinstance(n, Unknown):
            out.append(((n.l, n.m), tuple(o % 2 for o in orders)))
        elif isinstance(n, D):
            nxt = list(orders)
            nxt[n.axis] += 1
            walk(n.child, tuple(nxt))
        else:
            for c in _children(n):
                walk(c, orders)

    walk(expr, (0, 0, 0))
    return out


def _children(n):
    if isinstance(n, (Add, Mul)):
        return n.children
    if isinstance(n, Pow):
        return (n.base,)
    if isinstance(n, Delta):
        return (n.a, n.b)
    if isinstance(n, D):
        return (n.child,)
    return ()


def assign_placement(eqset):
    """Solve the per-axis parity two-coloring induced by the couplings.

    Post-condition: every unknown reached through a single derivative along
    axis k sits exactly half a voxel away from the equation's own location
    along k and on the same offset in every other axis, which is what makes
    the two-point differences second order and keeps decoupled checkerboard
    modes out of the discrete operator.
    """
    dim = eqset.dim
    unknowns = eqset.unknowns
    # constraints[(a, b)] = required offset parity difference per axis
    constraints = []
    for (lm, expr) in eqset.equations:
        for target, parity in _derivative_couplings(expr):
            constraints.append((lm, target, parity[:dim]))

    offsets = {unknowns[0]: (0,) * dim} if unknowns else {}
    # unknowns form one coupled component seeded at the first equation's
    # unknown; iterate to a fixed point and verify consistency
    changed = True
    while changed:
        changed = False
        for a, b, par in constraints:
            known_a, known_b = a in offsets, b in offsets
            if known_a and not known_b:
                offsets[b] = tuple((offsets[a][k] + par[k]) % 2
                                   for k in range(dim))
                changed = True
            elif known_b and not known_a:
                offsets[a] = tuple((offsets[b][k] + par[k]) % 2
                                   for k in range(dim))
                changed = True
    for a, b, par in constraints:
        if a in offsets and b in offsets:
            want = tuple((offsets[a][k] + par[k]) % 2 for k in range(dim))
            if offsets[b] != want:
                raise PlacementError(
                    f"parity conflict between {a} and {b}: "
                    f"{offsets[b]} vs required {want}")
    for lm in unknowns:
        offsets.setdefault(lm, (0,) * dim)
    return StaggeredPlacement(dim=dim, offsets=offsets)


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def _interp_sites(pos, home_parity):
    """Home-grid sites averaging to `pos`: per mismatched axis the two
    neighbors at +/- half a voxel."""
    sites = [()]
    for k, p in enumerate(pos):
        if p % 2 == home_parity[k] % 2:
            sites = [s + (p,) for s in sites]
        else:
            sites = [s + (q,) for s in sites for q in (p - 1, p + 1)]
    return sites


def _discretize_node(n, pos, placement):
    if isinstance(n, D):
        hi = list(pos)
        lo = list(pos)
        hi[n.axis] += 1
        lo[n.axis] -= 1
        return mul(
            add(_discretize_node(n.child, tuple(hi), placement),
                mul(Num(-1), _discretize_node(n.child, tuple(lo), placement))),
            pow_(H, -1))
    if isinstance(n, Unknown):
        home = placement.offsets[(n.l, n.m)]
        sites = _interp_sites(pos, home)
        terms = [Unknown(n.field, n.l, n.m, s) for s in sites]
        if len(terms) == 1:
            return terms[0]
        return mul(Num(1.0 / len(terms)), add(*terms))
    if isinstance(n, FieldSample):
        sites = _interp_sites(pos, (0,) * len(pos))  # parameters at centers
        terms = [FieldSample(n.name, s) for s in sites]
        if len(terms) == 1:
            return terms[0]
        return mul(Num(1.0 / len(terms)), add(*terms))
    if isinstance(n, Add):
        return add(*[_discretize_node(c, pos, placement) for c in n.children])
    if isinstance(n, Mul):
        return mul(*[_discretize_node(c, pos, placement) for c in n.children])
    if isinstance(n, Pow):
        return pow_(_discretize_node(n.base, pos, placement), n.exponent)
    if isinstance(n, Delta):
        return Delta(_discretize_node(n.a, pos, placement),
                     _discretize_node(n.b, pos, placement))
    return n


def discretize(eqset, placement):
    """Discretize every equation at its unknown's own grid location."""
    rows = []
    for (lm, expr) in eqset.equations:
        p0 = placement.offsets[lm]
        rows.append((lm, _discretize_node(expr, p0, placement)))
    return rows


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StencilEntry:
    target: tuple      # (l, m)
    offset: tuple      # doubled units, absolute position in stencil space
    coeff: object      # Expr over field samples, h and numbers


@dataclass(frozen=True)
class StencilRow:
    index: tuple       # (l, m) of the equation
    location: tuple    # doubled units: where this row is collocated
    entries: tuple     # of StencilEntry
    residual: object   # Expr; RHS of the assembled row is -residual


@dataclass(frozen=True)
class StencilProgram:
    """Compiled discretization: one stencil row per moment equation.

    unknown_index is the solver's flat component index per (l, m);
    placement locates every unknown's home grid for column mapping.
    """

    N: int
    dim: int
    rows: tuple
    unknown_index: dict
    placement: StaggeredPlacement


def compile_program(eqset, placement=None):
    """Factor the discretized rows into executable stencils."""
    if placement is None:
        placement = assign_placement(eqset)
    rows = []
    for (lm, expr) in discretize(eqset, placement):
        canon = factorize_canonical(expr)
        entries = []
        for unk, coeff in canon.entries:
            entries.append(StencilEntry(target=(unk.l, unk.m),
                                        offset=unk.pos, coeff=coeff))
        entries.sort(key=lambda s: (s.target, s.offset))
        rows.append(StencilRow(index=lm, location=placement.offsets[lm],
                               entries=tuple(entries),
                               residual=canon.residual))
    return StencilProgram(N=eqset.N, dim=eqset.dim, rows=tuple(rows),
                          unknown_index=dict(eqset.unknown_index),
                          placement=placement)


def max_entry_offset(program):
    """Largest voxel-unit entry offset relative to the row location."""
    worst = 0
    for row in program.rows:
        for e in row.entries:
            for k in range(program.dim):
                worst = max(worst, abs(e.offset[k] - row.location[k]) / 2.0)
    return worst


def dump_program(program):
    """Documented text dump: one line per entry, '->' for the RHS."""
    lines = [f"# stencil program  N={program.N}  dim={program.dim}  "
             f"rows={len(program.rows)}"]
    for row in program.rows:
        loc = ",".join(_half(v) for v in row.location)
        lines.append(f"row ({row.index[0]},{row.index[1]}) @ ({loc})")
        for e in row.entries:
            off = ",".join(_half(v) for v in e.offset)
            lines.append(f"  L[{e.target[0]},{e.target[1]}] @ ({off}) : "
                         f"{render(e.coeff)}")
        lines.append(f"  -> rhs : {render(mul(Num(-1), row.residual))}")
    return "\n".join(lines) + "\n"


def _half(v):
    return str(v // 2) if v % 2 == 0 else f"{v}/2"


def render_row_source(row, name="eval_row"):
    """Emit a straight-line Python routine equivalent to interpreting the
    row: ahead-of-time stencil code generation (optional execution path).

    The generated function takes (field, h) where field(name, pos) samples a
    parameter at a doubled-unit offset, and returns (entries, rhs) with
    entries as a list of ((l, m), offset, value).
    """
    lines = [f"def {name}(field, h):", "    entries = []"]
    for e in row.entries:
        src = render(e.coeff, "source")
        lines.append(f"    entries.append((({e.target[0]}, {e.target[1]}), "
                     f"{e.offset!r}, {src}))")
    rhs_src = render(mul(Num(-1), row.residual), "source")
    lines.append(f"    rhs = {rhs_src}")
    lines.append("    return entries, rhs")
    return "\n".join(lines) + "\n"


def compile_row_source(row, name="eval_row"):
    """exec() the generated source and hand back the callable."""
    ns = {}
    exec(render_row_source(row, name), ns)
    return ns[name]
