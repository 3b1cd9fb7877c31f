"""Build the real-valued moment equations of the truncated spherical-
harmonics expansion of the RTE as expression trees, for any order N, in
2-D or 3-D, plus the collapsed diffusion equation.

Each equation is stored as LHS - RHS, i.e.

    transport + sigma_t L^{l,m} - sigma_s lambda_l p^{l,0} L^{l,m} - Q^{l,m}

so that canonical factorization yields the matrix row directly and the
negated residual is the right-hand side.

Sign convention: the x/y transport couplings below correspond to a
right-handed z-up frame; every coefficient (magnitude and sign) is pinned by
the angular-quadrature oracle in the test suite, which checks

    sum_k M_k[(l',m'),(l,m)] d_k L^{l,m}  ==  int Yr^{l',m'} (w . grad Lhat) dw

for all index pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .cas import D, Expr, FieldSample, Num, Unknown, add, mul
from .sh import beta_x, beta_y, coupling, lambda_l


class InvalidOrderError(ValueError):
    pass


class IndexScopeError(ValueError):
    pass


UNKNOWN_FIELD = "L"


def q_name(l, m):
    """Field name for the emission coefficient Q^{l,m} (parser-safe)."""
    return f"Q_{l}_{'n' if m < 0 else ''}{abs(m)}"


def p_name(l):
    """Field name for the zonal phase coefficient p^{l,0}."""
    return f"p_{l}"


def in_scope(l, m, N, dim):
    """Whether coefficient (l, m) is carried at order N in this dimension.

    The 2-D reduction assumes z-independence, which kills every coefficient
    with odd l + m.
    """
    if l < 0 or l > N or abs(m) > l:
        return False
    if dim == 2 and (l + m) % 2 != 0:
        return False
    return True


def scope_indices(N, dim):
    return [(l, m) for l in range(N + 1) for m in range(-l, l + 1)
            if in_scope(l, m, N, dim)]


def sh_flat_index(l, m, dim, N):
    """Bijective flat index over the in-scope (l, m) pairs.

    3-D uses the closed form l(l+1)+m; 2-D enumerates the even-parity pairs
    in (l, m) order.
    """
    if not in_scope(l, m, N, dim):
        raise IndexScopeError(f"({l},{m}) out of scope for N={N}, dim={dim}")
    if dim == 3:
        return l * (l + 1) + m
    # 2-D: l rows contribute ceil/floor patterns; count preceding pairs
    idx = 0
    for ll in range(l):
        idx += sum(1 for mm in range(-ll, ll + 1) if (ll + mm) % 2 == 0)
    idx += sum(1 for mm in range(-l, m) if (l + mm) % 2 == 0)
    return idx


def sh_index_from_flat(i, dim, N):
    for (l, m) in scope_indices(N, dim):
        if sh_flat_index(l, m, dim, N) == i:
            return (l, m)
    raise IndexScopeError(f"flat index {i} out of scope for N={N}, dim={dim}")


def num_unknowns(N, dim):
    return (N + 1) ** 2 if dim == 3 else (N + 1) * (N + 2) // 2


@dataclass(frozen=True)
class EquationSet:
    """Ordered moment equations plus the unknown index map."""

    N: int
    dim: int
    equations: tuple  # of ((l, m), Expr)
    unknown_index: dict = field(hash=False)

    @property
    def unknowns(self):
        return [lm for lm, _ in self.equations]


_HALF = 0.5
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def transport_couplings(l, m):
    """Transport-term couplings of moment equation (l, m) in 3-D.

    Returns a list of (axis, (l_t, m_t), weight); entries whose target has
    |m_t| > l_t or l_t < 0 are omitted (they multiply an identically zero
    basis function), as are zero weights.  Truncation above band N is the
    caller's concern.
    """
    out = []

    def emit(axis, lt, mt, w):
        if lt < 0 or abs(mt) > lt:
            return
        if w != 0.0:
            out.append((axis, (lt, mt), w))

    if m == 0:
        c = coupling("c", l - 1, -1) if l - 1 >= 1 else 0.0
        d = coupling("d", l + 1, -1)
        emit(0, l - 1, 1, -_INV_SQRT2 * c)
        emit(0, l + 1, 1, +_INV_SQRT2 * d)
        emit(1, l - 1, -1, -_INV_SQRT2 * c)
        emit(1, l + 1, -1, +_INV_SQRT2 * d)
        emit(2, l - 1, 0, coupling("a", l - 1, 0) if l >= 1 else 0.0)
        emit(2, l + 1, 0, coupling("b", l + 1, 0))
        return out

    if m < 0:
        bx, by = beta_x(m), beta_y(m)
        c = coupling("c", l - 1, m - 1) if l - 1 >= abs(m - 1) else 0.0
        d = coupling("d", l + 1, m - 1)
        e = coupling("e", l - 1, m + 1) if l - 1 >= abs(m + 1) else 0.0
        f = coupling("f", l + 1, m + 1)
        emit(0, l - 1, m - 1, -_HALF * c)
        emit(0, l + 1, m - 1, +_HALF * d)
        emit(0, l - 1, m + 1, +_HALF * bx * e)
        emit(0, l + 1, m + 1, -_HALF * bx * f)
        emit(1, l - 1, -m + 1, +_HALF * c)
        emit(1, l + 1, -m + 1, -_HALF * d)
        emit(1, l - 1, -m - 1, +_HALF * by * e)
        emit(1, l + 1, -m - 1, -_HALF * by * f)
        emit(2, l - 1, m, coupling("a", l - 1, m) if l - 1 >= abs(m) else 0.0)
        emit(2, l + 1, m, coupling("b", l + 1, m))
        return out

    bx, by = beta_x(m), beta_y(m)
    c = coupling("c", l - 1, -m - 1) if l - 1 >= abs(m + 1) else 0.0
    d = coupling("d", l + 1, -m - 1)
    e = coupling("e", l - 1, -m + 1) if l - 1 >= abs(m - 1) else 0.0
    f = coupling("f", l + 1, -m + 1)
    emit(0, l - 1, m + 1, -_HALF * c)
    emit(0, l + 1, m + 1, +_HALF * d)
    emit(0, l - 1, m - 1, +_HALF * bx * e)
    emit(0, l + 1, m - 1, -_HALF * bx * f)
    emit(1, l - 1, -m - 1, -_HALF * c)
    emit(1, l + 1, -m - 1, +_HALF * d)
    emit(1, l - 1, -m + 1, -_HALF * by * e)
    emit(1, l + 1, -m + 1, +_HALF * by * f)
    emit(2, l - 1, m, coupling("a", l - 1, -m) if l - 1 >= abs(m) else 0.0)
    emit(2, l + 1, m, coupling("b", l + 1, -m))
    return out


def transport_expr(l, m, N, dim):
    """Transport term of equation (l, m) as an Expr, truncated at band N."""
    terms = []
    for axis, (lt, mt), w in transport_couplings(l, m):
        if dim == 2 and axis == 2:
            continue
        if not in_scope(lt, mt, N, dim):
            continue  # truncation closure: coefficients above band N are zero
        terms.append(mul(Num(w), D(axis, Unknown(UNKNOWN_FIELD, lt, mt))))
    return add(*terms) if terms else Num(0)


def build_pn(N, dim=3):
    """Full moment equation set at truncation order N."""
    if N < 1:
        raise InvalidOrderError(f"order must be >= 1, got {N}")
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    equations = []
    for (l, m) in scope_indices(N, dim):
        u = Unknown(UNKNOWN_FIELD, l, m)
        expr = add(
            transport_expr(l, m, N, dim),
            mul(FieldSample("sigma_t"), u),
            mul(Num(-1.0), FieldSample("sigma_s"), Num(lambda_l(l)),
                FieldSample(p_name(l)), u),
            mul(Num(-1.0), FieldSample(q_name(l, m))),
        )
        equations.append(((l, m), expr))
    index = {lm: sh_flat_index(*lm, dim, N) for lm, _ in equations}
    return EquationSet(N=N, dim=dim, equations=tuple(equations),
                       unknown_index=index)


def build_cda(dim=3):
    """Collapsed first-order system: one diffusion equation in L^{0,0}.

    Collapsing the order-1 moment system (eliminating the three first-band
    coefficients through their own moment equations) gives

        -div( (1/(3 sigma_t)) grad L00 ) + (sigma_t - sigma_s lambda_0 p_0) L00 = Q00

    including the removal term, which vanishes only for conservative media.
    The nested derivative structure is kept explicit so the stencil compiler
    exercises second-order finite differences.
    """
    u = Unknown(UNKNOWN_FIELD, 0, 0)
    diffusivity = (mul(Num(3.0), FieldSample("sigma_t"))) ** -1
    diffusion = [mul(Num(-1.0), D(ax, mul(diffusivity, D(ax, u))))
                 for ax in range(dim)]
    expr = add(
        *diffusion,
        mul(FieldSample("sigma_t"), u),
        mul(Num(-1.0), FieldSample("sigma_s"), Num(lambda_l(0)),
            FieldSample(p_name(0)), u),
        mul(Num(-1.0), FieldSample(q_name(0, 0))),
    )
    return EquationSet(N=0, dim=dim, equations=(((0, 0), expr),),
                       unknown_index={(0, 0): 0})


def dump_equations(eqset):
    """Pretty-text dump of an equation set (stable; used as golden files)."""
    from .cas import render
    lines = [f"# moment equations  N={eqset.N}  dim={eqset.dim}  "
             f"unknowns={len(eqset.equations)}"]
    for (l, m), expr in eqset.equations:
        lines.append(f"({l},{m}): {render(expr)} = 0")
    return "\n".join(lines) + "\n"
