"""Expression-tree kernel: manipulation passes, evaluation, frontends."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnrte.cas import (D, Delta, FieldSample, Num, NonlinearityError, Sym,
                       Unknown, add, evaluate, expand_fold,
                       factorize_canonical, mul, parse_pretty, pow_, render,
                       substitute)

X = Sym("x")
Y = Sym("y")
H = Sym("h")


def ev(e, **binds):
    return evaluate(e, binds)


# ---------------------------------------------------------------------------
# constructors and normalization
# ---------------------------------------------------------------------------

def test_add_mul_normalization():
    e = add(X, Num(1), Num(2))
    assert ev(e, x=5) == 8
    # numeric children of Mul folded into one leading factor
    e = mul(Num(2), X, Num(3))
    assert isinstance(e.children[0], Num) and e.children[0].value == 6
    assert ev(e, x=2) == 12
    assert mul(Num(0), X) == Num(0)
    assert add() == Num(0)
    assert pow_(X, 0) == Num(1)
    assert pow_(X, 1) == X


def test_structural_hash_and_eq():
    a = mul(Num(2), X, pow_(Y, 2))
    b = mul(Num(2), X, pow_(Y, 2))
    assert a == b and hash(a) == hash(b)
    assert a != mul(Num(2), Y, pow_(X, 2))


def test_substitute_symbol():
    e = add(X, Num(1))
    assert ev(expand_fold(substitute(e, X, Num(2)))) == 3


def test_substitute_structural_under_derivative():
    f = Unknown("f", 0, 0)
    g = add(Unknown("g", 0, 0), Unknown("k", 0, 0))
    e = D(0, f)
    out = substitute(e, f, g)
    assert out == D(0, g)


def test_substitute_only_target_nodes():
    e = mul(FieldSample("sigma_t"), Unknown("L", 1, 1))
    out = substitute(e, Unknown("L", 1, 1), mul(Num(2), Unknown("L", 0, 0)))
    assert out == mul(Num(2), FieldSample("sigma_t"), Unknown("L", 0, 0))
    assert substitute(e, Unknown("L", 2, 2), Num(0)) == e


# ---------------------------------------------------------------------------
# expand / fold
# ---------------------------------------------------------------------------

def test_expand_distributes():
    a, b, c = Sym("a"), Sym("b"), Sym("c")
    e = expand_fold(mul(add(a, b), c))
    assert e == add(mul(a, c), mul(b, c))


def test_expand_folds_constants():
    e = expand_fold(mul(Num(2), Num(3), X))
    assert e == mul(Num(6), X)


def test_expand_binomial_power():
    a, b = Sym("a"), Sym("b")
    e = expand_fold(pow_(add(a, b), 2))
    for av, bv in [(1.5, -0.25), (2.0, 3.0)]:
        want = (av + bv) ** 2
        assert ev(e, a=av, b=bv) == pytest.approx(want, rel=1e-14)


def _random_expr(rng, depth, syms):
    if depth == 0 or rng.random() < 0.25:
        choice = rng.integers(0, 3)
        if choice == 0:
            return Num(float(np.round(rng.uniform(-3, 3), 3)))
        return syms[int(rng.integers(0, len(syms)))]
    kind = rng.integers(0, 3)
    if kind == 0:
        return add(*[_random_expr(rng, depth - 1, syms)
                     for _ in range(int(rng.integers(2, 4)))])
    if kind == 1:
        return mul(*[_random_expr(rng, depth - 1, syms)
                     for _ in range(int(rng.integers(2, 4)))])
    return pow_(_random_expr(rng, depth - 1, syms), int(rng.integers(1, 3)))


def test_expand_fold_preserves_evaluation_random_trees():
    # randomized evaluation oracle, depth <= 6, 20 bindings per tree;
    # the roundoff scale of the reordered sum is the term-magnitude sum
    rng = np.random.default_rng(42)
    syms = [Sym("a"), Sym("b"), Sym("c")]
    for _ in range(30):
        e = _random_expr(rng, int(rng.integers(1, 7)), syms)
        x = expand_fold(e)
        from pnrte.cas import Add
        terms = x.children if isinstance(x, Add) else (x,)
        for _ in range(20):
            binds = {s.name: float(rng.uniform(-2, 2)) for s in syms}
            v0, v1 = ev(e, **binds), ev(x, **binds)
            scale = 1.0 + abs(v0) + sum(abs(ev(t, **binds)) for t in terms)
            assert abs(v0 - v1) <= 1e-12 * scale


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_manipulation_evaluation_preserving_property(seed):
    rng = np.random.default_rng(seed)
    syms = [Sym("a"), Sym("b")]
    e = _random_expr(rng, 4, syms)
    x = expand_fold(e)
    binds = {s.name: float(rng.uniform(-2, 2)) for s in syms}
    v0, v1 = ev(e, **binds), ev(x, **binds)
    assert abs(v0 - v1) <= 1e-12 * (1.0 + abs(v0))


# ---------------------------------------------------------------------------
# canonical factorization
# ---------------------------------------------------------------------------

def test_factorize_collects_like_unknowns():
    u = Unknown("u", 0, 0, (0,))
    e = add(mul(Num(2), u), mul(Num(3), u))
    canon = factorize_canonical(e)
    assert len(canon.entries) == 1
    unk, coeff = canon.entries[0]
    assert unk == u and ev(coeff) == 5
    assert ev(canon.residual) == 0


def test_factorize_field_coefficient_and_residual():
    u = Unknown("u", 0, 0, (0, 0, 0))
    st_f = FieldSample("sigma_t", (0, 0, 0))
    q = FieldSample("q", (0, 0, 0))
    e = add(mul(st_f, u), mul(Num(-1), q))
    canon = factorize_canonical(e)
    assert canon.entries == ((u, st_f),)
    assert canon.residual == mul(Num(-1), q)


def test_factorize_distinguishes_positions():
    u0 = Unknown("u", 0, 0, (0,))
    u1 = Unknown("u", 0, 0, (2,))
    canon = factorize_canonical(add(u0, u1, u0))
    assert len(canon.entries) == 2
    got = {unk.pos: ev(c) for unk, c in canon.entries}
    assert got == {(0,): 2, (2,): 1}


def test_factorize_rejects_nonlinearity():
    u = Unknown("u", 0, 0, (0,))
    with pytest.raises(NonlinearityError):
        factorize_canonical(mul(u, u))
    with pytest.raises(NonlinearityError):
        factorize_canonical(pow_(add(u, Num(1)), 2))


def test_canonical_form_evaluates_like_original():
    u0 = Unknown("u", 0, 0, (0, 0))
    u1 = Unknown("u", 1, 1, (1, 0))
    f = FieldSample("s", (0, 0))
    e = add(mul(Num(2.5), f, u0), mul(Num(-1), u1), f, Num(3))
    canon = factorize_canonical(e)
    rng = np.random.default_rng(7)
    for _ in range(10):
        sval = float(rng.uniform(0.5, 2))
        uval = {(0, 0): float(rng.uniform(-1, 1)),
                (1, 1): float(rng.uniform(-1, 1))}

        def fs(name, pos):
            return sval

        def us(field, l, m, pos):
            return uval[(l, m)]

        v0 = evaluate(e, {}, field_sampler=fs, unknown_sampler=us)
        v1 = evaluate(canon.to_expr(), {}, field_sampler=fs, unknown_sampler=us)
        assert abs(v0 - v1) <= 1e-12 * (1 + abs(v0))


def test_canonicalization_idempotent_through_render_roundtrip():
    u0 = Unknown("L", 0, 0, (0, 0))
    u1 = Unknown("L", 1, 1, (1, 0))
    e = add(mul(Num(2), FieldSample("sigma_t", (0, 0)), u0),
            mul(Num(-0.5), u1), mul(Num(-1), FieldSample("Q_0_0", (0, 0))))
    c1 = factorize_canonical(e)
    roundtrip = parse_pretty(render(c1.to_expr()))
    c2 = factorize_canonical(roundtrip)
    assert c1.entries == c2.entries
    assert c1.residual == c2.residual


# ---------------------------------------------------------------------------
# evaluation errors
# ---------------------------------------------------------------------------

def test_unbound_symbol_is_named():
    from pnrte.cas import UnboundSymbolError
    with pytest.raises(UnboundSymbolError, match="zeta"):
        evaluate(Sym("zeta"), {})


def test_delta_evaluation():
    assert ev(Delta(Num(1), Num(1))) == 1.0
    assert ev(Delta(Num(1), Num(2))) == 0.0


# ---------------------------------------------------------------------------
# frontends
# ---------------------------------------------------------------------------

def test_render_examples():
    assert render(mul(Num(6), X)) == "6*x"
    assert render(D(0, Unknown("L", 1, -1))) == "dx(L[1,-1])"


def test_render_parse_roundtrip():
    u = Unknown("L", 2, -1, (1, 0, -2))
    e = add(mul(Num(0.5), FieldSample("sigma_t", (0, 0, 2)), u),
            mul(Num(-1), pow_(mul(Num(3), FieldSample("sigma_t", (0, 0, 0))),
                              -1)),
            D(2, Unknown("L", 0, 0)))
    text = render(e)
    back = parse_pretty(text)
    assert back == e


def test_parse_halves():
    e = parse_pretty("L[1,1]@(1/2,0,-1/2)")
    assert e == Unknown("L", 1, 1, (1, 0, -1))


def test_source_frontend_matches_interpreter():
    coeff = add(mul(Num(2.0), FieldSample("sigma_t", (0, 0)),
                    pow_(Sym("h"), -2)),
                pow_(mul(Num(3), FieldSample("sigma_t", (2, 0))), -1))
    src = render(coeff, "source")
    rng = np.random.default_rng(3)
    for _ in range(10):
        vals = {(0, 0): float(rng.uniform(0.5, 2)),
                (2, 0): float(rng.uniform(0.5, 2))}
        hval = float(rng.uniform(0.1, 1))

        def fs(name, pos):
            return vals[pos]

        direct = evaluate(coeff, {"h": hval}, field_sampler=fs)
        via_src = eval(src, {"field": fs, "h": hval})
        assert via_src == pytest.approx(direct, abs=1e-14, rel=1e-14)
