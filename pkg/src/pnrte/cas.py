"""Minimal computer-algebra kernel: immutable expression trees plus the
manipulation passes the moment-equation pipeline needs.

Node set (closed under everything the equation builder and the stencil
compiler produce):

    Num(value)                      exact int fast path, float otherwise
    Sym(name)                       free scalar symbol (grid spacing h)
    Unknown(field, l, m, pos)       solution coefficient; pos is None while
                                    the equation is still continuous, and a
                                    tuple of per-axis offsets in HALF-VOXEL
                                    (doubled) integer units once discretized
    FieldSample(name, pos)          RTE parameter sample (sigma_t, p_l, Q_lm);
                                    pos as for Unknown
    Add(children) / Mul(children)   n-ary, >= 2 children after normalization;
                                    Mul keeps a single leading numeric factor
    Pow(base, k)                    integer exponent only
    D(axis, child)                  partial derivative along axis index
    Delta(a, b)                     Kronecker delta of two subexpressions

Half-offsets are stored as integers in doubled units so staggered locations
stay exact; offset 1 means half a voxel.

The pretty-text form (see render / parse_pretty) is the documented exchange
format used by the golden-file tests:

    expr    :=  term (('+'|'-') term)*
    term    :=  factor ('*' factor)*
    factor  :=  atom ('^' int)?
    atom    :=  number | name | name offsets | name '[' int ',' int ']' offsets?
             |  'dx(' expr ')' | 'dy(' expr ')' | 'dz(' expr ')'
             |  'delta(' expr ',' expr ')' | '(' expr ')' | '-' factor
    offsets :=  '@(' off (',' off)* ')'        off := int | int '/2'

A name followed by '[l,m]' is an Unknown, a bare name with or without
offsets is a FieldSample unless it is bound as a symbol ('h').
"""

from __future__ import annotations

import re


class CasError(Exception):
    pass


class UnboundSymbolError(CasError):
    pass


class NonlinearityError(CasError):
    pass


class Expr:
    """Immutable expression node; subclasses set _key in __init__."""

    __slots__ = ("_hash", "_key")

    def _finish(self, key):
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Expr) and self._key == other._key

    def __repr__(self):
        return render(self)

    # arithmetic sugar used by the builders and by tests
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, mul(Num(-1), as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), mul(Num(-1), self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __neg__(self):
        return mul(Num(-1), self)

    def __pow__(self, k):
        return pow_(self, k)


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"Num value must be int or float, got {value!r}")
        object.__setattr__(self, "value", value)
        self._finish(("num", float(value)))


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        object.__setattr__(self, "name", name)
        self._finish(("sym", name))


class Unknown(Expr):
    __slots__ = ("field", "l", "m", "pos")

    def __init__(self, field, l, m, pos=None):
        if pos is not None:
            pos = tuple(int(p) for p in pos)
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "l", int(l))
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "pos", pos)
        self._finish(("unk", field, self.l, self.m, pos))


class FieldSample(Expr):
    __slots__ = ("name", "pos")

    def __init__(self, name, pos=None):
        if pos is not None:
            pos = tuple(int(p) for p in pos)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "pos", pos)
        self._finish(("field", name, pos))


class Add(Expr):
    __slots__ = ("children",)

    def __init__(self, children):
        children = tuple(children)
        if len(children) < 2:
            raise ValueError("Add requires >= 2 children; use add()")
        object.__setattr__(self, "children", children)
        self._finish(("add",) + tuple(c._key for c in children))


class Mul(Expr):
    __slots__ = ("children",)

    def __init__(self, children):
        children = tuple(children)
        if len(children) < 2:
            raise ValueError("Mul requires >= 2 children; use mul()")
        object.__setattr__(self, "children", children)
        self._finish(("mul",) + tuple(c._key for c in children))


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", int(exponent))
        self._finish(("pow", base._key, self.exponent))


class D(Expr):
    """Partial derivative along axis (0=x, 1=y, 2=z)."""

    __slots__ = ("axis", "child")

    def __init__(self, axis, child):
        object.__setattr__(self, "axis", int(axis))
        object.__setattr__(self, "child", child)
        self._finish(("d", self.axis, child._key))


class Delta(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        self._finish(("delta", a._key, b._key))


def as_expr(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return Num(x)
    raise TypeError(f"cannot coerce {x!r} to Expr")


def _num_mul(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return a * b
    return float(a) * float(b)


def _num_add(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return a + b
    return float(a) + float(b)


def add(*terms):
    """Normalizing n-ary sum: flattens nested Adds, folds numeric terms."""
    flat = []
    const = 0
    for t in terms:
        t = as_expr(t)
        if isinstance(t, Add):
            for c in t.children:
                if isinstance(c, Num):
                    const = _num_add(const, c.value)
                else:
                    flat.append(c)
        elif isinstance(t, Num):
            const = _num_add(const, t.value)
        else:
            flat.append(t)
    if const != 0 or not flat:
        flat.append(Num(const))
    if len(flat) == 1:
        return flat[0]
    return Add(flat)


def mul(*factors):
    """Normalizing n-ary product: flattens, folds numbers into one leading
    factor, short-circuits on zero."""
    flat = []
    const = 1
    for f in factors:
        f = as_expr(f)
        if isinstance(f, Mul):
            for c in f.children:
                if isinstance(c, Num):
                    const = _num_mul(const, c.value)
                else:
                    flat.append(c)
        elif isinstance(f, Num):
            const = _num_mul(const, f.value)
        else:
            flat.append(f)
    if const == 0:
        return Num(0)
    if const != 1 or not flat:
        flat.insert(0, Num(const))
    if len(flat) == 1:
        return flat[0]
    return Mul(flat)


def pow_(base, exponent):
    base = as_expr(base)
    exponent = int(exponent)
    if exponent == 0:
        return Num(1)
    if exponent == 1:
        return base
    if isinstance(base, Num):
        return Num(float(base.value) ** exponent)
    if isinstance(base, Pow):
        return pow_(base.base, base.exponent * exponent)
    return Pow(base, exponent)


def children_of(e):
    if isinstance(e, (Add, Mul)):
        return e.children
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, D):
        return (e.child,)
    if isinstance(e, Delta):
        return (e.a, e.b)
    return ()


# ---------------------------------------------------------------------------
# manipulation passes
# ---------------------------------------------------------------------------

def substitute(e, target, replacement):
    """Replace every node structurally equal to target by replacement."""
    target = as_expr(target)
    replacement = as_expr(replacement)

    def walk(n):
        if n == target:
            return replacement
        if isinstance(n, Add):
            return add(*[walk(c) for c in n.children])
        if isinstance(n, Mul):
            return mul(*[walk(c) for c in n.children])
        if isinstance(n, Pow):
            return pow_(walk(n.base), n.exponent)
        if isinstance(n, D):
            return D(n.axis, walk(n.child))
        if isinstance(n, Delta):
            return Delta(walk(n.a), walk(n.b))
        return n

    return walk(e)


def expand_fold(e):
    """Distribute products over sums and fold numeric subtrees.

    The result is a flat sum of products (positive integer powers of sums are
    expanded by repeated multiplication); evaluation-equivalent to the input.
    """
    def terms_of(n):
        # returns the expanded term list of n
        if isinstance(n, Add):
            out = []
            for c in n.children:
                out.extend(terms_of(c))
            return out
        if isinstance(n, Mul):
            prods = [[]]
            for c in n.children:
                sub = terms_of(c)
                prods = [p + [t] for p in prods for t in sub]
            return [mul(*p) for p in prods]
        if isinstance(n, Pow):
            if n.exponent >= 2 and isinstance(expand_once(n.base), Add):
                b = expand_once(n.base)
                acc = b
                for _ in range(n.exponent - 1):
                    acc = mul_expand(acc, b)
                return terms_of(acc)
            return [pow_(expand_once(n.base), n.exponent)]
        if isinstance(n, D):
            # derivative is linear: push it through the expanded child sum
            out = []
            for t in terms_of(n.child):
                nums, rest = _split_numeric(t)
                if not rest:
                    # derivative of a constant
                    continue
                out.append(mul(Num(nums), D(n.axis, mul(*rest))))
            return out if out else [Num(0)]
        return [n]

    def expand_once(n):
        return add(*terms_of(n))

    def mul_expand(a, b):
        return add(*[mul(x, y) for x in terms_of(a) for y in terms_of(b)])

    def _split_numeric(t):
        if isinstance(t, Mul):
            nums = 1
            rest = []
            for c in t.children:
                if isinstance(c, Num):
                    nums = _num_mul(nums, c.value)
                else:
                    rest.append(c)
            return nums, rest
        if isinstance(t, Num):
            return t.value, []
        return 1, [t]

    return expand_once(e)


class CanonicalForm:
    """Weighted sum of unknowns plus an unknown-free residual.

    entries is a tuple of (Unknown, coefficient Expr) with unique keys,
    sorted for determinism; evaluating to_expr() reproduces the original
    expression at any binding.
    """

    __slots__ = ("entries", "residual")

    def __init__(self, entries, residual):
        self.entries = tuple(entries)
        self.residual = residual

    def to_expr(self):
        terms = [mul(coeff, unk) for unk, coeff in self.entries]
        terms.append(self.residual)
        return add(*terms)

    def __eq__(self, other):
        return (isinstance(other, CanonicalForm)
                and self.entries == other.entries
                and self.residual == other.residual)

    def __repr__(self):
        rows = [f"({render(u)}) * ({render(c)})" for u, c in self.entries]
        rows.append(f"residual: {render(self.residual)}")
        return "\n".join(rows)


def _unknown_sort_key(u):
    return (u.field, u.l, u.m, u.pos if u.pos is not None else ())


def factorize_canonical(e):
    """Factor an expression that is degree <= 1 in Unknown nodes.

    Raises NonlinearityError when a term carries two Unknown factors (or an
    Unknown under a power or derivative); the discretized rows fed to the
    assembler are linear by construction.
    """
    expanded = expand_fold(e)
    terms = expanded.children if isinstance(expanded, Add) else (expanded,)
    coeffs = {}
    residual_terms = []
    for t in terms:
        factors = t.children if isinstance(t, Mul) else (t,)
        unknowns = []
        rest = []
        for f in factors:
            if isinstance(f, Unknown):
                unknowns.append(f)
            else:
                for node in _iter_nodes(f):
                    if isinstance(node, Unknown):
                        raise NonlinearityError(
                            f"unknown under nonlinear context: {render(f)}")
                rest.append(f)
        if len(unknowns) > 1:
            raise NonlinearityError(f"product of unknowns in term: {render(t)}")
        if not unknowns:
            residual_terms.append(t)
        else:
            key = unknowns[0]
            coeffs.setdefault(key, []).append(mul(*rest) if rest else Num(1))
    entries = [(u, add(*parts)) for u, parts in coeffs.items()]
    entries = [(u, c) for u, c in entries
               if not (isinstance(c, Num) and c.value == 0)]
    entries.sort(key=lambda uc: _unknown_sort_key(uc[0]))
    residual = add(*residual_terms) if residual_terms else Num(0)
    return CanonicalForm(entries, residual)


def _iter_nodes(e):
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(children_of(n))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(e, bindings=None, field_sampler=None, unknown_sampler=None,
             unknown_deriv_sampler=None):
    """Numerically evaluate an expression.

    bindings maps symbol names to values; field_sampler(name, pos) and
    unknown_sampler(field, l, m, pos) resolve samples;
    unknown_deriv_sampler(axis, field, l, m, pos) resolves D(axis, Unknown)
    nodes (enough for the continuous moment equations; discretized rows
    contain no derivative nodes).  Values may be numpy arrays; all operations
    broadcast.
    """
    bindings = bindings or {}

    def ev(n):
        if isinstance(n, Num):
            return n.value
        if isinstance(n, Sym):
            if n.name not in bindings:
                raise UnboundSymbolError(f"unbound symbol '{n.name}'")
            return bindings[n.name]
        if isinstance(n, FieldSample):
            if field_sampler is None:
                raise UnboundSymbolError(f"no field sampler for '{n.name}'")
            return field_sampler(n.name, n.pos)
        if isinstance(n, Unknown):
            if unknown_sampler is None:
                raise UnboundSymbolError(
                    f"no unknown sampler for '{n.field}[{n.l},{n.m}]'")
            return unknown_sampler(n.field, n.l, n.m, n.pos)
        if isinstance(n, Add):
            acc = ev(n.children[0])
            for c in n.children[1:]:
                acc = acc + ev(c)
            return acc
        if isinstance(n, Mul):
            acc = ev(n.children[0])
            for c in n.children[1:]:
                acc = acc * ev(c)
            return acc
        if isinstance(n, Pow):
            return ev(n.base) ** n.exponent
        if isinstance(n, Delta):
            return 1.0 * (ev(n.a) == ev(n.b))
        if isinstance(n, D):
            if isinstance(n.child, Unknown) and unknown_deriv_sampler is not None:
                u = n.child
                return unknown_deriv_sampler(n.axis, u.field, u.l, u.m, u.pos)
            raise CasError(
                "cannot evaluate a derivative node; discretize it first "
                "or provide unknown_deriv_sampler for D(axis, Unknown)")
        raise CasError(f"unhandled node {n!r}")

    return ev(e)


# ---------------------------------------------------------------------------
# frontends
# ---------------------------------------------------------------------------

_AXES = "xyz"


def _fmt_num(v):
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer()
                              and abs(v) < 1e15):
        return str(int(v))
    return repr(float(v))


def _fmt_off(p):
    # doubled units -> voxel units with halves
    if p % 2 == 0:
        return str(p // 2)
    return f"{p}/2"


def _fmt_pos(pos):
    return "@(" + ",".join(_fmt_off(p) for p in pos) + ")"


def render(e, frontend="pretty"):
    """Render to the documented pretty-text form or to a Python expression.

    The source frontend covers the node kinds that appear in stencil
    coefficients (numbers, symbols, field samples, +, *, ^); it emits an
    expression over `field(name, pos)` and free symbol names.
    """
    if frontend == "pretty":
        return _render_pretty(e, 0)
    if frontend == "source":
        return _render_source(e)
    raise ValueError(f"unknown frontend {frontend!r}")


# precedence levels: add=1, mul=2, pow=3, atom=4
def _render_pretty(e, parent_prec):
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        prec = 4 if (e.value >= 0) else 2
    elif isinstance(e, Sym):
        s, prec = e.name, 4
    elif isinstance(e, Unknown):
        s = f"{e.field}[{e.l},{e.m}]"
        if e.pos is not None:
            s += _fmt_pos(e.pos)
        prec = 4
    elif isinstance(e, FieldSample):
        s = e.name
        if e.pos is not None:
            s += _fmt_pos(e.pos)
        prec = 4
    elif isinstance(e, Add):
        first_neg = _negated(e.children[0])
        if first_neg is not None:
            parts = ["-" + _render_pretty(first_neg, 2)]
        else:
            parts = [_render_pretty(e.children[0], 2)]
        for c in e.children[1:]:
            neg = _negated(c)
            if neg is not None:
                parts.append(" - " + _render_pretty(neg, 2))
            else:
                parts.append(" + " + _render_pretty(c, 2))
        s, prec = "".join(parts), 1
    elif isinstance(e, Mul):
        s = "*".join(_render_pretty(c, 2) for c in e.children)
        prec = 2
    elif isinstance(e, Pow):
        s = _render_pretty(e.base, 4) + "^" + str(e.exponent)
        prec = 3
    elif isinstance(e, D):
        s = f"d{_AXES[e.axis]}({_render_pretty(e.child, 0)})"
        prec = 4
    elif isinstance(e, Delta):
        s = f"delta({_render_pretty(e.a, 0)},{_render_pretty(e.b, 0)})"
        prec = 4
    else:
        raise CasError(f"unhandled node {type(e).__name__}")
    if prec < parent_prec:
        return "(" + s + ")"
    return s


def _negated(e):
    """If e is Num(-k) or Mul with negative leading number, return |e|."""
    if isinstance(e, Num) and e.value < 0:
        return Num(-e.value)
    if isinstance(e, Mul) and isinstance(e.children[0], Num) \
            and e.children[0].value < 0:
        lead = -e.children[0].value
        rest = e.children[1:]
        if lead == 1 and len(rest) == 1:
            return rest[0]
        return mul(Num(lead), *rest)
    return None


def _render_source(e):
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, FieldSample):
        return f"field({e.name!r}, {e.pos!r})"
    if isinstance(e, Add):
        return "(" + " + ".join(_render_source(c) for c in e.children) + ")"
    if isinstance(e, Mul):
        return "(" + " * ".join(_render_source(c) for c in e.children) + ")"
    if isinstance(e, Pow):
        return f"({_render_source(e.base)} ** {e.exponent})"
    raise CasError(
        f"source frontend does not handle {type(e).__name__} nodes")


# ---------------------------------------------------------------------------
# pretty-text parser (test harness round trip)
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*^(),\[\]@])
  | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(text):
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise CasError(f"cannot tokenize at ...{text[i:i+20]!r}")
        i = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group()))
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, tokens, symbols):
        self.toks = tokens
        self.i = 0
        self.symbols = set(symbols)

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        k, v = self.toks[self.i]
        if (kind and k != kind) or (value and v != value):
            raise CasError(f"expected {kind or value}, got {v!r}")
        self.i += 1
        return v

    def parse_expr(self):
        terms = [self.parse_term()]
        while self.peek()[1] in ("+", "-"):
            op = self.toks[self.i][1]
            self.i += 1
            nxt = self.parse_term()
            terms.append(nxt if op == "+" else mul(Num(-1), nxt))
        return add(*terms) if len(terms) > 1 else terms[0]

    def parse_term(self):
        f = self.parse_factor()
        factors = [f]
        while self.peek()[1] == "*":
            self.i += 1
            factors.append(self.parse_factor())
        return mul(*factors) if len(factors) > 1 else factors[0]

    def parse_factor(self):
        a = self.parse_atom()
        if self.peek()[1] == "^":
            self.i += 1
            sign = 1
            if self.peek()[1] == "-":
                self.i += 1
                sign = -1
            k = int(self.take("num"))
            return pow_(a, sign * k)
        return a

    def parse_atom(self):
        kind, val = self.peek()
        if val == "-":
            self.i += 1
            return mul(Num(-1), self.parse_factor())
        if val == "(":
            self.i += 1
            e = self.parse_expr()
            self.take(value=")")
            return e
        if kind == "num":
            self.i += 1
            if "." in val or "e" in val or "E" in val:
                return Num(float(val))
            return Num(int(val))
        if kind == "name":
            self.i += 1
            if val in ("dx", "dy", "dz") and self.peek()[1] == "(":
                self.i += 1
                e = self.parse_expr()
                self.take(value=")")
                return D("xyz".index(val[1]), e)
            if val == "delta" and self.peek()[1] == "(":
                self.i += 1
                a = self.parse_expr()
                self.take(value=",")
                b = self.parse_expr()
                self.take(value=")")
                return Delta(a, b)
            if self.peek()[1] == "[":
                self.i += 1
                l = self._int()
                self.take(value=",")
                m = self._int()
                self.take(value="]")
                pos = self._offsets()
                return Unknown(val, l, m, pos)
            if val in self.symbols:
                return Sym(val)
            pos = self._offsets()
            return FieldSample(val, pos)
        raise CasError(f"unexpected token {val!r}")

    def _int(self):
        sign = 1
        if self.peek()[1] == "-":
            self.i += 1
            sign = -1
        return sign * int(self.take("num"))

    def _offsets(self):
        if self.peek()[1] != "@":
            return None
        self.i += 1
        self.take(value="(")
        offs = []
        while True:
            # parse_pretty pre-normalizes 'k/2' forms to doubled ints
            offs.append(self._int())
            nxt = self.peek()[1]
            if nxt == ",":
                self.i += 1
                continue
            if nxt == ")":
                self.i += 1
                break
        return tuple(offs)


def parse_pretty(text, symbols=("h",)):
    """Parse the pretty-text form back into an Expr tree."""
    # offsets like '1/2' carry a slash; normalize them to doubled units
    # before tokenizing: inside '@(...)' groups, 'a/2' -> odd doubled int,
    # plain 'a' -> even doubled int 2a.
    def fix(match):
        inner = match.group(1)
        parts = []
        for p in inner.split(","):
            p = p.strip()
            if p.endswith("/2"):
                parts.append(str(int(p[:-2])))
            else:
                parts.append(str(2 * int(p)))
        return "@(" + ",".join(parts) + ")"

    text = re.sub(r"@\(([^)]*)\)", fix, text)
    p = _Parser(_tokenize(text), symbols)
    e = p.parse_expr()
    p.take("end")
    return e
