"""Immutable symbolic expressions over jet coordinates.

Expressions are built from exact rational constants, coordinates, sums,
products, rational powers and the elementary kernels exp/log/sqrt/sin/cos.
All constructors canonicalize: sums and products are flattened and sorted
under a fixed total order, like terms are merged, and a small rewrite set
(exp(a)*exp(b) -> exp(a+b), exp(a)^q -> exp(q*a), log(exp(a)) -> a,
exp(0) -> 1, log(1) -> 0) is applied.  Anything an operation returns is
already in canonical form.
"""

from __future__ import annotations

import math
import threading
from fractions import Fraction

__all__ = [
    "Coordinate",
    "Expr",
    "Rat",
    "Coord",
    "Sum",
    "Prod",
    "Pow",
    "Call",
    "ExprError",
    "EvalDomainError",
    "UnassignedCoordinateError",
    "rat",
    "coord",
    "add",
    "sub",
    "mul",
    "div",
    "pw",
    "call",
    "neg",
    "normalize",
    "derive",
    "evaluate",
    "substitute",
    "free_coordinates",
    "ZERO",
    "ONE",
    "MINUS_ONE",
    "HALF",
]

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos")
_FN_RANK = {name: i for i, name in enumerate(FUNCTIONS)}


class ExprError(Exception):
    """Malformed expression construction (e.g. division by exact zero)."""


class EvalDomainError(ExprError):
    """Numeric evaluation left the function's domain."""


class UnassignedCoordinateError(ExprError):
    """A free coordinate had no value at evaluation time."""


class Coordinate:
    """A jet coordinate: x^i, u, or a derivative u_I (multi-index sorted).

    Mixed multi-indices (distinct entries) are legal transients; only pure
    ones survive on the restricted equation manifold.
    """

    __slots__ = ("kind", "index", "_key", "_hash")
    _intern: dict = {}
    _intern_lock = threading.Lock()

    def __new__(cls, kind, index):
        key = (kind, index)
        hit = cls._intern.get(key)
        if hit is not None:
            return hit
        with cls._intern_lock:
            hit = cls._intern.get(key)
            if hit is not None:
                return hit
            self = object.__new__(cls)
            self.kind = kind
            self.index = index
            if kind == "x":
                self._key = (0, (index,))
            else:
                self._key = (1, (len(index),) + tuple(index))
            self._hash = hash(key)
            cls._intern[key] = self
            return self

    @staticmethod
    def x(i: int) -> "Coordinate":
        return Coordinate("x", i)

    @staticmethod
    def u(indices=()) -> "Coordinate":
        idx = tuple(sorted(indices))
        if any(i < 1 for i in idx):
            raise ExprError("derivative indices start at 1")
        return Coordinate("u", idx)

    @property
    def order(self) -> int:
        return 0 if self.kind == "x" else len(self.index)

    @property
    def is_pure(self) -> bool:
        if self.kind == "x":
            return True
        return len(set(self.index)) <= 1

    def order_key(self):
        return self._key

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __repr__(self):
        return self.name()

    def name(self) -> str:
        if self.kind == "x":
            return f"x{self.index}"
        if not self.index:
            return "u"
        return "u" + "".join(str(i) for i in self.index)


class Expr:
    __slots__ = ("_hash", "_key")

    def __add__(self, other):
        return add(self, _as_expr(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_expr(other)))

    def __rsub__(self, other):
        return add(_as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_expr(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return div(_as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, e):
        return pw(self, Fraction(e))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        h = getattr(self, "_hash", None)
        if h is None:
            h = hash(self.key())
            self._hash = h
        return h

    def key(self):
        k = getattr(self, "_key", None)
        if k is None:
            k = self._make_key()
            self._key = k
        return k

    def __repr__(self):
        from .parser import unparse

        return unparse(self)

    @property
    def is_zero_literal(self) -> bool:
        return isinstance(self, Rat) and self.value == 0


class Rat(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Fraction):
        self.value = value

    def _make_key(self):
        return (0, (self.value.numerator, self.value.denominator))


class Coord(Expr):
    __slots__ = ("c",)

    def __init__(self, c: Coordinate):
        self.c = c

    def _make_key(self):
        return (1, self.c.order_key())


class Call(Expr):
    __slots__ = ("fn", "arg")

    def __init__(self, fn: str, arg: Expr):
        self.fn = fn
        self.arg = arg

    def _make_key(self):
        return (2, _FN_RANK[self.fn], self.arg.key())


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: Fraction):
        self.base = base
        self.exp = exp

    def _make_key(self):
        return (3, self.base.key(), (self.exp.numerator, self.exp.denominator))


class Prod(Expr):
    """Canonical product: optional leading rational, then sorted factors."""

    __slots__ = ("factors",)

    def __init__(self, factors):
        self.factors = tuple(factors)

    def _make_key(self):
        return (4, tuple(f.key() for f in self.factors))


class Sum(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        self.terms = tuple(terms)

    def _make_key(self):
        return (5, tuple(t.key() for t in self.terms))


ZERO = Rat(Fraction(0))
ONE = Rat(Fraction(1))
MINUS_ONE = Rat(Fraction(-1))
HALF = Rat(Fraction(1, 2))


def _as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return rat(v)
    raise TypeError(f"cannot coerce {v!r} to Expr")


def rat(q) -> Rat:
    q = Fraction(q)
    if q == 0:
        return ZERO
    if q == 1:
        return ONE
    if q == -1:
        return MINUS_ONE
    return Rat(q)


def coord(c: Coordinate) -> Coord:
    return Coord(c)


def x(i: int) -> Coord:
    return Coord(Coordinate.x(i))


def u(*indices: int) -> Coord:
    return Coord(Coordinate.u(indices))


def _split_term(e: Expr):
    """Split a canonical non-Sum expression into (coefficient, factor tuple)."""
    if isinstance(e, Rat):
        return e.value, ()
    if isinstance(e, Prod):
        if isinstance(e.factors[0], Rat):
            return e.factors[0].value, e.factors[1:]
        return Fraction(1), e.factors
    return Fraction(1), (e,)


def _make_term(coeff: Fraction, factors) -> Expr:
    if coeff == 0:
        return ZERO
    if not factors:
        return rat(coeff)
    if coeff == 1 and len(factors) == 1:
        return factors[0]
    if coeff == 1:
        return Prod(factors)
    return Prod((rat(coeff),) + tuple(factors))


def add(*parts) -> Expr:
    """Canonical sum: flatten, merge like terms, sort, drop zeros."""
    const = Fraction(0)
    buckets: dict = {}
    stack = [_as_expr(p) for p in reversed(parts)]
    while stack:
        e = stack.pop()
        if isinstance(e, Sum):
            stack.extend(reversed(e.terms))
            continue
        if isinstance(e, Rat):
            const += e.value
            continue
        coeff, factors = _split_term(e)
        k = tuple(f.key() for f in factors)
        if k in buckets:
            c0, _ = buckets[k]
            buckets[k] = (c0 + coeff, factors)
        else:
            buckets[k] = (coeff, factors)
    terms = [
        _make_term(c, f) for _, (c, f) in sorted(buckets.items()) if c != 0
    ]
    if const != 0:
        terms.insert(0, rat(const))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(terms)


def sub(a, b) -> Expr:
    return add(_as_expr(a), neg(_as_expr(b)))


def neg(e) -> Expr:
    return mul(MINUS_ONE, _as_expr(e))


def mul(*parts) -> Expr:
    """Canonical product: flatten, merge powers of equal bases, sort."""
    coeff = Fraction(1)
    powers: dict = {}
    exp_arg_parts = []  # merged argument of a single exp(...) factor
    stack = [_as_expr(p) for p in reversed(parts)]
    while stack:
        e = stack.pop()
        if isinstance(e, Prod):
            stack.extend(reversed(e.factors))
            continue
        if isinstance(e, Rat):
            if e.value == 0:
                return ZERO
            coeff *= e.value
            continue
        if isinstance(e, Pow):
            base, expo = e.base, e.exp
        else:
            base, expo = e, Fraction(1)
        if isinstance(base, Call) and base.fn == "exp":
            exp_arg_parts.append(mul(rat(expo), base.arg))
            continue
        k = base.key()
        if k in powers:
            b, e0 = powers[k]
            powers[k] = (b, e0 + expo)
        else:
            powers[k] = (base, expo)
    merged_exp = None
    if exp_arg_parts:
        merged_exp = call("exp", add(*exp_arg_parts))
        if isinstance(merged_exp, Call):
            powers[merged_exp.key()] = (merged_exp, Fraction(1))
            merged_exp = None
        elif isinstance(merged_exp, Rat) and merged_exp.value == 1:
            merged_exp = None
    factors = []
    for _, (base, expo) in sorted(powers.items()):
        if expo == 0:
            continue
        f = pw(base, expo)
        if isinstance(f, Rat):
            if f.value == 0:
                return ZERO
            coeff *= f.value
        else:
            c2, fs2 = _split_term(f)
            coeff *= c2
            factors.extend(fs2)
    factors.sort(key=lambda f: f.key())
    out = _make_term(coeff, tuple(factors))
    if merged_exp is not None:
        # exp(log(g)) collapsed to a general expression: fold it back in
        return mul(out, merged_exp)
    return out


def div(a, b) -> Expr:
    b = _as_expr(b)
    if isinstance(b, Rat):
        if b.value == 0:
            raise ExprError("division by zero")
        return mul(_as_expr(a), rat(Fraction(1) / b.value))
    return mul(_as_expr(a), pw(b, Fraction(-1)))


def _rat_root(q: Fraction, expo: Fraction):
    """Exact value of q**expo if it is rational, else None."""
    if expo.denominator == 1:
        n = expo.numerator
        if q == 0 and n < 0:
            raise ExprError("division by zero: 0 raised to a negative power")
        return q**n
    if q < 0:
        return None

    def iroot(m: int, r: int):
        if m in (0, 1):
            return m
        lo, hi = 0, 1 << ((m.bit_length() // r) + 2)
        while lo < hi:
            mid = (lo + hi) // 2
            if mid**r <= m:
                lo = mid + 1
            else:
                hi = mid
        root = lo - 1
        return root if root**r == m else None
    rn = iroot(q.numerator, expo.denominator)
    rd = iroot(q.denominator, expo.denominator)
    if rn is None or rd is None:
        return None
    return Fraction(rn, rd) ** expo.numerator


def pw(base, expo) -> Expr:
    base = _as_expr(base)
    expo = Fraction(expo)
    if expo == 0:
        return ONE
    if expo == 1:
        return base
    if isinstance(base, Rat):
        exact = _rat_root(base.value, expo)
        if exact is not None:
            return rat(exact)
        return Pow(base, expo)
    if isinstance(base, Pow):
        return pw(base.base, base.exp * expo)
    if isinstance(base, Call) and base.fn == "exp":
        return call("exp", mul(rat(expo), base.arg))
    if isinstance(base, Prod) and expo.denominator == 1:
        return mul(*[pw(f, expo) for f in base.factors])
    return Pow(base, expo)


def call(fn: str, arg) -> Expr:
    arg = _as_expr(arg)
    if fn not in FUNCTIONS:
        raise ExprError(f"unknown function {fn!r}")
    if fn == "sqrt":
        return pw(arg, Fraction(1, 2))
    if fn == "exp":
        if arg.is_zero_literal:
            return ONE
        if isinstance(arg, Call) and arg.fn == "log":
            return arg.arg
    if fn == "log":
        if isinstance(arg, Rat) and arg.value == 1:
            return ZERO
        if isinstance(arg, Call) and arg.fn == "exp":
            return arg.arg
    return Call(fn, arg)


def normalize(e: Expr) -> Expr:
    """Rebuild through the canonicalizing constructors (idempotent)."""
    if isinstance(e, (Rat, Coord)):
        return e
    if isinstance(e, Sum):
        return add(*[normalize(t) for t in e.terms])
    if isinstance(e, Prod):
        return mul(*[normalize(f) for f in e.factors])
    if isinstance(e, Pow):
        return pw(normalize(e.base), e.exp)
    if isinstance(e, Call):
        return call(e.fn, normalize(e.arg))
    raise TypeError(f"not an Expr: {e!r}")


def derive(e: Expr, c: Coordinate) -> Expr:
    """Exact partial derivative; coordinates are independent symbols."""
    if isinstance(e, Rat):
        return ZERO
    if isinstance(e, Coord):
        return ONE if e.c is c else ZERO
    if isinstance(e, Sum):
        return add(*[derive(t, c) for t in e.terms])
    if isinstance(e, Prod):
        terms = []
        for i, f in enumerate(e.factors):
            df = derive(f, c)
            if df.is_zero_literal:
                continue
            rest = e.factors[:i] + e.factors[i + 1:]
            terms.append(mul(df, *rest))
        return add(*terms) if terms else ZERO
    if isinstance(e, Pow):
        db = derive(e.base, c)
        if db.is_zero_literal:
            return ZERO
        return mul(rat(e.exp), pw(e.base, e.exp - 1), db)
    if isinstance(e, Call):
        da = derive(e.arg, c)
        if da.is_zero_literal:
            return ZERO
        if e.fn == "exp":
            outer = e
        elif e.fn == "log":
            outer = pw(e.arg, Fraction(-1))
        elif e.fn == "sin":
            outer = call("cos", e.arg)
        elif e.fn == "cos":
            outer = neg(call("sin", e.arg))
        else:  # pragma: no cover - sqrt never survives canonicalization
            raise ExprError(f"no derivative rule for {e.fn}")
        return mul(outer, da)
    raise TypeError(f"not an Expr: {e!r}")


def free_coordinates(e: Expr) -> frozenset:
    out = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Coord):
            out.add(n.c)
        elif isinstance(n, Sum):
            stack.extend(n.terms)
        elif isinstance(n, Prod):
            stack.extend(n.factors)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, Call):
            stack.append(n.arg)
    return frozenset(out)


def substitute(e: Expr, mapping) -> Expr:
    """Replace coordinates by expressions; result is canonical."""
    if isinstance(e, Rat):
        return e
    if isinstance(e, Coord):
        return mapping.get(e.c, e)
    if isinstance(e, Sum):
        return add(*[substitute(t, mapping) for t in e.terms])
    if isinstance(e, Prod):
        return mul(*[substitute(f, mapping) for f in e.factors])
    if isinstance(e, Pow):
        return pw(substitute(e.base, mapping), e.exp)
    if isinstance(e, Call):
        return call(e.fn, substitute(e.arg, mapping))
    raise TypeError(f"not an Expr: {e!r}")


def evaluate(e: Expr, point) -> float:
    """IEEE double evaluation; raises on domain errors and missing values."""
    if isinstance(e, Rat):
        return float(e.value)
    if isinstance(e, Coord):
        try:
            return float(point[e.c])
        except KeyError:
            raise UnassignedCoordinateError(
                f"coordinate {e.c.name()} has no assigned value"
            ) from None
    if isinstance(e, Sum):
        return math.fsum(evaluate(t, point) for t in e.terms)
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, point)
        return out
    if isinstance(e, Pow):
        b = evaluate(e.base, point)
        if e.exp.denominator == 1:
            n = e.exp.numerator
            if b == 0.0 and n < 0:
                raise EvalDomainError("division by zero")
            return b**n
        if b < 0.0:
            raise EvalDomainError("fractional power of a negative base")
        if b == 0.0 and e.exp < 0:
            raise EvalDomainError("division by zero")
        return b ** float(e.exp)
    if isinstance(e, Call):
        a = evaluate(e.arg, point)
        if e.fn == "exp":
            try:
                return math.exp(a)
            except OverflowError:
                raise EvalDomainError("exp overflow") from None
        if e.fn == "log":
            if a <= 0.0:
                raise EvalDomainError("log of a non-positive argument")
            return math.log(a)
        if e.fn == "sin":
            return math.sin(a)
        if e.fn == "cos":
            return math.cos(a)
        raise ExprError(f"no evaluation rule for {e.fn}")
    raise TypeError(f"not an Expr: {e!r}")


def magnitude(e: Expr, point) -> float:
    """Cancellation-free size estimate used for relative tolerances."""
    if isinstance(e, Sum):
        return math.fsum(abs(magnitude(t, point)) for t in e.terms)
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out *= abs(magnitude(f, point))
        return out
    return abs(evaluate(e, point))
