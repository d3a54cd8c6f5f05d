"""Bi-graded exterior algebra over the coordinate coframe on the equation
manifold: wedge products, the split differentials d_H and d_V, projected
Lie derivatives along total vector fields, and interior products.

A type (r,s) form is a map from wedge monomials to coefficients, each
monomial holding r horizontal legs (sigma_i, ascending) and s contact legs
(theta and theta_{i^k}, sorted by branch then order).  Mixed contact
indices never appear as legs; the structure equations rewrite them through
the system into the pure basis.
"""

from __future__ import annotations

import logging

from . import expr as ex
from .expr import Coordinate, Expr
from .jets import (
    OrderBudgetError,
    SystemSpec,
    TotalVectorField,
    _reduce_coordinate,
    reduce as jet_reduce,
    total_derivative,
)

__all__ = [
    "BiForm",
    "CoordContactDual",
    "wedge",
    "d_H",
    "d_V",
    "lie",
    "interior",
    "d_V_function",
    "THETA",
]

log = logging.getLogger("vbx.forms")

# Contact leg ids: (0, 0) is theta itself, (i, k) with k >= 1 is theta_{i^k}.
THETA = (0, 0)


def _leg_rank(leg):
    if leg[0] == "h":
        return (0, leg[1], 0)
    b, k = leg[1]
    return (1, b, k)


def _sort_sign(legs):
    """Sign of sorting a 1-form leg sequence; None when a leg repeats."""
    ranked = [_leg_rank(l) for l in legs]
    if len(set(ranked)) != len(ranked):
        return None, ()
    sign = 1
    order = list(range(len(legs)))
    # insertion sort, counting swaps (small sequences)
    for i in range(1, len(order)):
        j = i
        while j > 0 and ranked[order[j - 1]] > ranked[order[j]]:
            order[j - 1], order[j] = order[j], order[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(order)


class CoordContactDual:
    """Vertical vector field dual to a coordinate contact basis form."""

    __slots__ = ("leg",)

    def __init__(self, branch: int = 0, k: int = 0):
        self.leg = (branch, k)

    def __repr__(self):
        b, k = self.leg
        return "d/d(th)" if (b, k) == THETA else f"d/d(th:{b}^{k})"


class BiForm:
    """A type (r,s) form with canonical monomial keys and Expr coefficients."""

    __slots__ = ("n", "r", "s", "terms")

    def __init__(self, n: int, r: int, s: int, terms=None):
        self.n = n
        self.r = r
        self.s = s
        self.terms = {}
        if terms:
            for mono, c in terms.items():
                if not c.is_zero_literal:
                    self.terms[mono] = c

    # -- constructors -------------------------------------------------------
    @staticmethod
    def zero(n: int, r: int = 0, s: int = 0) -> "BiForm":
        return BiForm(n, r, s)

    @staticmethod
    def function(f: Expr, n: int) -> "BiForm":
        return BiForm(n, 0, 0, {((), ()): f})

    @staticmethod
    def sigma(i: int, n: int) -> "BiForm":
        return BiForm(n, 1, 0, {((i,), ()): ex.ONE})

    @staticmethod
    def theta(n: int, branch: int = 0, k: int = 0) -> "BiForm":
        return BiForm(n, 0, 1, {((), ((branch, k),)): ex.ONE})

    # -- basics -------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, hlegs, clegs) -> Expr:
        return self.terms.get((tuple(hlegs), tuple(clegs)), ex.ZERO)

    def items(self):
        return sorted(self.terms.items())

    def __add__(self, other: "BiForm") -> "BiForm":
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        if (self.r, self.s) != (other.r, other.s):
            raise ValueError("cannot add forms of different bidegree")
        terms = dict(self.terms)
        for mono, c in other.terms.items():
            s = ex.add(terms.get(mono, ex.ZERO), c)
            if s.is_zero_literal:
                terms.pop(mono, None)
            else:
                terms[mono] = s
        return BiForm(self.n, self.r, self.s, terms)

    def __sub__(self, other: "BiForm") -> "BiForm":
        return self + other.scale(ex.MINUS_ONE)

    def scale(self, f: Expr) -> "BiForm":
        if f.is_zero_literal:
            return BiForm.zero(self.n, self.r, self.s)
        return BiForm(
            self.n, self.r, self.s,
            {m: ex.mul(f, c) for m, c in self.terms.items()},
        )

    def map_coefficients(self, fn) -> "BiForm":
        return BiForm(self.n, self.r, self.s, {m: fn(c) for m, c in self.terms.items()})

    def reduce_coefficients(self, sys: SystemSpec) -> "BiForm":
        return self.map_coefficients(lambda c: jet_reduce(c, sys))

    def coordinate_order(self) -> int:
        """Highest jet order among legs and coefficients."""
        out = 0
        for (h, c), coeff in self.terms.items():
            for (_, k) in c:
                out = max(out, k)
            for co in ex.free_coordinates(coeff):
                out = max(out, co.order)
        return out

    def __repr__(self):
        if self.is_zero:
            return f"0[({self.r},{self.s})]"
        bits = []
        for (h, c), coeff in self.items():
            legs = [f"s{i}" for i in h] + [
                "th" if leg == THETA else f"th:{leg[0]}^{leg[1]}" for leg in c
            ]
            bits.append(f"({coeff!r})*" + "^".join(legs))
        return " + ".join(bits)

    # -- serialization ------------------------------------------------------
    def to_json(self):
        out = []
        for (h, c), coeff in self.items():
            legs = [f"s{i}" for i in h] + [
                "th" if leg == THETA else f"th:{leg[0]}^{leg[1]}" for leg in c
            ]
            out.append({"monomial": legs, "coeff": repr(coeff)})
        return out

    @staticmethod
    def from_json(data, n: int, r=None, s=None) -> "BiForm":
        from .parser import parse

        terms = {}
        rr, ss = r, s
        for item in data:
            h, c = [], []
            for leg in item["monomial"]:
                if leg.startswith("s"):
                    h.append(int(leg[1:]))
                elif leg == "th":
                    c.append(THETA)
                else:
                    body = leg.split(":", 1)[1]
                    b, k = body.split("^")
                    c.append((int(b), int(k)))
            if rr is None:
                rr, ss = len(h), len(c)
            elif (len(h), len(c)) != (rr, ss):
                raise ValueError("mixed bidegrees in serialized form")
            coeff = parse(item["coeff"], n)
            legs = [("h", i) for i in h] + [("c", leg) for leg in c]
            sign, order = _sort_sign(legs)
            if sign is None:
                continue
            sorted_legs = [legs[i] for i in order]
            hh = tuple(l[1] for l in sorted_legs if l[0] == "h")
            cc = tuple(l[1] for l in sorted_legs if l[0] == "c")
            key = (hh, cc)
            coeff = ex.mul(ex.rat(sign), coeff)
            terms[key] = ex.add(terms.get(key, ex.ZERO), coeff)
        return BiForm(n, rr or 0, ss or 0, terms)


def wedge(a: BiForm, b: BiForm) -> BiForm:
    """Graded exterior product; horizontal overflow collapses to zero."""
    n = a.n
    r, s = a.r + b.r, a.s + b.s
    if r > n:
        log.debug("horizontal degree overflow (%d,%d)^(%d,%d); result is 0",
                  a.r, a.s, b.r, b.s)
        return BiForm.zero(n, min(r, n), s)
    terms: dict = {}
    for (h1, c1), f1 in a.terms.items():
        for (h2, c2), f2 in b.terms.items():
            legs = (
                [("h", i) for i in h1] + [("c", l) for l in c1]
                + [("h", i) for i in h2] + [("c", l) for l in c2]
            )
            sign, order = _sort_sign(legs)
            if sign is None:
                continue
            sorted_legs = [legs[i] for i in order]
            hh = tuple(l[1] for l in sorted_legs if l[0] == "h")
            cc = tuple(l[1] for l in sorted_legs if l[0] == "c")
            coeff = ex.mul(ex.rat(sign), f1, f2)
            key = (hh, cc)
            prev = terms.get(key)
            coeff = coeff if prev is None else ex.add(prev, coeff)
            if coeff.is_zero_literal:
                terms.pop(key, None)
            else:
                terms[key] = coeff
    return BiForm(n, r, s, terms)


def wedge_all(*forms: BiForm) -> BiForm:
    out = forms[0]
    for f in forms[1:]:
        out = wedge(out, f)
    return out


def d_V_function(f: Expr, n: int) -> BiForm:
    """d_V of a function on the restricted manifold as a (0,1) form."""
    terms = {}
    for c in ex.free_coordinates(f):
        if c.kind != "u":
            continue
        if not c.is_pure:
            raise ValueError(f"coefficient not reduced: contains {c.name()}")
        df = ex.derive(f, c)
        if df.is_zero_literal:
            continue
        leg = THETA if not c.index else (c.index[0], len(c.index))
        terms[((), (leg,))] = df
    return BiForm(n, 0, 1, terms)


def _bump_leg(sys: SystemSpec, leg, j: int) -> BiForm:
    """X_j applied to a contact basis leg, expanded in the pure basis."""
    b, k = leg
    if leg == THETA:
        return BiForm.theta(sys.n, j, 1)
    if b == j:
        if k + 1 > sys.order_budget:
            raise OrderBudgetError(
                f"contact order {k + 1} exceeds budget {sys.order_budget}"
            )
        return BiForm.theta(sys.n, b, k + 1)
    mixed = Coordinate.u((b,) * k + (j,))
    return d_V_function(_reduce_coordinate(sys, mixed), sys.n)


def _monomial_form(n: int, hlegs, clegs) -> BiForm:
    return BiForm(n, len(hlegs), len(clegs), {(tuple(hlegs), tuple(clegs)): ex.ONE})


def d_H(omega: BiForm, sys: SystemSpec) -> BiForm:
    """Horizontal differential via the coframe structure equations."""
    n = omega.n
    if omega.r >= n:
        return BiForm.zero(n, n, omega.s)
    out = BiForm.zero(n, omega.r + 1, omega.s)
    for (h, c), coeff in omega.terms.items():
        mono = _monomial_form(n, h, c)
        # d_H(coefficient) wedge monomial
        for i in range(1, n + 1):
            dc = total_derivative(coeff, TotalVectorField(i), sys)
            if dc.is_zero_literal:
                continue
            out = out + wedge(BiForm.sigma(i, n), mono).scale(dc)
        # coefficient * d_H(monomial): Leibniz over the contact legs
        for t, leg in enumerate(c):
            sign = ex.rat((-1) ** (len(h) + t))
            prefix = _monomial_form(n, h, c[:t])
            suffix = _monomial_form(n, (), c[t + 1:])
            for j in range(1, n + 1):
                lam = _bump_leg(sys, leg, j)
                piece = wedge_all(prefix, BiForm.sigma(j, n), lam, suffix)
                out = out + piece.scale(ex.mul(sign, coeff))
    return out


def d_V(omega: BiForm, sys: SystemSpec | None = None) -> BiForm:
    """Vertical differential: d_V of coefficients only (basis is d_V-closed)."""
    n = omega.n
    out = BiForm.zero(n, omega.r, omega.s + 1)
    for (h, c), coeff in omega.terms.items():
        dv = d_V_function(coeff, n)
        if dv.is_zero:
            continue
        out = out + wedge(dv, _monomial_form(n, h, c))
    return out


def interior(V, omega: BiForm, coframe=None) -> BiForm:
    """Interior product: antiderivation of degree -1.

    Total fields pair with horizontal legs, coordinate-contact duals with
    contact legs.  Laplace-coframe duals (U, V_k^l) are dispatched through
    the attached adapted coframe.
    """
    n = omega.n
    if isinstance(V, TotalVectorField):
        out = BiForm.zero(n, max(omega.r - 1, 0), omega.s)
        for (h, c), coeff in omega.terms.items():
            for t, i in enumerate(h):
                if i != V.index:
                    continue
                sign = ex.rat((-1) ** t)
                f = coeff if V.factor is None else ex.mul(V.factor, coeff)
                key = (h[:t] + h[t + 1:], c)
                piece = BiForm(n, omega.r - 1, omega.s, {key: ex.mul(sign, f)})
                out = out + piece
        return out
    if isinstance(V, CoordContactDual):
        out = BiForm.zero(n, omega.r, max(omega.s - 1, 0))
        for (h, c), coeff in omega.terms.items():
            for t, leg in enumerate(c):
                if leg != V.leg:
                    continue
                sign = ex.rat((-1) ** (len(h) + t))
                key = (h, c[:t] + c[t + 1:])
                piece = BiForm(n, omega.r, omega.s - 1, {key: ex.mul(sign, coeff)})
                out = out + piece
        return out
    # Laplace-coframe duals carry their own coframe reference
    from .coframe import AdaptedDual

    if isinstance(V, AdaptedDual):
        cf = coframe if coframe is not None else V.coframe
        return cf.interior_dual(V, omega)
    raise TypeError(f"unsupported vector field {V!r}")


def lie(X: TotalVectorField, omega: BiForm, sys: SystemSpec) -> BiForm:
    """Projected Lie derivative along a total vector field.

    Acts as a degree-zero derivation: total derivative on coefficients,
    structure-equation bump on contact legs, zero on horizontal legs.  A
    rescaling factor f contributes the projected d_H f wedge (X interior)
    correction on horizontal-bearing forms.
    """
    n = omega.n
    plain = TotalVectorField(X.index)
    out = BiForm.zero(n, omega.r, omega.s)
    for (h, c), coeff in omega.terms.items():
        dc = total_derivative(coeff, plain, sys)
        if not dc.is_zero_literal:
            out = out + BiForm(n, omega.r, omega.s, {(h, c): dc})
        for t, leg in enumerate(c):
            lam = _bump_leg(sys, leg, X.index)
            prefix = _monomial_form(n, h, c[:t])
            suffix = _monomial_form(n, (), c[t + 1:])
            out = out + wedge_all(prefix, lam, suffix).scale(coeff)
    if X.factor is None:
        return out
    out = out.scale(X.factor)
    inner = interior(plain, omega)
    if not inner.is_zero:
        for i in range(1, n + 1):
            df = total_derivative(X.factor, TotalVectorField(i), sys)
            if df.is_zero_literal:
                continue
            out = out + wedge(BiForm.sigma(i, n), inner).scale(df)
    return out
