"""Expression grammar: parsing and deterministic printing.

Grammar (UTF-8):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-'* atom ('^' signed-rational)?
    atom   := rational | symbol | fn '(' expr ')' | '(' expr ')'

Symbols are x1..xn, u, and u followed by 1-12 digits in 1..n forming a
sorted multi-index (u12 means u_{12}); fn is one of exp/log/sqrt/sin/cos.
Exponents are signed rationals, optionally parenthesized: u^-2, u^(1/2).
"""

from __future__ import annotations

from fractions import Fraction

from . import expr as ex
from .expr import Coordinate, Expr

__all__ = ["parse", "unparse", "ParseError"]


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class _Scanner:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.pos = 0

    def error(self, msg: str, offset=None):
        raise ParseError(msg, self.pos if offset is None else offset)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def integer(self) -> int:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start:
            self.error("expected a number")
        lit = self.text[start:self.pos]
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            self.error("decimal literals are not allowed; use exact rationals", start)
        return int(lit)

    def signed_rational(self) -> Fraction:
        self.skip_ws()
        if self.peek() == "(":
            self.take("(")
            q = self.signed_rational()
            self.take(")")
            return q
        sign = 1
        if self.peek() == "-":
            self.take("-")
            sign = -1
        num = self.integer()
        if self.peek() == "/":
            self.take("/")
            den = self.integer()
            if den == 0:
                self.error("zero denominator in exponent")
            return Fraction(sign * num, den)
        return Fraction(sign * num)

    def symbol(self) -> Expr:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        name = self.text[start:self.pos]
        if name in ex.FUNCTIONS:
            self.take("(")
            arg = self.expr()
            self.take(")")
            return ex.call(name, arg)
        if name == "u":
            return ex.coord(Coordinate.u())
        if name.startswith("u") and name[1:].isdigit():
            digits = name[1:]
            if len(digits) > 12:
                self.error("derivative multi-index longer than 12", start)
            idx = [int(d) for d in digits]
            for d in idx:
                if d < 1 or d > self.n:
                    self.error(
                        f"derivative index {d} outside 1..{self.n} in {name!r}",
                        start,
                    )
            if list(idx) != sorted(idx):
                hint = "u" + "".join(str(d) for d in sorted(idx))
                self.error(
                    f"unsorted derivative multi-index {name!r}; write {hint!r}",
                    start,
                )
            return ex.coord(Coordinate.u(idx))
        if name.startswith("x") and name[1:].isdigit():
            i = int(name[1:])
            if i < 1 or i > self.n:
                self.error(f"independent variable {name!r} outside x1..x{self.n}", start)
            return ex.coord(Coordinate.x(i))
        self.error(f"unknown symbol {name!r}", start)

    def atom(self) -> Expr:
        ch = self.peek()
        if ch == "(":
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if ch.isdigit():
            return ex.rat(self.integer())
        if ch.isalpha():
            return self.symbol()
        self.error("expected a number, symbol, function call, or '('")

    def factor(self) -> Expr:
        negations = 0
        while self.peek() == "-":
            self.take("-")
            negations += 1
        e = self.atom()
        if self.peek() == "^":
            self.take("^")
            e = ex.pw(e, self.signed_rational())
        return ex.neg(e) if negations % 2 else e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            ch = self.peek()
            if ch == "*":
                self.take("*")
                e = ex.mul(e, self.factor())
            elif ch == "/":
                self.take("/")
                d = self.factor()
                if isinstance(d, ex.Rat) and d.value == 0:
                    self.error("division by zero")
                e = ex.div(e, d)
            else:
                return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            ch = self.peek()
            if ch == "+":
                self.take("+")
                e = ex.add(e, self.term())
            elif ch in ("-", "−"):
                self.pos += 1
                e = ex.sub(e, self.term())
            else:
                return e


def parse(text: str, n: int = 3) -> Expr:
    """Parse an expression string into canonical form."""
    text = text.replace("−", "-")
    sc = _Scanner(text, n)
    e = sc.expr()
    sc.skip_ws()
    if sc.pos != len(text):
        sc.error(f"unexpected trailing input {text[sc.pos:]!r}")
    return e


def _frac_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _print_base(e: Expr) -> str:
    if isinstance(e, (ex.Sum, ex.Prod)):
        return "(" + unparse(e) + ")"
    if isinstance(e, ex.Rat) and (e.value < 0 or e.value.denominator != 1):
        return "(" + _frac_str(e.value) + ")"
    return unparse(e)


def _print_pow(base: Expr, expo: Fraction) -> str:
    if expo == 1:
        return _print_base(base)
    if expo == Fraction(1, 2):
        return f"sqrt({unparse(base)})"
    if expo.denominator == 1 and expo > 0:
        return f"{_print_base(base)}^{expo}"
    return f"{_print_base(base)}^({_frac_str(expo)})"


def _print_term(coeff: Fraction, factors) -> str:
    num, den = [], []
    for f in factors:
        if isinstance(f, ex.Pow):
            base, expo = f.base, f.exp
        else:
            base, expo = f, Fraction(1)
        if expo < 0 and -expo != Fraction(1, 2):
            den.append(_print_pow(base, -expo))
        else:
            num.append(_print_pow(base, expo))
    if abs(coeff) != 1 or not num:
        num.insert(0, _frac_str(abs(coeff)))
    out = "*".join(num)
    for d in den:
        out += "/" + d
    return out


def unparse(e: Expr) -> str:
    """Deterministic printer; parse(unparse(e)) == e on canonical forms."""
    if isinstance(e, ex.Rat):
        return _frac_str(e.value)
    if isinstance(e, ex.Coord):
        return e.c.name()
    if isinstance(e, ex.Call):
        return f"{e.fn}({unparse(e.arg)})"
    if isinstance(e, (ex.Pow, ex.Prod)):
        coeff, factors = ex._split_term(e)
        body = _print_term(coeff, factors)
        return "-" + body if coeff < 0 else body
    if isinstance(e, ex.Sum):
        parts = []
        for t in e.terms:
            coeff, factors = ex._split_term(t)
            body = _print_term(coeff, factors)
            if not parts:
                parts.append("-" + body if coeff < 0 else body)
            else:
                parts.append((" - " if coeff < 0 else " + ") + body)
        return "".join(parts)
    raise TypeError(f"not an Expr: {e!r}")
