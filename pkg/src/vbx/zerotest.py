"""Zero testing: exact on the rational subring, sampled past it.

The exact route clears denominators and expands the expression into a
multivariate polynomial over "atoms" (coordinates plus opaque
transcendental kernels).  A vanishing numerator decides Zero outright; a
nonvanishing one decides NonZero whenever no kernels are present, since a
nonzero rational function cannot vanish identically.  With kernels in
play, algebraic relations among them (exp identities and the like) force
a numeric verdict: ProbablyZero or NonZero from seeded sampling.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from . import expr as ex
from .expr import EvalDomainError, Expr, ExprError

__all__ = [
    "ZeroVerdict",
    "Sampled",
    "ExactOnly",
    "IndeterminateZeroError",
    "is_zero",
    "worst",
    "DEFAULT_POLICY",
]


class IndeterminateZeroError(ExprError):
    """Exact-only policy could not decide and found no witness."""


@dataclass(frozen=True)
class ZeroVerdict:
    kind: str  # "zero" | "nonzero" | "probably_zero"
    samples: int = 0
    tol: float = 0.0

    @property
    def zeroish(self) -> bool:
        return self.kind in ("zero", "probably_zero")

    @property
    def certainty(self) -> str:
        return "exact" if self.kind in ("zero", "nonzero") else "probabilistic"

    def __str__(self):
        if self.kind == "probably_zero":
            return f"ProbablyZero({self.samples}, {self.tol:g})"
        return "Zero" if self.kind == "zero" else "NonZero"

    @staticmethod
    def zero() -> "ZeroVerdict":
        return ZeroVerdict("zero")

    @staticmethod
    def nonzero() -> "ZeroVerdict":
        return ZeroVerdict("nonzero")

    @staticmethod
    def probably_zero(samples: int, tol: float) -> "ZeroVerdict":
        return ZeroVerdict("probably_zero", samples, tol)


_RANK = {"zero": 0, "probably_zero": 1, "nonzero": 2}


def worst(verdicts) -> ZeroVerdict:
    """Aggregate: any NonZero dominates, then ProbablyZero, then Zero."""
    out = ZeroVerdict.zero()
    for v in verdicts:
        if _RANK[v.kind] > _RANK[out.kind]:
            out = v
    return out


@dataclass(frozen=True)
class Sampled:
    points: int = 20
    tol: float = 1e-9
    seed: int = 0
    resample_cap: int = 100


@dataclass(frozen=True)
class ExactOnly:
    points: int = 20
    tol: float = 1e-9
    seed: int = 0
    resample_cap: int = 100


DEFAULT_POLICY = Sampled()

# ---------------------------------------------------------------------------
# Sparse multivariate polynomials over Fraction: {monomial: coeff} with
# monomial = tuple of (atom id, exponent) sorted by atom id.

_P_ONE = {(): Fraction(1)}


def _padd(a, b):
    out = dict(a)
    for m, c in b.items():
        s = out.get(m, Fraction(0)) + c
        if s:
            out[m] = s
        else:
            out.pop(m, None)
    return out


def _mon_mul(m1, m2):
    d = dict(m1)
    for a, e in m2:
        s = d.get(a, 0) + e
        if s:
            d[a] = s
        else:
            d.pop(a, None)
    return tuple(sorted(d.items()))


def _pmul(a, b):
    out: dict = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = _mon_mul(m1, m2)
            s = out.get(m, Fraction(0)) + c1 * c2
            if s:
                out[m] = s
            else:
                out.pop(m, None)
    return out


def _ppow(a, n: int):
    out = _P_ONE
    base = a
    while n:
        if n & 1:
            out = _pmul(out, base)
        n >>= 1
        if n:
            base = _pmul(base, base)
    return out


class _Atoms:
    """Deterministic atom numbering for coordinates and opaque kernels."""

    def __init__(self):
        self.ids: dict = {}
        self.has_kernel = False

    def coord(self, c) -> int:
        k = ("c", c)
        if k not in self.ids:
            self.ids[k] = len(self.ids)
        return self.ids[k]

    def kernel(self, e: Expr) -> int:
        k = ("k", e.key())
        if k not in self.ids:
            self.ids[k] = len(self.ids)
        self.has_kernel = True
        return self.ids[k]


def _pkey(p) -> tuple:
    return tuple(sorted(p.items()))


class _Frac:
    """Numerator polynomial over a factored denominator {key: (poly, exp)}.

    Keeping denominators factored avoids the degree blow-up of repeatedly
    cross-multiplying structurally identical denominators while summing.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=None):
        self.num = num
        self.den = den or {}

    def mul(self, other: "_Frac") -> "_Frac":
        den = dict(self.den)
        for k, (p, e) in other.den.items():
            if k in den:
                den[k] = (p, den[k][1] + e)
            else:
                den[k] = (p, e)
        return _Frac(_pmul(self.num, other.num), den)

    def power(self, n: int) -> "_Frac":
        if n == 0:
            return _Frac(dict(_P_ONE))
        if n > 0:
            return _Frac(_ppow(self.num, n),
                         {k: (p, e * n) for k, (p, e) in self.den.items()})
        if not self.num:
            raise ExprError("division by an expression that is exactly zero")
        m = -n
        num = _P_ONE
        for k, (p, e) in self.den.items():
            num = _pmul(num, _ppow(p, e * m))
        nk = _pkey(self.num)
        return _Frac(num, {nk: (self.num, m)})

    def add(self, other: "_Frac") -> "_Frac":
        den = dict(self.den)
        for k, (p, e) in other.den.items():
            if k in den:
                den[k] = (p, max(den[k][1], e))
            else:
                den[k] = (p, e)
        a = self.num
        for k, (p, e) in den.items():
            extra = e - self.den.get(k, (None, 0))[1]
            if extra:
                a = _pmul(a, _ppow(p, extra))
        b = other.num
        for k, (p, e) in den.items():
            extra = e - other.den.get(k, (None, 0))[1]
            if extra:
                b = _pmul(b, _ppow(p, extra))
        return _Frac(_padd(a, b), den)


def _to_fraction(e: Expr, atoms: _Atoms) -> _Frac:
    """Express e as a numerator over a factored denominator."""
    if isinstance(e, ex.Rat):
        return _Frac({(): e.value} if e.value else {})
    if isinstance(e, ex.Coord):
        return _Frac({((atoms.coord(e.c), 1),): Fraction(1)})
    if isinstance(e, ex.Call):
        return _Frac({((atoms.kernel(e), 1),): Fraction(1)})
    if isinstance(e, ex.Pow):
        if e.exp.denominator != 1:
            return _Frac({((atoms.kernel(e), 1),): Fraction(1)})
        return _to_fraction(e.base, atoms).power(e.exp.numerator)
    if isinstance(e, ex.Prod):
        out = _Frac(_P_ONE)
        for f in e.factors:
            out = out.mul(_to_fraction(f, atoms))
        return out
    if isinstance(e, ex.Sum):
        out = _to_fraction(e.terms[0], atoms)
        for t in e.terms[1:]:
            out = out.add(_to_fraction(t, atoms))
        return out
    raise TypeError(f"not an Expr: {e!r}")


def rational_numerator(e: Expr):
    """(numerator poly, had transcendental kernels) for diagnostics/tests."""
    atoms = _Atoms()
    f = _to_fraction(e, atoms)
    return f.num, atoms.has_kernel


def _mon_divides(d, m) -> bool:
    dm = dict(m)
    return all(dm.get(a, 0) >= e for a, e in d)


def _mon_quotient(m, d):
    out = dict(m)
    for a, e in d:
        r = out[a] - e
        if r:
            out[a] = r
        else:
            del out[a]
    return tuple(sorted(out.items()))


def _mon_order(m):
    return (sum(e for _, e in m), m)


def _pdiv_exact(p, d):
    """Quotient of p by d when the division is exact, else None."""
    if not d:
        return None
    rem = dict(p)
    lead_d = max(d, key=_mon_order)
    cd = d[lead_d]
    q: dict = {}
    while rem:
        lead = max(rem, key=_mon_order)
        if not _mon_divides(lead_d, lead):
            return None
        qm = _mon_quotient(lead, lead_d)
        qc = rem[lead] / cd
        q[qm] = qc
        for m, c in d.items():
            mm = _mon_mul(m, qm)
            s = rem.get(mm, Fraction(0)) - qc * c
            if s:
                rem[mm] = s
            else:
                rem.pop(mm, None)
    return q


def _poly_to_expr(p, back) -> Expr:
    terms = []
    for mono, c in p.items():
        factors = [ex.pw(back[a], e) for a, e in mono]
        terms.append(ex.mul(ex.rat(c), *factors))
    return ex.add(*terms) if terms else ex.ZERO


def simplify_rational(e: Expr) -> Expr:
    """Combine over a common factored denominator and cancel exact factors.

    Cancellation is trial division of the combined numerator by the
    denominator factors the expression already exhibits; no factorization
    is attempted.  Expressions with transcendental kernels pass through
    with the kernels as opaque atoms.
    """
    e = ex.normalize(e)
    if isinstance(e, (ex.Rat, ex.Coord)):
        return e
    atoms = _Atoms()
    try:
        f = _to_fraction(e, atoms)
    except ExprError:
        return e
    back = {i: (k[1] if k[0] == "c" else None) for k, i in atoms.ids.items()}
    for key, i in atoms.ids.items():
        if key[0] == "c":
            back[i] = ex.coord(key[1])
    # kernel atoms need their defining expressions; recover them by walking
    kernels = {}

    def collect(n):
        if isinstance(n, ex.Sum):
            for t in n.terms:
                collect(t)
        elif isinstance(n, ex.Prod):
            for t in n.factors:
                collect(t)
        elif isinstance(n, ex.Pow):
            if n.exp.denominator != 1:
                kernels[("k", n.key())] = n
            else:
                collect(n.base)
        elif isinstance(n, ex.Call):
            kernels[("k", n.key())] = n

    collect(e)
    for key, i in atoms.ids.items():
        if key[0] == "k":
            back[i] = kernels[key]
    num = f.num
    den = {}
    for k, (p, exp) in f.den.items():
        while exp > 0 and num:
            q = _pdiv_exact(num, p)
            if q is None:
                break
            num = q
            exp -= 1
        if exp:
            den[k] = (p, exp)
    out = _poly_to_expr(num, back)
    for _, (p, exp) in sorted(den.items()):
        out = ex.mul(out, ex.pw(_poly_to_expr(p, back), -exp))
    return out


def _sample_once(e: Expr, coords, rng):
    point = {c: rng.uniform(-1.0, 1.0) for c in coords}
    v = ex.evaluate(e, point)
    m = ex.magnitude(e, point)
    return v, m


def _sampled_verdict(e: Expr, points: int, tol: float, seed: int, cap: int):
    coords = sorted(ex.free_coordinates(e), key=lambda c: c.order_key())
    rng = random.Random(seed)
    good = 0
    attempts = 0
    while good < points:
        if attempts >= points + cap:
            raise ExprError(
                f"resample cap exceeded while zero-testing {e!r}"
            )
        attempts += 1
        try:
            v, m = _sample_once(e, coords, rng)
        except EvalDomainError:
            continue
        if not (abs(v) < float("inf")) or not (m < float("inf")):
            continue
        if abs(v) > tol * (1.0 + m):
            return ZeroVerdict.nonzero()
        good += 1
    return ZeroVerdict.probably_zero(points, tol)


def is_zero(e: Expr, policy=DEFAULT_POLICY) -> ZeroVerdict:
    """Decide whether e vanishes identically on the jet coordinates."""
    e = ex.normalize(e)
    if e.is_zero_literal:
        return ZeroVerdict.zero()
    atoms = _Atoms()
    p = _to_fraction(e, atoms).num
    if not p:
        return ZeroVerdict.zero()
    if not atoms.has_kernel:
        return ZeroVerdict.nonzero()
    v = _sampled_verdict(e, policy.points, policy.tol, policy.seed, policy.resample_cap)
    if isinstance(policy, ExactOnly):
        if v.kind == "nonzero":
            return v
        raise IndeterminateZeroError(
            "exact normalization cannot decide and no nonzero witness was found"
        )
    return v
