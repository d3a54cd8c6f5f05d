"""The restricted equation manifold for systems u_ij = f_ij.

Validates system specifications, eliminates mixed jet coordinates through
the equations, applies total derivatives, checks the involutivity
conditions D_k f_ij = D_i f_kj, and samples numeric jet points for the
verification oracles.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field

from . import expr as ex
from .expr import Coordinate, Expr, EvalDomainError
from .parser import parse
from .zerotest import DEFAULT_POLICY, ZeroVerdict, is_zero

__all__ = [
    "SystemSpec",
    "SystemValidationError",
    "OrderBudgetError",
    "TotalVectorField",
    "JetPoint",
    "load_system",
    "reduce",
    "reduce_via",
    "total_derivative",
    "check_involutive",
    "sample_point",
    "eval_at",
    "numeric_verdict",
    "mixed_verdict",
    "restricted_coordinates",
    "coordinate_from_name",
]

BOX_MARGIN = 0.1
SAMPLE_CAP = 100


class SystemValidationError(ValueError):
    pass


class OrderBudgetError(RuntimeError):
    pass


def coordinate_from_name(name: str, n: int) -> Coordinate:
    e = parse(name, n)
    if not isinstance(e, ex.Coord):
        raise SystemValidationError(f"{name!r} is not a coordinate")
    return e.c


class SystemSpec:
    """A validated hyperbolic system: n in {2,3} plus right-hand sides f_ij."""

    def __init__(self, n: int, f: dict, box=None, order_budget: int = 8):
        self.n = n
        self.f = dict(f)
        self.box = box or {}
        self.order_budget = order_budget
        self._memo: dict = {}
        self._lock = threading.Lock()

    def pairs(self):
        return [(i, j) for i in range(1, self.n + 1) for j in range(i + 1, self.n + 1)]

    def rhs(self, i: int, j: int) -> Expr:
        return self.f[(min(i, j), max(i, j))]

    def with_budget(self, order_budget: int) -> "SystemSpec":
        return SystemSpec(self.n, self.f, self.box, order_budget)

    def __repr__(self):
        eqs = ", ".join(f"u{i}{j} = {self.f[(i, j)]!r}" for i, j in self.pairs())
        return f"SystemSpec(n={self.n}, {eqs})"


@dataclass(frozen=True)
class TotalVectorField:
    """The restricted total derivative D_i, optionally rescaled by a factor."""

    index: int
    factor: Expr | None = None

    def __post_init__(self):
        if self.factor is not None:
            v = is_zero(self.factor)
            if v.kind == "zero":
                raise SystemValidationError(
                    f"rescaling factor of D_{self.index} is identically zero"
                )


@dataclass(frozen=True, eq=False)
class JetPoint:
    """Numeric values for the restricted coordinates up to a given order."""

    order: int
    values: dict
    seed: int = 0

    def __getitem__(self, c: Coordinate) -> float:
        return self.values[c]

    def coordinates(self):
        return sorted(self.values, key=lambda c: c.order_key())


def load_system(document: dict) -> SystemSpec:
    """Validate a system-spec JSON document."""
    if not isinstance(document, dict):
        raise SystemValidationError("system spec must be a JSON object")
    n = document.get("n")
    if n not in (2, 3):
        raise SystemValidationError("field 'n' must be 2 or 3")
    wanted = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    known = {"n", "box"} | {f"f{i}{j}" for i, j in wanted}
    extras = set(document) - known
    if extras:
        raise SystemValidationError(f"unknown fields: {sorted(extras)}")
    f = {}
    for i, j in wanted:
        key = f"f{i}{j}"
        if key not in document:
            raise SystemValidationError(f"missing right-hand side {key!r}")
        rhs = parse(document[key], n)
        allowed = {Coordinate.x(k) for k in range(1, n + 1)}
        allowed |= {Coordinate.u(), Coordinate.u([i]), Coordinate.u([j])}
        bad = sorted(
            (c for c in ex.free_coordinates(rhs) if c not in allowed),
            key=lambda c: c.order_key(),
        )
        if bad:
            raise SystemValidationError(
                f"{key} depends on {bad[0].name()}; only x-coordinates, u, "
                f"u{i} and u{j} are allowed"
            )
        f[(i, j)] = rhs
    box = {}
    for name, spec in (document.get("box") or {}).items():
        if not isinstance(spec, list) or len(spec) < 2:
            raise SystemValidationError(f"box entry {name!r} must be [lo, hi, excl...]")
        box[coordinate_from_name(name, n)] = (
            float(spec[0]),
            float(spec[1]),
            tuple(float(v) for v in spec[2:]),
        )
    return SystemSpec(n, f, box)


def _check_budget(sys: SystemSpec, order: int):
    if order > sys.order_budget:
        raise OrderBudgetError(
            f"jet order {order} exceeds the configured budget {sys.order_budget}"
        )


def _reduce_coordinate(sys: SystemSpec, c: Coordinate, pair=None) -> Expr:
    """Rewrite a mixed derivative coordinate via the equations.

    The canonical route uses f_ij for the lexicographically smallest pair
    (i, j) of distinct indices present; a specific route can be forced for
    the pair-independence tests.
    """
    if c.is_pure:
        return ex.coord(c)
    if pair is None:
        with sys._lock:
            hit = sys._memo.get(c)
        if hit is not None:
            return hit
    _check_budget(sys, c.order)
    idx = list(c.index)
    distinct = sorted(set(idx))
    if pair is None:
        i, j = distinct[0], distinct[1]
    else:
        i, j = min(pair), max(pair)
        if i not in distinct or j not in distinct or i == j:
            raise SystemValidationError(
                f"pair ({i},{j}) is not a valid reduction route for {c.name()}"
            )
    rest = list(idx)
    rest.remove(i)
    rest.remove(j)
    out = sys.rhs(i, j)
    for k in rest:
        out = _d_once(sys, out, k)
    if pair is None:
        with sys._lock:
            sys._memo[c] = out
    return out


def reduce(e: Expr, sys: SystemSpec) -> Expr:
    """Express e using restricted (pure) coordinates only."""
    mixed = {c for c in ex.free_coordinates(e) if not c.is_pure}
    if not mixed:
        return e
    mapping = {c: _reduce_coordinate(sys, c) for c in mixed}
    return ex.substitute(e, mapping)


def reduce_via(sys: SystemSpec, c: Coordinate, pair) -> Expr:
    """Reduce a single mixed coordinate along a nominated pair route."""
    return _reduce_coordinate(sys, c, pair=pair)


def _bump(sys: SystemSpec, c: Coordinate, i: int) -> Expr:
    """D_i applied to a single restricted coordinate."""
    if c.kind == "x":
        return ex.ONE if c.index == i else ex.ZERO
    new = Coordinate.u(c.index + (i,))
    _check_budget(sys, new.order)
    if new.is_pure:
        return ex.coord(new)
    return _reduce_coordinate(sys, new)


def _d_once(sys: SystemSpec, e: Expr, i: int) -> Expr:
    parts = []
    for c in ex.free_coordinates(e):
        de = ex.derive(e, c)
        if de.is_zero_literal:
            continue
        dc = _bump(sys, c, i)
        if dc.is_zero_literal:
            continue
        parts.append(ex.mul(de, dc))
    return ex.add(*parts) if parts else ex.ZERO


def total_derivative(e: Expr, X: TotalVectorField, sys: SystemSpec) -> Expr:
    """Apply the restricted total derivative (times its rescaling factor)."""
    out = _d_once(sys, reduce(e, sys), X.index)
    if X.factor is not None:
        out = ex.mul(X.factor, out)
    return out


@dataclass(frozen=True)
class InvolutivityRow:
    j: int
    i: int
    k: int
    residual: Expr
    verdict: ZeroVerdict

    @property
    def identity(self) -> str:
        return f"D{self.k}(f{min(self.i, self.j)}{max(self.i, self.j)}) - " \
               f"D{self.i}(f{min(self.k, self.j)}{max(self.k, self.j)})"


@dataclass(frozen=True)
class InvolutivityReport:
    rows: tuple
    passed: bool

    def witness(self):
        for row in self.rows:
            if not row.verdict.zeroish:
                return row
        return None


def check_involutive(sys: SystemSpec, policy=DEFAULT_POLICY) -> InvolutivityReport:
    """Verify D_k f_ij = D_i f_kj for every choice of distinct i, j, k."""
    if sys.n == 2:
        return InvolutivityReport(rows=(), passed=True)
    rows = []
    for j in (1, 2, 3):
        i, k = [m for m in (1, 2, 3) if m != j]
        lhs = _d_once(sys, sys.rhs(i, j), k)
        rhs = _d_once(sys, sys.rhs(k, j), i)
        residual = ex.sub(lhs, rhs)
        rows.append(InvolutivityRow(j, i, k, residual, is_zero(residual, policy)))
    return InvolutivityReport(
        rows=tuple(rows), passed=all(r.verdict.zeroish for r in rows)
    )


def restricted_coordinates(n: int, order: int):
    coords = [Coordinate.x(i) for i in range(1, n + 1)]
    coords.append(Coordinate.u())
    for k in range(1, order + 1):
        coords.extend(Coordinate.u([i] * k) for i in range(1, n + 1))
    return coords


def sample_point(sys: SystemSpec, order: int, seed: int = 0, box=None) -> JetPoint:
    """Draw a deterministic jet point; uniform per coordinate in its box."""
    rng = random.Random(seed)
    box = sys.box if box is None else box
    values = {}
    for c in restricted_coordinates(sys.n, order):
        lo, hi, excl = box.get(c, (-1.0, 1.0, ()))
        for _ in range(SAMPLE_CAP):
            v = rng.uniform(lo, hi)
            if all(abs(v - bad) >= BOX_MARGIN for bad in excl):
                values[c] = v
                break
        else:
            raise EvalDomainError(
                f"resample cap exceeded for coordinate {c.name()}"
            )
    return JetPoint(order=order, values=values, seed=seed)


def eval_at(e: Expr, point: JetPoint) -> float:
    return ex.evaluate(e, point.values)


def numeric_verdict(exprs, sys: SystemSpec, order: int, policy=DEFAULT_POLICY) -> ZeroVerdict:
    """Sampled zero-verdict for expressions over jet points of the system.

    Uses the system box (singular-locus exclusions) rather than the plain
    coordinate sampler, resampling on domain errors.
    """
    exprs = [e for e in exprs if not e.is_zero_literal]
    if not exprs:
        return ZeroVerdict.zero()
    good = 0
    attempt = 0
    while good < policy.points:
        if attempt >= policy.points + policy.resample_cap:
            raise EvalDomainError("resample cap exceeded in numeric verdict")
        pt = sample_point(sys, order, seed=policy.seed + attempt)
        attempt += 1
        try:
            for e in exprs:
                v = ex.evaluate(e, pt.values)
                m = ex.magnitude(e, pt.values)
                if not (abs(v) < float("inf") and m < float("inf")):
                    raise EvalDomainError("non-finite sample")
                if abs(v) > policy.tol * (1.0 + m):
                    return ZeroVerdict.nonzero()
        except EvalDomainError:
            continue
        good += 1
    return ZeroVerdict.probably_zero(policy.points, policy.tol)


def mixed_verdict(e: Expr, sys: SystemSpec, order: int, policy=DEFAULT_POLICY) -> ZeroVerdict:
    """Exact verdict where the rational route decides; else jet sampling."""
    from .zerotest import rational_numerator

    e = ex.normalize(e)
    if e.is_zero_literal:
        return ZeroVerdict.zero()
    p, has_kernel = rational_numerator(e)
    if not p:
        return ZeroVerdict.zero()
    if not has_kernel:
        return ZeroVerdict.nonzero()
    return numeric_verdict([e], sys, order, policy)
