"""Universal linearization and the generalized Laplace machinery.

Covers the rescaled linearization coefficients, the compatibility
relations, the Laplace invariants H_ij and H_ijk, the directed (i,j)
Laplace transform with its closed-form transformed coefficients, cascade
iteration to Laplace indices, formal adjoints, operator application, and
the inverse-transform identity check.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from .expr import Expr
from .forms import BiForm, lie
from .jets import SystemSpec, TotalVectorField, mixed_verdict, reduce as jet_reduce, total_derivative
from .zerotest import (
    DEFAULT_POLICY,
    ZeroVerdict,
    rational_numerator,
    simplify_rational,
    worst,
)

__all__ = [
    "LinearizedSystem",
    "AdjointSystem",
    "LaplaceInvariants",
    "LaplaceIndex",
    "InvariantVanishesError",
    "linearize",
    "compatibility",
    "invariants",
    "transform",
    "index",
    "adjoint",
    "apply_operator",
    "inverse_check",
    "transform_consistency",
]


class InvariantVanishesError(RuntimeError):
    def __init__(self, which: str, step: int = 0):
        super().__init__(f"Laplace invariant {which} vanishes (cascade step {step})")
        self.which = which
        self.step = step


def tidy(e: Expr) -> Expr:
    """Collapse expressions that are exactly zero on the rational route."""
    if e.is_zero_literal:
        return e
    p, _ = rational_numerator(e)
    return ex.ZERO if not p else e


def _cancel(e: Expr) -> Expr:
    """Quotient normalization for reported/iterated coefficients."""
    if e.is_zero_literal or isinstance(e, (ex.Rat, ex.Coord)):
        return e
    return simplify_rational(e)


class PairOperatorMixin:
    """Shared accessors over per-pair second-order operator coefficients."""

    @property
    def n(self) -> int:
        return self.sys.n

    def A(self, upper: int, other: int) -> Expr:
        i, j = min(upper, other), max(upper, other)
        slot = "A_i" if upper == i else "A_j"
        return self.coeffs[(i, j)][slot]

    def C(self, i: int, j: int) -> Expr:
        return self.coeffs[(min(i, j), max(i, j))]["C"]

    def D(self, i: int, e: Expr) -> Expr:
        return total_derivative(e, TotalVectorField(i), self.sys)

    def pairs(self):
        return self.sys.pairs()

    def theta_form(self) -> BiForm:
        """The rescaled contact form Theta = mu * theta."""
        return BiForm.theta(self.n).scale(self.mu)

    def to_json(self):
        out = {"mu": repr(self.mu)}
        for (i, j), c in sorted(self.coeffs.items()):
            out[f"A{i}{j}^{i}"] = repr(c["A_i"])
            out[f"A{i}{j}^{j}"] = repr(c["A_j"])
            out[f"C{i}{j}"] = repr(c["C"])
        return out


@dataclass(frozen=True)
class LinearizedSystem(PairOperatorMixin):
    """Coefficients {A^i_ij, A^j_ij, C_ij} of the rescaled linearization."""

    sys: SystemSpec
    mu: Expr
    coeffs: dict  # (i,j) with i<j -> {"A_i": Expr, "A_j": Expr, "C": Expr}
    provenance: tuple = ()

    def replace_coeff(self, i: int, j: int, slot: str, value: Expr) -> "LinearizedSystem":
        coeffs = {k: dict(v) for k, v in self.coeffs.items()}
        coeffs[(min(i, j), max(i, j))][slot] = value
        return LinearizedSystem(self.sys, self.mu, coeffs, self.provenance)

    def to_json(self):
        out = PairOperatorMixin.to_json(self)
        out["provenance"] = [list(p) for p in self.provenance]
        return out


@dataclass(frozen=True)
class AdjointSystem(PairOperatorMixin):
    """Starred coefficients of the formal adjoints L*_ij."""

    sys: SystemSpec
    mu: Expr
    coeffs: dict


def linearize(sys: SystemSpec, mu: Expr = ex.ONE, policy=DEFAULT_POLICY) -> LinearizedSystem:
    """Coefficients of the universal linearization, rescaled by mu.

    With F_ij = u_ij - f_ij the unscaled coefficients are
    a^i = -df/du_i, a^j = -df/du_j, c = -df/du; a nontrivial mu shifts
    them by logarithmic-derivative terms.
    """
    from .expr import Coordinate

    mu = jet_reduce(mu, sys)
    if not mixed_verdict(mu, sys, max(2, _expr_order(mu)), policy).kind == "nonzero":
        raise InvariantVanishesError("mu")
    coeffs = {}
    for (i, j) in sys.pairs():
        f = sys.rhs(i, j)
        a_i = ex.neg(ex.derive(f, Coordinate.u([i])))
        a_j = ex.neg(ex.derive(f, Coordinate.u([j])))
        c = ex.neg(ex.derive(f, Coordinate.u()))
        if not (isinstance(mu, ex.Rat) and mu.value == 1):
            Xi_mu = total_derivative(mu, TotalVectorField(i), sys)
            Xj_mu = total_derivative(mu, TotalVectorField(j), sys)
            XiXj_mu = total_derivative(Xj_mu, TotalVectorField(i), sys)
            inv = ex.pw(mu, -1)
            A_i = ex.sub(a_i, ex.mul(Xj_mu, inv))
            A_j = ex.sub(a_j, ex.mul(Xi_mu, inv))
            C = ex.add(
                c,
                ex.neg(ex.mul(XiXj_mu, inv)),
                ex.neg(ex.mul(a_i, Xi_mu, inv)),
                ex.neg(ex.mul(a_j, Xj_mu, inv)),
                ex.mul(ex.rat(2), Xi_mu, Xj_mu, ex.pw(mu, -2)),
            )
            a_i, a_j, c = tidy(A_i), tidy(A_j), tidy(C)
        coeffs[(i, j)] = {"A_i": a_i, "A_j": a_j, "C": c}
    return LinearizedSystem(sys, mu, coeffs)


def _expr_order(e: Expr) -> int:
    return max((c.order for c in ex.free_coordinates(e)), default=0)


@dataclass(frozen=True)
class LaplaceInvariants:
    H: dict   # ordered pair (i,j) -> Expr
    Hk: dict  # ordered triple (i,j,k) -> Expr  (n=3 only)

    def to_json(self):
        out = {f"H_{i}{j}": repr(e) for (i, j), e in sorted(self.H.items())}
        out.update({f"H_{i}{j}{k}": repr(e) for (i, j, k), e in sorted(self.Hk.items())})
        return out


def invariants(lin: LinearizedSystem) -> LaplaceInvariants:
    """H_ij = D_i(A^i_ij) + A^i_ij A^j_ij - C_ij and H_ijk = A^k_kj - A^i_ij."""
    H = {}
    for (i, j) in lin.pairs():
        for a, b in ((i, j), (j, i)):
            H[(a, b)] = _cancel(ex.add(
                lin.D(a, lin.A(a, b)),
                ex.mul(lin.A(a, b), lin.A(b, a)),
                ex.neg(lin.C(a, b)),
            ))
    Hk = {}
    if lin.n == 3:
        for i in (1, 2, 3):
            for j in (1, 2, 3):
                for k in (1, 2, 3):
                    if len({i, j, k}) == 3:
                        Hk[(i, j, k)] = _cancel(ex.sub(lin.A(k, j), lin.A(i, j)))
    return LaplaceInvariants(H, Hk)


@dataclass(frozen=True)
class CompatibilityRow:
    family: int
    indices: tuple
    residual: Expr
    verdict: ZeroVerdict


@dataclass(frozen=True)
class CompatibilityReport:
    rows: tuple
    passed: bool


def compatibility(lin: LinearizedSystem, policy=DEFAULT_POLICY) -> CompatibilityReport:
    """The integrability relations among the linearization coefficients."""
    if lin.n == 2:
        return CompatibilityReport(rows=(), passed=True)
    rows = []
    order = 4
    for l in (1, 2, 3):
        j, k = [m for m in (1, 2, 3) if m != l]
        r1 = ex.sub(lin.D(j, lin.A(l, k)), lin.D(k, lin.A(l, j)))
        rows.append(CompatibilityRow(
            1, (l, j, k), r1, mixed_verdict(r1, lin.sys, order, policy)))
    for l in (1, 2, 3):
        for j in (1, 2, 3):
            for k in (1, 2, 3):
                if len({l, j, k}) != 3:
                    continue
                r2 = ex.add(
                    lin.D(j, lin.A(k, l)),
                    ex.neg(ex.mul(lin.A(k, l), lin.A(k, j))),
                    ex.mul(lin.A(l, j), lin.A(k, l)),
                    ex.mul(lin.A(j, l), lin.A(k, j)),
                    ex.neg(lin.C(l, j)),
                )
                rows.append(CompatibilityRow(
                    2, (l, j, k), r2, mixed_verdict(r2, lin.sys, order, policy)))
                r3 = ex.add(
                    lin.D(j, lin.C(l, k)),
                    ex.neg(lin.D(k, lin.C(l, j))),
                    ex.mul(lin.A(l, j), lin.C(l, k)),
                    ex.mul(ex.sub(lin.A(j, l), lin.A(k, l)), lin.C(k, j)),
                    ex.neg(ex.mul(lin.A(l, k), lin.C(l, j))),
                )
                rows.append(CompatibilityRow(
                    3, (l, j, k), r3, mixed_verdict(r3, lin.sys, order, policy)))
    return CompatibilityReport(
        rows=tuple(rows), passed=all(r.verdict.zeroish for r in rows)
    )


def _require_nonzero(lin, e: Expr, name: str, step: int, policy) -> ZeroVerdict:
    v = mixed_verdict(e, lin.sys, max(2, _expr_order(e)), policy)
    if v.zeroish:
        raise InvariantVanishesError(name, step)
    return v


def transform(lin: LinearizedSystem, direction, policy=DEFAULT_POLICY) -> LinearizedSystem:
    """The (i,j) Laplace transform of the full coefficient system."""
    i, j = direction
    if i == j or not (1 <= i <= lin.n and 1 <= j <= lin.n):
        raise ValueError(f"invalid transform direction {direction}")
    inv = invariants(lin)
    step = len(lin.provenance)
    H = inv.H[(i, j)]
    _require_nonzero(lin, H, f"H_{i}{j}", step, policy)
    k = None
    if lin.n == 3:
        k = next(m for m in (1, 2, 3) if m not in (i, j))
        _require_nonzero(lin, inv.Hk[(i, j, k)], f"H_{i}{j}{k}", step, policy)

    def X(m, e):
        return lin.D(m, e)

    # The pair-{i,j} equation for xi is the classical transformed operator;
    # the cross-pair coefficients follow from eliminating Theta and its
    # derivatives through the defining relations of xi.  The consistency
    # oracle (transform_consistency) validates every coefficient.
    Hinv = ex.pw(H, -1)
    A = lin.A(i, j)   # A^i_ij
    B = lin.A(j, i)   # A^j_ij
    C = lin.C(i, j)
    coeffs = {}
    new_ij = {
        _slot(i, j, i): _cancel(ex.sub(A, ex.mul(X(j, H), Hinv))),
        _slot(i, j, j): B,
        "C": _cancel(ex.add(
            C,
            ex.neg(X(i, A)),
            X(j, B),
            ex.neg(ex.mul(B, X(j, H), Hinv)),
        )),
    }
    coeffs[(min(i, j), max(i, j))] = new_ij
    if lin.n == 3:
        Hk = inv.Hk[(i, j, k)]
        Hkinv = ex.pw(Hk, -1)
        D_ = lin.A(i, k)  # A^i_ik
        G = lin.A(j, k)   # A^j_jk
        J = lin.A(k, j)   # A^k_jk
        new_ik = {
            _slot(i, k, i): _cancel(ex.sub(D_, ex.mul(X(k, H), Hinv))),
            _slot(i, k, k): _cancel(ex.add(B, ex.mul(H, Hkinv))),
            "C": _cancel(ex.add(
                X(k, B),
                ex.mul(B, D_),
                ex.neg(ex.mul(B, X(k, H), Hinv)),
                ex.mul(G, H, Hkinv),
            )),
        }
        coeffs[(min(i, k), max(i, k))] = new_ik
        A_jk_hat = _cancel(ex.sub(J, ex.mul(X(j, Hk), Hkinv)))
        new_jk = {
            _slot(j, k, j): G,
            _slot(j, k, k): A_jk_hat,
            "C": _cancel(ex.add(
                X(j, G),
                ex.mul(G, A_jk_hat),
                ex.neg(ex.mul(G, Hk)),
                ex.mul(D_, Hk),
            )),
        }
        coeffs[(min(j, k), max(j, k))] = new_jk
    return LinearizedSystem(lin.sys, lin.mu, coeffs, lin.provenance + ((i, j),))


def _slot(a: int, b: int, upper: int) -> str:
    return "A_i" if upper == min(a, b) else "A_j"


@dataclass(frozen=True)
class LaplaceIndex:
    kind: str            # "finite" | "at_least" | "blocked"
    p: int
    probabilistic: bool = False
    blocked_on: str = ""

    def to_json(self):
        if self.kind == "finite":
            return {"p": self.p, "certainty":
                    "probabilistic" if self.probabilistic else "exact"}
        if self.kind == "at_least":
            return {"at_least": self.p}
        return {"blocked": self.blocked_on, "step": self.p}


def index(lin: LinearizedSystem, direction, cap: int = 10, policy=DEFAULT_POLICY) -> LaplaceIndex:
    """Iterate the (i,j) transform until its invariant vanishes."""
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    i, j = direction
    cur = lin
    probabilistic = False
    for p in range(cap + 1):
        inv = invariants(cur)
        H = inv.H[(i, j)]
        v = mixed_verdict(H, lin.sys, max(2, _expr_order(H)), policy)
        if v.zeroish:
            return LaplaceIndex("finite", p, probabilistic or v.kind == "probably_zero")
        if p == cap:
            break
        try:
            cur = transform(cur, direction, policy)
        except InvariantVanishesError as err:
            if err.which == f"H_{i}{j}":
                return LaplaceIndex("finite", p, probabilistic)
            return LaplaceIndex("blocked", p, probabilistic, err.which)
    return LaplaceIndex("at_least", cap, probabilistic)


def adjoint(op) -> AdjointSystem | LinearizedSystem:
    """Formal adjoint: (A)* = -A and (C)* = C - X_i(A^i) - X_j(A^j)."""
    coeffs = {}
    for (i, j) in op.pairs():
        coeffs[(i, j)] = {
            "A_i": tidy(ex.neg(op.A(i, j))),
            "A_j": tidy(ex.neg(op.A(j, i))),
            "C": _cancel(ex.add(
                op.C(i, j),
                ex.neg(op.D(i, op.A(i, j))),
                ex.neg(op.D(j, op.A(j, i))),
            )),
        }
    cls = LinearizedSystem if isinstance(op, AdjointSystem) else AdjointSystem
    if cls is LinearizedSystem:
        return LinearizedSystem(op.sys, op.mu, coeffs, ())
    return AdjointSystem(op.sys, op.mu, coeffs)


def apply_operator(op, pair, target):
    """Apply the pair operator X_iX_j + A^iX_i + A^jX_j + C to a function
    or a (0,s) form (total fields acting by projected Lie derivative)."""
    i, j = pair
    sys = op.sys
    if isinstance(target, BiForm):
        if target.r != 0:
            raise ValueError("pair operators act on functions and (0,s) forms")
        Xi = TotalVectorField(i)
        Xj = TotalVectorField(j)
        xj = lie(Xj, target, sys)
        return (
            lie(Xi, xj, sys)
            + lie(Xi, target, sys).scale(op.A(i, j))
            + xj.scale(op.A(j, i))
            + target.scale(op.C(i, j))
        )
    xj = op.D(j, target)
    return tidy(ex.add(
        op.D(i, xj),
        ex.mul(op.A(i, j), op.D(i, target)),
        ex.mul(op.A(j, i), xj),
        ex.mul(op.C(i, j), target),
    ))


def inverse_check(lin: LinearizedSystem, direction, policy=DEFAULT_POLICY) -> ZeroVerdict:
    """Residual of the inverse-transform identity (1/H)(X_i(xi) + A^j xi) = Theta."""
    i, j = direction
    inv = invariants(lin)
    H = inv.H[(i, j)]
    _require_nonzero(lin, H, f"H_{i}{j}", len(lin.provenance), policy)
    sys = lin.sys
    theta = lin.theta_form()
    xi = lie(TotalVectorField(j), theta, sys) + theta.scale(lin.A(i, j))
    back = (lie(TotalVectorField(i), xi, sys) + xi.scale(lin.A(j, i))).scale(ex.pw(H, -1))
    resid = back - theta
    order = max(3, resid.coordinate_order())
    return worst(
        mixed_verdict(c, sys, order, policy) for c in resid.terms.values()
    )


def transform_consistency(lin: LinearizedSystem, direction, policy=DEFAULT_POLICY):
    """Verdicts for the defining relations of a single (i,j) transform.

    Checks the three total-derivative identities for xi_ij (with the
    third-direction contact coefficient taken as -H_ijk) and then applies
    every operator of the transformed system to xi_ij.  Only meaningful
    for an original linearization: mu*theta does not satisfy an already
    transformed system (deeper steps are covered by the coframe
    structure oracle, which threads the cascade substitutions).
    """
    if lin.provenance:
        raise ValueError(
            "transform_consistency applies to an untransformed "
            "linearization; use the coframe structure oracle for deeper "
            "cascade steps"
        )
    i, j = direction
    sys = lin.sys
    inv = invariants(lin)
    H = inv.H[(i, j)]
    theta = lin.theta_form()
    Xi, Xj = TotalVectorField(i), TotalVectorField(j)
    th_j = lie(Xj, theta, sys)
    xi = th_j + theta.scale(lin.A(i, j))
    rows = {}

    def verdict(form: BiForm) -> ZeroVerdict:
        order = max(3, form.coordinate_order())
        if form.is_zero:
            return ZeroVerdict.zero()
        return worst(mixed_verdict(c, sys, order, policy) for c in form.terms.values())

    r1 = lie(Xi, xi, sys) - (
        th_j.scale(ex.neg(lin.A(j, i)))
        + theta.scale(ex.sub(H, ex.mul(lin.A(i, j), lin.A(j, i))))
    )
    rows["X_i(xi)"] = verdict(r1)
    r2 = lie(Xj, xi, sys) - (
        theta.scale(lin.D(j, lin.A(i, j)))
        + th_j.scale(lin.A(i, j))
        + lie(Xj, th_j, sys)
    )
    rows["X_j(xi)"] = verdict(r2)
    if lin.n == 3:
        k = next(m for m in (1, 2, 3) if m not in (i, j))
        Xk = TotalVectorField(k)
        rhs = (
            theta.scale(ex.sub(lin.D(k, lin.A(i, j)), lin.C(j, k)))
            + lie(Xk, theta, sys).scale(ex.neg(inv.Hk[(i, j, k)]))
            + th_j.scale(ex.neg(lin.A(j, k)))
        )
        rows["X_k(xi)"] = verdict(lie(Xk, xi, sys) - rhs)
    hat = transform(lin, direction, policy)
    for (l, m) in hat.pairs():
        rows[f"Lhat_{l}{m}(xi)"] = verdict(apply_operator(hat, (l, m), xi))
    return rows
