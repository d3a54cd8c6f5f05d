"""Conservation-law construction and verification.

Builds (2,s) laws from adjoint-kernel contact forms through the Psi maps,
checks d_H-closure, detects relative invariance, validates Darboux pairs,
rescales characteristics, assembles invariant contact forms, and generates
the (1,s)/(2,s) families available for Darboux-integrable systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .expr import Expr
from .forms import BiForm, d_H, d_V, d_V_function, lie, wedge, wedge_all
from .jets import (
    SystemSpec,
    TotalVectorField,
    mixed_verdict,
    numeric_verdict,
    restricted_coordinates,
    sample_point,
    total_derivative,
)
from .laplace import LinearizedSystem, adjoint, apply_operator
from .zerotest import DEFAULT_POLICY, ZeroVerdict, worst

__all__ = [
    "RhoTriple",
    "ConservationLaw",
    "InvariantBundle",
    "psi",
    "conslaw_from_rho",
    "verify_closed",
    "is_relative_invariant",
    "darboux_check",
    "rescale_characteristics",
    "invariant_contact_form",
    "invariant_sequence",
    "generate_cl",
]


@dataclass(frozen=True)
class RhoTriple:
    """One (0,s-1) contact form (a function when s=1) per unordered pair."""

    s: int
    rho: dict  # (i,j) i<j -> Expr | BiForm

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("rho triples require s >= 1")
        for key, r in self.rho.items():
            if isinstance(r, BiForm) and (r.r, r.s) != (0, self.s - 1):
                raise ValueError(
                    f"rho{key[0]}{key[1]} has bidegree ({r.r},{r.s}); "
                    f"expected (0,{self.s - 1})"
                )
            if not isinstance(r, BiForm) and self.s != 1 and not (
                isinstance(r, Expr) and r.is_zero_literal
            ):
                raise ValueError(
                    f"rho{key[0]}{key[1]} must be a (0,{self.s - 1}) form"
                )

    def as_form(self, i: int, j: int, n: int) -> BiForm:
        r = self.rho[(min(i, j), max(i, j))]
        if isinstance(r, BiForm):
            return r
        if self.s == 1:
            return BiForm.function(r, n)
        return BiForm.zero(n, 0, self.s - 1)


@dataclass(frozen=True)
class ConservationLaw:
    form: BiForm
    closure: ZeroVerdict
    adjoint_sum: ZeroVerdict | None = None
    adapted_order: int | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def bidegree(self):
        return (self.form.r, self.form.s)

    def to_json(self):
        out = {
            "type": list(self.bidegree),
            "form": self.form.to_json(),
            "closure": {"zero": "zero", "probably_zero": "probable",
                        "nonzero": "failed"}[self.closure.kind],
            "closure_certainty": self.closure.certainty,
            "provenance": self.provenance,
        }
        if self.adjoint_sum is not None:
            out["adjoint_sum"] = str(self.adjoint_sum)
        if self.adapted_order is not None:
            out["adapted_order"] = self.adapted_order
        return out


def _psi_parts(lin: LinearizedSystem, rho: BiForm, i: int, j: int):
    sys = lin.sys
    psi_i = lie(TotalVectorField(i), rho, sys) + rho.scale(ex.neg(lin.A(j, i)))
    psi_j = lie(TotalVectorField(j), rho, sys).scale(ex.MINUS_ONE) + rho.scale(lin.A(i, j))
    return psi_i, psi_j


def psi(lin: LinearizedSystem, rho, pair, coframe=None) -> BiForm:
    """The Psi_ij map sending a (0,s-1) form to a (2,s) form.

    Psi_ij(rho) = 1/2 s_i^s_k^[Theta^psi_i + xi_i^1^rho]
                - 1/2 s_j^s_k^[Theta^psi_j - xi_j^1^rho]
    with psi_i = X_i(rho) - A_ij^j rho and psi_j = -X_j(rho) + A_ij^i rho,
    taking the first-level elements from the attached adapted coframe.
    """
    if lin.n != 3:
        raise ValueError("the Psi maps require three independent variables")
    i, j = min(pair), max(pair)
    k = next(m for m in (1, 2, 3) if m not in (i, j))
    n = lin.n
    if not isinstance(rho, BiForm):
        rho = BiForm.function(rho, n)
    if rho.r != 0:
        raise ValueError("rho must be a (0,s-1) contact form")
    if coframe is None:
        from .coframe import build_coframe

        coframe = build_coframe(lin, 1)
    theta = coframe.theta
    xi_i = coframe.element(i, 1)
    xi_j = coframe.element(j, 1)
    psi_i, psi_j = _psi_parts(lin, rho, i, j)
    half = BiForm.function(ex.HALF, n)
    first = wedge_all(
        BiForm.sigma(i, n), BiForm.sigma(k, n),
        wedge(theta, psi_i) + wedge(xi_i, rho),
    )
    second = wedge_all(
        BiForm.sigma(j, n), BiForm.sigma(k, n),
        wedge(theta, psi_j) - wedge(xi_j, rho),
    )
    return wedge(half, first - second)


def verify_closed(omega: BiForm, sys: SystemSpec, policy=DEFAULT_POLICY) -> ZeroVerdict:
    """Zero-verdict on d_H(omega), coefficient by coefficient."""
    if omega.r not in (1, 2):
        raise ValueError("conservation-law candidates have type (1,s) or (2,s)")
    resid = d_H(omega, sys)
    if resid.is_zero:
        return ZeroVerdict.zero()
    order = max(3, resid.coordinate_order())
    return worst(
        mixed_verdict(c, sys, order, policy) for c in resid.terms.values()
    )


def conslaw_from_rho(lin: LinearizedSystem, triple: RhoTriple, coframe=None,
                     policy=DEFAULT_POLICY) -> ConservationLaw:
    """Assemble sum(Psi_ij(rho_ij)) and report adjoint-sum plus closure."""
    if lin.n != 3:
        raise ValueError("the Psi construction requires n = 3")
    n = lin.n
    if coframe is None:
        from .coframe import build_coframe

        coframe = build_coframe(lin, 1)
    adj = adjoint(lin)
    omega = BiForm.zero(n, 2, triple.s)
    adj_parts = []
    for (i, j) in lin.pairs():
        rho_form = triple.as_form(i, j, n)
        omega = omega + psi(lin, rho_form, (i, j), coframe)
        adj_parts.append(apply_operator(adj, (i, j), rho_form))
    if triple.s == 1:
        total = ex.add(*[p.coefficient((), ()) if isinstance(p, BiForm) else p
                         for p in adj_parts])
        adj_verdict = mixed_verdict(total, lin.sys, max(3, _eorder(total)), policy)
    else:
        total = adj_parts[0]
        for p in adj_parts[1:]:
            total = total + p
        adj_verdict = _form_verdict(total, lin.sys, policy)
    closure = verify_closed(omega, lin.sys, policy) if not omega.is_zero else ZeroVerdict.zero()
    order = None
    try:
        order = _adapted_order_or_none(omega, coframe, policy)
    except ValueError:
        pass
    return ConservationLaw(
        form=omega,
        closure=closure,
        adjoint_sum=adj_verdict,
        adapted_order=order,
        provenance={"generator": "psi-map", "s": triple.s},
    )


def _adapted_order_or_none(omega, coframe, policy):
    from .coframe import adapted_order

    if omega.coordinate_order() > coframe.order:
        return None
    return adapted_order(omega, coframe, policy)


def _eorder(e: Expr) -> int:
    return max((c.order for c in ex.free_coordinates(e)), default=0)


def _form_verdict(form: BiForm, sys: SystemSpec, policy) -> ZeroVerdict:
    if form.is_zero:
        return ZeroVerdict.zero()
    order = max(3, form.coordinate_order())
    return worst(mixed_verdict(c, sys, order, policy) for c in form.terms.values())


def is_relative_invariant(omega: BiForm, X: TotalVectorField, sys: SystemSpec,
                          policy=DEFAULT_POLICY):
    """Return lambda with X(omega) = lambda * omega, or None.

    The candidate ratio is taken on a monomial of the support and then
    cross-validated on every monomial of X(omega) - lambda*omega.
    """
    if omega.r != 0:
        raise ValueError("relative invariance is defined for (0,s) forms")
    Xw = lie(X, omega, sys)
    if omega.is_zero:
        return ex.ZERO
    if Xw.is_zero:
        return ex.ZERO
    lam = None
    for mono, c in omega.items():
        top = Xw.terms.get(mono)
        if top is None:
            continue
        lam = ex.mul(top, ex.pw(c, -1))
        break
    if lam is None:
        return None
    resid = Xw - omega.scale(lam)
    if _form_verdict(resid, sys, policy).zeroish:
        return lam
    return None


# ---------------------------------------------------------------------------
# Darboux machinery


@dataclass(frozen=True)
class InvariantBundle:
    """Claimed invariant functions with their annihilation pattern.

    For n=3: (I, It) killed by X_i and X_j; (J, Jt, K, Kt) killed by X_l.
    For n=2: (I, It) killed by X_1 and (J, Jt) killed by X_2.
    """

    n: int
    pair: tuple          # (I, It)
    pair_fields: tuple   # e.g. (1, 2)
    quad: tuple          # (J, Jt, K, Kt) for n=3; (J, Jt) for n=2
    quad_field: int


@dataclass(frozen=True)
class DarbouxRow:
    label: str
    verdict: ZeroVerdict | None
    ok: bool


@dataclass(frozen=True)
class DarbouxReport:
    rows: tuple
    passed: bool


def _gradient_rows(fns, sys: SystemSpec, order: int, pt) -> np.ndarray:
    coords = restricted_coordinates(sys.n, order)
    rows = []
    for f in fns:
        row = [ex.evaluate(ex.derive(f, c), pt.values) for c in coords]
        rows.append(row)
    return np.array(rows, dtype=float)


def darboux_check(sys: SystemSpec, bundle: InvariantBundle,
                  policy=DEFAULT_POLICY) -> DarbouxReport:
    """Verify invariance claims and functional independence of a bundle."""
    rows = []
    order = max(
        [2] + [_eorder(f) for f in bundle.pair + bundle.quad]
    )

    def invariance(fn: Expr, i: int, label: str):
        r = total_derivative(fn, TotalVectorField(i), sys)
        v = mixed_verdict(r, sys, order + 1, policy)
        rows.append(DarbouxRow(f"X{i}({label}) = 0", v, v.zeroish))

    names_pair = ("I", "It")
    for fn, name in zip(bundle.pair, names_pair):
        for i in bundle.pair_fields:
            invariance(fn, i, name)
    names_quad = ("J", "Jt", "K", "Kt")
    for fn, name in zip(bundle.quad, names_quad):
        invariance(fn, bundle.quad_field, name)

    def independence(fns, label: str):
        want = len(fns)
        best = 0
        for trial in range(policy.points):
            pt = sample_point(sys, order, seed=policy.seed + trial)
            try:
                m = _gradient_rows(fns, sys, order, pt)
            except ex.ExprError:
                continue
            best = max(best, int(np.linalg.matrix_rank(m, tol=1e-8)))
            if best == want:
                break
        rows.append(DarbouxRow(f"{label} independent (rank {best}/{want})",
                               None, best == want))

    independence(bundle.pair, "dI^dIt")
    independence(bundle.quad, "d" + "^d".join(names_quad[: len(bundle.quad)]))
    return DarbouxReport(tuple(rows), all(r.ok for r in rows))


def rescale_characteristics(sys: SystemSpec, I: Expr, K: Expr, l: int = 3,
                            fields=None, policy=DEFAULT_POLICY):
    """Rescaled fields X_i/X_i(K), X_j/X_j(K), X_l/X_l(I) and commutator
    verdicts with X_l-tilde, checked on a family of test functions."""
    n = sys.n
    others = [m for m in range(1, n + 1) if m != l]
    if fields is None:
        fields = {m: TotalVectorField(m) for m in range(1, n + 1)}

    def app(X: TotalVectorField, e: Expr) -> Expr:
        return total_derivative(e, X, sys)

    denom = {}
    for m in others:
        denom[m] = app(fields[m], K)
    denom[l] = app(fields[l], I)
    rescaled = {}
    for m in range(1, n + 1):
        d = denom[m]
        v = mixed_verdict(d, sys, max(2, _eorder(d)) + 1, policy)
        if v.zeroish:
            raise ValueError(
                f"rescaling denominator X{m}({'I' if m == l else 'K'}) vanishes"
            )
        base = fields[m]
        factor = ex.pw(d, -1) if base.factor is None else ex.mul(base.factor, ex.pw(d, -1))
        rescaled[m] = TotalVectorField(base.index, factor)

    from .parser import parse

    tests = [parse(t, n) for t in ("u", "x1", "u1", "u*u1" if n >= 2 else "u")]
    rows = []
    for m in others:
        for g in tests:
            r = ex.sub(
                app(rescaled[m], app(rescaled[l], g)),
                app(rescaled[l], app(rescaled[m], g)),
            )
            v = mixed_verdict(r, sys, max(3, _eorder(r)), policy)
            rows.append((f"[X~{m}, X~{l}]({g!r})", v))
    return rescaled, rows


def invariant_contact_form(sys: SystemSpec, kind: str, policy=DEFAULT_POLICY, **fns):
    """Invariant contact forms from characteristic invariant functions.

    kind "two-fn": omega = d_V I - X_t(I) d_V J, invariant under the two
    fields annihilating I and J (J normalized by X_t(J) = 1).
    kind "three-fn": omega = d_V K - X_a(K) d_V I - X_b(K) d_V J, invariant
    under the transversal field annihilating I, J, K.
    """
    n = sys.n

    def X(i, e):
        return total_derivative(e, TotalVectorField(i), sys)

    hyps = []

    def hyp(label: str, e: Expr):
        v = mixed_verdict(e, sys, max(3, _eorder(e)), policy)
        hyps.append((label, v))
        return v

    if kind == "two-fn":
        I, J = fns["I"], fns["J"]
        inv_under = fns.get("invariant_under", tuple(m for m in range(1, n + 1))[:-1])
        t = fns.get("transversal", n)
        for a in inv_under:
            hyp(f"X{a}(I)=0", X(a, I))
            hyp(f"X{a}(J)=0", X(a, J))
        hyp(f"X{t}(J)=1", ex.sub(X(t, J), ex.ONE))
        Iprime = X(t, I)
        omega = d_V_function(I, n) - d_V_function(J, n).scale(Iprime)
        checked = [(a, lie(TotalVectorField(a), omega, sys)) for a in inv_under]
    elif kind == "three-fn":
        I, J, K = fns["I"], fns["J"], fns["K"]
        t = fns.get("transversal", n)
        a, b = [m for m in range(1, n + 1) if m != t][:2]
        for name, f in (("I", I), ("J", J), ("K", K)):
            hyp(f"X{t}({name})=0", X(t, f))
        hyp(f"X{a}(I)=1", ex.sub(X(a, I), ex.ONE))
        hyp(f"X{b}(I)=0", X(b, I))
        hyp(f"X{a}(J)=0", X(a, J))
        hyp(f"X{b}(J)=1", ex.sub(X(b, J), ex.ONE))
        Kp, Kpp = X(a, K), X(b, K)
        omega = (d_V_function(K, n)
                 - d_V_function(I, n).scale(Kp)
                 - d_V_function(J, n).scale(Kpp))
        checked = [(t, lie(TotalVectorField(t), omega, sys))]
    else:
        raise ValueError(f"unknown invariant-contact-form kind {kind!r}")
    failed = [l for l, v in hyps if not v.zeroish]
    if failed:
        raise ValueError(f"hypothesis verdicts failed: {failed}")
    inv_rows = [(f"X{a}(omega)=0", _form_verdict(w, sys, policy)) for a, w in checked]
    return omega, hyps, inv_rows


def invariant_sequence(sys: SystemSpec, I1: Expr, It1: Expr, l: int, count: int,
                       policy=DEFAULT_POLICY):
    """alpha_i = d_V I_i - I_{i+1} d_V It_1 with I_{i+1} = X_l(I_i).

    Requires the normalization X_l(It_1) = 1.  For each i < count the
    structure residual d(alpha_i) - d(It_1)^alpha_{i+1} is checked in both
    bidegree components.
    """
    n = sys.n
    X = TotalVectorField(l)
    norm = ex.sub(total_derivative(It1, X, sys), ex.ONE)
    if not mixed_verdict(norm, sys, max(3, _eorder(It1) + 1), policy).zeroish:
        raise ValueError("normalization X(It_1) = 1 fails")
    Is = [I1]
    for _ in range(count + 1):
        Is.append(total_derivative(Is[-1], X, sys))
    dIt = d_V_function(It1, n)
    alphas = []
    for i in range(count + 1):
        alphas.append(d_V_function(Is[i], n) - dIt.scale(Is[i + 1]))
    rows = []
    dH_It = BiForm.zero(n, 1, 0)
    for m in range(1, n + 1):
        c = total_derivative(It1, TotalVectorField(m), sys)
        if not c.is_zero_literal:
            dH_It = dH_It + BiForm.sigma(m, n).scale(c)
    for i in range(count - 1):
        rh = d_H(alphas[i], sys) - wedge(dH_It, alphas[i + 1])
        rv = d_V(alphas[i], sys) - wedge(dIt, alphas[i + 1])
        rows.append((f"d(alpha_{i + 1}) row", worst([
            _form_verdict(rh, sys, policy), _form_verdict(rv, sys, policy)])))
    return alphas[:count], rows


def _pi_projection(fns, sys: SystemSpec, r: int) -> BiForm:
    """The (r, len(fns)-r) component of d(f_1)^...^d(f_m)."""
    from itertools import combinations

    n = sys.n
    m = len(fns)
    halves = []
    for f in fns:
        dh = BiForm.zero(n, 1, 0)
        for a in range(1, n + 1):
            c = total_derivative(f, TotalVectorField(a), sys)
            if not c.is_zero_literal:
                dh = dh + BiForm.sigma(a, n).scale(c)
        halves.append((dh, d_V_function(f, n)))
    out = BiForm.zero(n, r, m - r)
    for hpos in combinations(range(m), r):
        parts = [halves[t][0] if t in hpos else halves[t][1] for t in range(m)]
        piece = parts[0]
        for p in parts[1:]:
            piece = wedge(piece, p)
        out = out + piece
    return out


def generate_cl(sys: SystemSpec, kind: str, policy=DEFAULT_POLICY, **inputs) -> ConservationLaw:
    """Assemble the Darboux-family conservation laws.

    kind "1s": omega = I*sigma_l for s=0, else sigma_l wedged with the
    given X_i,X_j-invariant contact forms (verified first).
    kind "2s": omega = pi^{2,s}(dJ_1^...^dJ_{s+2}) (+ the K-family term),
    the J_n, K_n being X_l-invariant sequences.
    """
    n = sys.n
    if kind == "1s":
        l = inputs["l"]
        others = [m for m in range(1, n + 1) if m != l]
        alphas = inputs.get("alphas") or []
        if not alphas:
            I = inputs["I"]
            for a in others:
                r = total_derivative(I, TotalVectorField(a), sys)
                if not mixed_verdict(r, sys, max(3, _eorder(I) + 1), policy).zeroish:
                    raise ValueError(f"I is not X{a}-invariant")
            omega = BiForm.sigma(l, n).scale(I)
        else:
            for t, alpha in enumerate(alphas):
                for a in others:
                    w = lie(TotalVectorField(a), alpha, sys)
                    if not _form_verdict(w, sys, policy).zeroish:
                        raise ValueError(f"alpha_{t + 1} is not X{a}-invariant")
            omega = BiForm.sigma(l, n)
            for alpha in alphas:
                omega = wedge(omega, alpha)
        prov = {"generator": "darboux-1s", "l": l, "s": len(alphas)}
    elif kind == "2s":
        if n != 3:
            raise ValueError("the (2,s) generator requires three variables; "
                             "only (1,s) laws are offered for n = 2")
        l = inputs["l"]
        s = inputs["s"]
        omega = BiForm.zero(n, 2, s)
        for seq_key in ("J_seq", "K_seq"):
            seq = inputs.get(seq_key)
            if not seq:
                continue
            if len(seq) != s + 2:
                raise ValueError(f"{seq_key} must hold s + 2 functions")
            for t, f in enumerate(seq):
                r = total_derivative(f, TotalVectorField(l), sys)
                if not mixed_verdict(r, sys, max(3, _eorder(f) + 1), policy).zeroish:
                    raise ValueError(f"{seq_key}[{t}] is not X{l}-invariant")
            omega = omega + _pi_projection(seq, sys, 2)
        prov = {"generator": "darboux-2s", "l": l, "s": s}
    else:
        raise ValueError(f"unknown generator kind {kind!r}")
    closure = (ZeroVerdict.zero() if omega.is_zero
               else verify_closed(omega, sys, policy))
    order = None
    cf = inputs.get("coframe")
    if cf is not None:
        try:
            order = _adapted_order_or_none(omega, cf, policy)
        except ValueError:
            order = None
    return ConservationLaw(omega, closure, None, order, prov)
