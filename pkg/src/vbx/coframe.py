"""Characteristic and Laplace-adapted coframes with verification oracles.

The adapted coframe is built branch by branch: level one applies the
directed Laplace substitution xi_j = X_j(Theta) + A_ij^i Theta for a
chosen index i(j), deeper levels follow the transformed-coefficient
recursion until the branch's Laplace invariant dies, then plain X_j
iteration.  The change of basis from the coordinate contact forms is
triangular with diagonal mu, which is what makes adapted-order
computation and the dual vector fields U, V_k^l well defined.

structure_check and bracket_check verify the coframe's d_H structure
equations and Lie bracket congruences.  The expected right-hand sides are
assembled independently from the cached transform trail; cross-branch
rows carry the H_ijk coupling term that the vanishing-invariant examples
hide (it collapses onto the bare textbook rows whenever those invariants
are zero).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from .expr import Expr
from .forms import BiForm, lie, THETA
from .jets import SystemSpec, TotalVectorField, mixed_verdict
from .laplace import (
    InvariantVanishesError,
    LinearizedSystem,
    invariants,
    transform,
)
from .zerotest import DEFAULT_POLICY, ZeroVerdict, rational_numerator, worst

__all__ = [
    "AdaptedCoframe",
    "AdaptedDual",
    "CoframeBlockedError",
    "build_coframe",
    "characteristic_coframe",
    "adapted_order",
    "structure_check",
    "bracket_check",
]


class CoframeBlockedError(RuntimeError):
    def __init__(self, which: str, branch: int, step: int):
        super().__init__(
            f"coframe branch {branch} blocked at step {step}: "
            f"invariant {which} has no usable verdict"
        )
        self.which = which
        self.branch = branch
        self.step = step


@dataclass(frozen=True)
class AdaptedDual:
    """U (branch 0, level 0) or V_k^l, dual to the adapted contact basis."""

    coframe: "AdaptedCoframe"
    branch: int
    level: int

    def __repr__(self):
        if (self.branch, self.level) == (0, 0):
            return "U"
        return f"V_{self.branch}^{self.level}"


class AdaptedCoframe:
    def __init__(self, lin: LinearizedSystem, order: int, branch_choice: dict,
                 theta: BiForm, xi: dict, trails: dict, branch_index: dict):
        self.lin = lin
        self.order = order
        self.branch_choice = dict(branch_choice)
        self.theta = theta            # Theta = mu * theta
        self.xi = dict(xi)            # (j, m) -> BiForm, 1 <= m <= order
        self.trails = dict(trails)    # j -> [L^0, L^1, ...]
        self.branch_index = dict(branch_index)  # j -> p_j or None (>= order)
        self._leg_components: dict = {}

    @property
    def n(self) -> int:
        return self.lin.n

    def element(self, branch: int, level: int) -> BiForm:
        if level == 0:
            return self.theta
        return self.xi[(branch, level)]

    def elements(self):
        out = [((0, 0), self.theta)]
        for m in range(1, self.order + 1):
            for j in range(1, self.n + 1):
                out.append(((j, m), self.xi[(j, m)]))
        return out

    def U(self) -> AdaptedDual:
        return AdaptedDual(self, 0, 0)

    def V(self, branch: int, level: int) -> AdaptedDual:
        if not (1 <= branch <= self.n and 1 <= level <= self.order):
            raise ValueError(f"no dual V_{branch}^{level} at order {self.order}")
        return AdaptedDual(self, branch, level)

    def recursion_coefficient(self, j: int, m: int) -> Expr:
        """Coefficient of xi_j^m inside xi_j^{m+1} = X_j(xi_j^m) + c*xi_j^m."""
        trail = self.trails[j]
        p = self.branch_index[j]
        in_recursion = m < len(trail) and (p is None or m <= p)
        if in_recursion:
            return trail[m].A(self.branch_choice[j], j)
        return ex.ZERO

    # -- change of basis ----------------------------------------------------
    def leg_components(self, leg) -> dict:
        """Expand a coordinate contact basis leg over the adapted basis."""
        hit = self._leg_components.get(leg)
        if hit is not None:
            return hit
        comps = self._expand({leg: ex.ONE})
        self._leg_components[leg] = comps
        return comps

    def _expand(self, coeffs: dict) -> dict:
        work = {leg: c for leg, c in coeffs.items() if not c.is_zero_literal}
        mu_inv = ex.pw(self.lin.mu, -1)
        out = {}
        for level in range(self.order, 0, -1):
            for j in range(1, self.n + 1):
                leg = (j, level)
                c = work.get(leg)
                if c is None or c.is_zero_literal:
                    continue
                a = ex.mul(c, mu_inv)
                p, _ = rational_numerator(a)
                if not p:
                    work.pop(leg, None)
                    continue
                out[(j, level)] = a
                for (h, legs), coef in self.xi[(j, level)].terms.items():
                    l = legs[0]
                    prev = work.get(l, ex.ZERO)
                    nxt = ex.sub(prev, ex.mul(a, coef))
                    pn, _ = rational_numerator(nxt)
                    if not pn:
                        work.pop(l, None)
                    else:
                        work[l] = nxt
        theta_c = work.pop(THETA, None)
        if theta_c is not None:
            a = ex.mul(theta_c, mu_inv)
            p, _ = rational_numerator(a)
            if p:
                out[(0, 0)] = a
        leftovers = {l: c for l, c in work.items()
                     if rational_numerator(c)[0]}
        if leftovers:
            names = sorted(leftovers)
            raise ValueError(
                f"coframe order {self.order} insufficient: "
                f"unresolved contact legs {names}"
            )
        return out

    def to_adapted(self, omega: BiForm) -> dict:
        """Components of a (0,1) form over {Theta, xi_j^m}."""
        if (omega.r, omega.s) != (0, 1):
            raise ValueError("adapted expansion is defined for (0,1) forms")
        coeffs = {legs[0]: c for (h, legs), c in omega.terms.items()}
        return self._expand(coeffs)

    def interior_dual(self, V: AdaptedDual, omega: BiForm) -> BiForm:
        """Interior product with U or V_k^l via the triangular basis change."""
        want = (V.branch, V.level)
        max_level = max([V.level] + [k for (_, c), _ in omega.terms.items()
                                     for (_, k) in c] if omega.terms else [V.level])
        if max_level > self.order:
            raise ValueError(
                f"coframe order {self.order} insufficient for interior product"
            )
        n = omega.n
        out = BiForm.zero(n, omega.r, max(omega.s - 1, 0))
        for (h, c), coeff in omega.terms.items():
            for t, leg in enumerate(c):
                a = self.leg_components(leg).get(want)
                if a is None:
                    continue
                sign = ex.rat((-1) ** (len(h) + t))
                key = (h, c[:t] + c[t + 1:])
                out = out + BiForm(n, omega.r, omega.s - 1,
                                   {key: ex.mul(sign, a, coeff)})
        return out


def default_branch_choice(n: int) -> dict:
    return {j: min(i for i in range(1, n + 1) if i != j) for j in range(1, n + 1)}


def build_coframe(lin: LinearizedSystem, order: int, branch_choice=None,
                  policy=DEFAULT_POLICY) -> AdaptedCoframe:
    """Construct the Laplace-adapted coframe up to the given order."""
    sys = lin.sys
    n = lin.n
    if order < 1:
        raise ValueError("coframe order must be at least 1")
    choice = dict(default_branch_choice(n))
    if branch_choice:
        choice.update(branch_choice)
    for j, i in choice.items():
        if i == j or not (1 <= i <= n):
            raise ValueError(f"invalid branch choice i({j}) = {i}")
    theta = lin.theta_form()
    xi: dict = {}
    trails: dict = {}
    branch_index: dict = {}
    for j in range(1, n + 1):
        i = choice[j]
        trail = [lin]
        p = None
        for step in range(order):
            H = invariants(trail[-1]).H[(i, j)]
            v = mixed_verdict(H, sys, max(2, _order_of(H)), policy)
            if v.zeroish:
                p = step
                break
            if step == order - 1:
                break
            try:
                trail.append(transform(trail[-1], (i, j), policy))
            except InvariantVanishesError as err:
                raise CoframeBlockedError(err.which, j, step) from err
        trails[j] = trail
        branch_index[j] = p
        Xj = TotalVectorField(j)
        prev = theta
        for m in range(1, order + 1):
            nxt = lie(Xj, prev, sys)
            in_recursion = (m - 1) < len(trail) and (p is None or (m - 1) <= p)
            if in_recursion:
                nxt = nxt + prev.scale(trail[m - 1].A(i, j))
            lead = nxt.coefficient((), ((j, m),))
            if not mixed_verdict(ex.sub(lead, lin.mu), sys, m + 1, policy).zeroish:
                raise CoframeBlockedError(f"triangularity at xi_{j}^{m}", j, m)
            xi[(j, m)] = nxt
            prev = nxt
    return AdaptedCoframe(lin, order, choice, theta, xi, trails, branch_index)


def _order_of(e: Expr) -> int:
    return max((c.order for c in ex.free_coordinates(e)), default=0)


def characteristic_coframe(lin: LinearizedSystem, order: int,
                           policy=DEFAULT_POLICY) -> dict:
    """The plain derivative coframe xi_i^k = X_i^k(Theta)."""
    theta = lin.theta_form()
    out = {(0, 0): theta}
    for i in range(1, lin.n + 1):
        prev = theta
        for k in range(1, order + 1):
            prev = lie(TotalVectorField(i), prev, lin.sys)
            lead = prev.coefficient((), ((i, k),))
            if not mixed_verdict(ex.sub(lead, lin.mu), lin.sys, k + 1, policy).zeroish:
                raise CoframeBlockedError(f"triangularity at xi_{i}^{k}", i, k)
            out[(i, k)] = prev
    return out


def characteristic_structure_residual(lin: LinearizedSystem, cf: dict) -> BiForm:
    """Residual of d_H(Theta) = sigma_1^xi_1^1 + ... for the plain coframe."""
    from .forms import d_H, wedge

    n = lin.n
    resid = d_H(cf[(0, 0)], lin.sys)
    for i in range(1, n + 1):
        resid = resid - wedge(BiForm.sigma(i, n), cf[(i, 1)])
    return resid


def adapted_order(omega: BiForm, cf: AdaptedCoframe, policy=DEFAULT_POLICY) -> int:
    """Minimal k with omega in the span of {sigma, Theta, xi^(<=k)}."""
    if omega.coordinate_order() > cf.order:
        raise ValueError("coframe order insufficient for this form")
    out = 0
    for (h, c), coeff in omega.terms.items():
        for leg in c:
            for (b, lvl), comp in cf.leg_components(leg).items():
                v = mixed_verdict(ex.mul(coeff, comp), cf.lin.sys,
                                  max(2, lvl + 1), policy)
                if not v.zeroish:
                    out = max(out, lvl)
    return out


# ---------------------------------------------------------------------------
# Structure-equation oracle


@dataclass(frozen=True)
class StructureRow:
    element: tuple      # (branch, level); (0,0) is Theta
    direction: int
    kind: str           # "exact" | "congruence"
    verdict: ZeroVerdict


@dataclass(frozen=True)
class StructureReport:
    rows: tuple
    passed: bool


def _form_verdict(form: BiForm, sys: SystemSpec, policy) -> ZeroVerdict:
    if form.is_zero:
        return ZeroVerdict.zero()
    order = max(3, form.coordinate_order())
    return worst(mixed_verdict(c, sys, order, policy) for c in form.terms.values())


def structure_check(cf: AdaptedCoframe, lin: LinearizedSystem, upto: int,
                    policy=DEFAULT_POLICY) -> StructureReport:
    """Verify the coframe's d_H structure equations up to the given level.

    Every sigma_i cofactor of d_H(element), computed as X_i(element) by the
    engine, is matched against the closed form built from the cached
    transform trail: branch rows and first-level cross rows are exact; the
    stabilized zone is a congruence checked modulo forms of lower adapted
    order (cross rows modulo everything below the element's level).
    """
    if upto + 1 > cf.order:
        raise ValueError("structure_check needs coframe order >= upto + 1")
    sys = lin.sys
    n = lin.n
    rows = []
    # d_H Theta row, per direction
    for j in range(1, n + 1):
        computed = lie(TotalVectorField(j), cf.theta, sys)
        expected = cf.element(j, 1) - cf.theta.scale(cf.recursion_coefficient(j, 0))
        rows.append(StructureRow(
            (0, 0), j, "exact", _form_verdict(computed - expected, sys, policy)))
    for m in range(1, upto + 1):
        for j in range(1, n + 1):
            el = cf.element(j, m)
            trail = cf.trails[j]
            i0 = cf.branch_choice[j]
            for i in range(1, n + 1):
                computed = lie(TotalVectorField(i), el, sys)
                if i == j:
                    expected = cf.element(j, m + 1) - el.scale(
                        cf.recursion_coefficient(j, m))
                    rows.append(StructureRow(
                        (j, m), i, "exact",
                        _form_verdict(computed - expected, sys, policy)))
                    continue
                if i == i0 and (m - 1) < len(trail):
                    L = trail[m - 1]
                    H = invariants(L).H[(i0, j)]
                    expected = (cf.element(j, m - 1).scale(H)
                                - el.scale(L.A(j, i0)))
                    rows.append(StructureRow(
                        (j, m), i, "exact",
                        _form_verdict(computed - expected, sys, policy)))
                    continue
                if i != i0 and m == 1:
                    # first-level cross row, exact with the coupling term
                    L = trail[0]
                    W = ex.add(
                        L.D(i, L.A(i0, j)),
                        ex.neg(L.C(j, i)),
                        ex.mul(L.A(j, i), L.A(i0, j)),
                    )
                    expected = (
                        el.scale(ex.neg(L.A(j, i)))
                        + lie(TotalVectorField(i), cf.theta, sys).scale(
                            ex.neg(invariants(L).Hk[(i0, j, i)]))
                        + cf.theta.scale(W)
                    )
                    rows.append(StructureRow(
                        (j, m), i, "exact",
                        _form_verdict(computed - expected, sys, policy)))
                    continue
                # stabilized / cross congruence: X_i(el) + A^j el has lower
                # adapted order than m
                L = trail[min(m - 1, len(trail) - 1)]
                resid = computed + el.scale(L.A(j, i))
                verdicts = []
                try:
                    comps = cf.to_adapted(resid)
                except ValueError:
                    rows.append(StructureRow(
                        (j, m), i, "congruence", ZeroVerdict.nonzero()))
                    continue
                for (b, lvl), comp in comps.items():
                    if lvl >= m:
                        verdicts.append(mixed_verdict(
                            comp, sys, max(3, lvl + 1), policy))
                rows.append(StructureRow(
                    (j, m), i, "congruence",
                    worst(verdicts) if verdicts else ZeroVerdict.zero()))
    return StructureReport(tuple(rows), all(r.verdict.zeroish for r in rows))


# ---------------------------------------------------------------------------
# Lie bracket congruence oracle


@dataclass(frozen=True)
class BracketRow:
    bracket: str
    component: tuple
    expected: Expr
    verdict: ZeroVerdict


@dataclass(frozen=True)
class BracketReport:
    rows: tuple
    passed: bool


def _bracket_components(cf: AdaptedCoframe, lin: LinearizedSystem, i: int,
                        V: AdaptedDual, upto: int):
    """omega([X_i, V]) for every coframe element omega up to a level.

    Uses (d_H omega)(X, V) = -omega([X, V]): the sigma_i cofactor of
    d_H(omega), computed as X_i(omega), paired against the dual V.
    """
    from .jets import TotalVectorField

    sys = lin.sys
    out = {}
    for (key, el) in cf.elements():
        if key != (0, 0) and key[1] > upto:
            continue
        cofactor = lie(TotalVectorField(i), el, sys)
        comps = cf.to_adapted(cofactor)
        a = comps.get((V.branch, V.level), ex.ZERO)
        out[key] = ex.neg(a)
    return out


def bracket_check(cf: AdaptedCoframe, lin: LinearizedSystem,
                  policy=DEFAULT_POLICY) -> BracketReport:
    """Verify the [X_1, U] and [X_1, V_1^1] bracket congruences.

    Expected components (mod total vector fields): [X_1, U] has U component
    A_{i1}^i and V_k^1 components -H_{1k}^0 for the branches seeded along
    X_1; [X_1, V_1^1] is -U plus the level-one recursion coefficient on
    V_1^1.  All other components up to the checkable order must vanish.
    """
    sys = lin.sys
    rows = []
    upto = cf.order - 1
    inv0 = invariants(lin)

    def expected_for(bracket: str):
        exp = {}
        if bracket == "U":
            exp[(0, 0)] = cf.recursion_coefficient(1, 0)
            for k in range(2, lin.n + 1):
                i0 = cf.branch_choice[k]
                if i0 == 1:
                    exp[(k, 1)] = ex.neg(inv0.H[(1, k)])
                else:
                    # cross-seeded branch: Theta component of X_1(xi_k^1)
                    W = ex.add(
                        lin.D(1, lin.A(i0, k)),
                        ex.neg(lin.C(k, 1)),
                        ex.mul(lin.A(k, 1), lin.A(i0, k)),
                    )
                    exp[(k, 1)] = ex.neg(ex.add(
                        ex.mul(inv0.Hk[(i0, k, 1)],
                               cf.recursion_coefficient(1, 0)),
                        W,
                    ))
        else:  # V_1^1
            exp[(0, 0)] = ex.MINUS_ONE
            exp[(1, 1)] = cf.recursion_coefficient(1, 1)
            for k in range(2, lin.n + 1):
                i0 = cf.branch_choice[k]
                if i0 != 1:
                    # the xi_1^1 component of the cross row resurfaces here
                    exp[(k, 1)] = inv0.Hk[(i0, k, 1)]
        return exp

    for name, dual in (("U", cf.U()), ("V_1^1", cf.V(1, 1))):
        computed = _bracket_components(cf, lin, 1, dual, upto)
        expected = expected_for(name)
        keys = set(computed) | set(expected)
        for key in sorted(keys):
            b, lvl = key
            if lvl >= 2 and b != 1 and cf.branch_choice.get(b) != 1:
                # cross-seeded branches gain coupling terms past level one;
                # the congruence pattern is only claimed where the branch
                # is seeded along the bracket direction
                continue
            resid = ex.sub(computed.get(key, ex.ZERO), expected.get(key, ex.ZERO))
            v = mixed_verdict(resid, sys, max(3, key[1] + 2), policy)
            rows.append(BracketRow(f"[X_1, {name}]", key, expected.get(key, ex.ZERO), v))
    return BracketReport(tuple(rows), all(r.verdict.zeroish for r in rows))
