"""Equation manifold: validation, reduction, total derivatives, sampling."""

import pytest

from vbx import expr as ex
from vbx.expr import Coordinate
from vbx.jets import (
    OrderBudgetError,
    SystemValidationError,
    TotalVectorField,
    check_involutive,
    eval_at,
    load_system,
    numeric_verdict,
    reduce,
    reduce_via,
    sample_point,
    total_derivative,
)
from vbx.parser import parse
from vbx.zerotest import Sampled, is_zero

D1, D2, D3 = (TotalVectorField(i) for i in (1, 2, 3))


class TestLoadSystem:
    def test_cubic_valid(self, cubic):
        assert cubic.n == 3
        assert cubic.pairs() == [(1, 2), (1, 3), (2, 3)]

    def test_forbidden_coordinate(self):
        with pytest.raises(SystemValidationError, match="u3"):
            load_system({"n": 3, "f12": "u3", "f13": "0", "f23": "0"})

    def test_second_order_rejected(self):
        with pytest.raises(SystemValidationError, match="u11"):
            load_system({"n": 2, "f12": "u11"})

    def test_liouville_valid(self, liouville):
        assert liouville.n == 2
        assert liouville.rhs(1, 2) == parse("exp(u)", 2)

    def test_missing_pair(self):
        with pytest.raises(SystemValidationError, match="f23"):
            load_system({"n": 3, "f12": "0", "f13": "0"})

    def test_bad_n(self):
        with pytest.raises(SystemValidationError):
            load_system({"n": 4, "f12": "0"})


class TestReduce:
    def test_defining_relation(self, cubic):
        got = reduce(ex.coord(Coordinate.u([1, 2])), cubic)
        assert is_zero(got - cubic.rhs(1, 2)).kind == "zero"

    def test_pure_unchanged(self, cubic):
        e = ex.coord(Coordinate.u([1, 1]))
        assert reduce(e, cubic) == e

    def test_idempotent(self, cubic):
        e = reduce(parse("u123 + u*u12"), cubic)
        assert reduce(e, cubic) == e

    def test_third_order_routes_agree(self, cubic):
        c = Coordinate.u([1, 2, 3])
        a = reduce_via(cubic, c, (1, 2))
        b = reduce_via(cubic, c, (2, 3))
        assert is_zero(ex.sub(a, b)).kind == "zero"
        assert numeric_verdict([ex.sub(a, b)], cubic, 3).zeroish

    @pytest.mark.parametrize("index", [
        (1, 1, 2), (1, 2, 2), (1, 1, 2, 3), (1, 2, 2, 3, 3), (1, 1, 1, 2, 3),
    ])
    def test_pair_independence_to_order_five(self, cubic, index):
        c = Coordinate.u(index)
        distinct = sorted(set(index))
        routes = [(i, j) for i in distinct for j in distinct if i < j]
        base = reduce_via(cubic, c, routes[0])
        for route in routes[1:]:
            other = reduce_via(cubic, c, route)
            v = numeric_verdict([ex.sub(base, other)], cubic, len(index),
                                Sampled(points=20, tol=1e-9))
            assert v.zeroish, f"routes {routes[0]} vs {route} disagree"


class TestTotalDerivative:
    def test_base_case(self, cubic):
        assert total_derivative(parse("u"), D1, cubic) == parse("u1")

    def test_mixed_substitution(self, kt):
        got = total_derivative(parse("u2"), D1, kt)
        assert is_zero(got - kt.rhs(1, 2)).kind == "zero"

    def test_cross_check_against_reduce(self, cubic):
        lhs = total_derivative(parse("u11"), D2, cubic)
        rhs = reduce(ex.coord(Coordinate.u([1, 1, 2])), cubic)
        assert is_zero(ex.sub(lhs, rhs)).kind == "zero"

    def test_commutation(self, cubic):
        for e in (parse("u*u1"), parse("u2^2 + x1"), parse("u3/(u+1)")):
            ab = total_derivative(total_derivative(e, D1, cubic), D2, cubic)
            ba = total_derivative(total_derivative(e, D2, cubic), D1, cubic)
            assert is_zero(ex.sub(ab, ba)).kind == "zero"

    def test_rescaled_field(self, cubic):
        X = TotalVectorField(1, parse("x2"))
        got = total_derivative(parse("u"), X, cubic)
        assert is_zero(got - parse("x2*u1")).kind == "zero"

    def test_zero_factor_rejected(self):
        with pytest.raises(SystemValidationError):
            TotalVectorField(1, ex.ZERO)

    def test_order_budget(self, cubic):
        tight = cubic.with_budget(2)
        with pytest.raises(OrderBudgetError):
            total_derivative(parse("u11"), D1, tight)


class TestInvolutivity:
    def test_cubic_passes(self, cubic):
        assert check_involutive(cubic).passed

    def test_kt_passes(self, kt):
        assert check_involutive(kt).passed

    def test_kt01_passes(self, kt01):
        assert check_involutive(kt01).passed

    def test_n2_trivial(self, liouville):
        rep = check_involutive(liouville)
        assert rep.passed and rep.rows == ()

    def test_negative_control(self):
        # f13 couples x3 into D3(f12) while D1(f23) stays zero
        bad = load_system({"n": 3, "f12": "u1*u2", "f13": "u1", "f23": "0"})
        rep = check_involutive(bad)
        assert not rep.passed
        w = rep.witness()
        assert w.identity == "D3(f12) - D1(f23)"
        assert is_zero(w.residual - parse("u1*u2")).kind == "zero"


class TestSamplePoint:
    def test_deterministic(self, cubic):
        a = sample_point(cubic, 2, seed=11)
        b = sample_point(cubic, 2, seed=11)
        assert a.values == b.values

    def test_census_order_two(self, cubic):
        pt = sample_point(cubic, 2, seed=0)
        names = {c.name() for c in pt.coordinates()}
        assert names == {"x1", "x2", "x3", "u",
                         "u1", "u2", "u3", "u11", "u22", "u33"}

    def test_box_exclusions(self, cubic):
        for seed in range(30):
            pt = sample_point(cubic, 1, seed=seed)
            uval = pt[Coordinate.u()]
            assert abs(uval) >= 0.1 and abs(uval + 1) >= 0.1

    def test_eval_at(self, cubic):
        pt = sample_point(cubic, 1, seed=3)
        v = eval_at(parse("u1 + u2"), pt)
        assert v == pytest.approx(pt[Coordinate.u([1])] + pt[Coordinate.u([2])])


class TestConcurrency:
    def test_reduce_memo_thread_safe(self, cubic):
        import threading

        results = {}
        errors = []

        def worker(tid):
            try:
                out = []
                for idx in ((1, 2, 3), (1, 1, 2), (1, 2, 2, 3), (1, 1, 2, 3)):
                    out.append(reduce(ex.coord(Coordinate.u(idx)), cubic))
                results[tid] = out
            except Exception as err:  # pragma: no cover
                errors.append(err)

        threads = [threading.Thread(target=worker, args=(t,)) for t in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        first = results[0]
        for tid, out in results.items():
            for a, b in zip(first, out):
                assert is_zero(ex.sub(a, b)).kind == "zero"
