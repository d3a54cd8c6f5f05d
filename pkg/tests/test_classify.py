"""Symbol relations and the pencil-determinant classification."""

import random
from fractions import Fraction

import pytest

from vbx.classify import (
    FORM_12_RELATIONS,
    SymbolData,
    SymbolError,
    classify,
    pair_symbol_forms,
    quadratic_to_poly,
    symbol_relations,
    _cubic_column,
    _verify_relation,
)
from vbx.parser import parse


def sym(entries):
    """Symmetric matrix from {(a,b): coeff} with 1-based indices."""
    m = [[Fraction(0)] * 3 for _ in range(3)]
    for (a, b), c in entries.items():
        if a == b:
            m[a - 1][a - 1] += Fraction(c)
        else:
            m[a - 1][b - 1] += Fraction(c, 2)
            m[b - 1][a - 1] += Fraction(c, 2)
    return tuple(tuple(r) for r in m)


CASE_III_FORMS = (sym({(1, 1): 1}), sym({(1, 2): 1}),
                  sym({(1, 3): 1, (2, 2): -1}))
CASE_II_FORMS = (sym({(1, 1): 1}), sym({(1, 3): 1}), sym({(2, 3): 1}))
CASE_IV_FORMS = (sym({(1, 1): 1}), sym({(1, 2): 1}), sym({(2, 2): 1}))


class TestRelations:
    def test_pair_system_uses_normalized_basis(self, cubic):
        data = symbol_relations(sys=cubic)
        assert data.kernel_dim == 2
        assert data.relations == FORM_12_RELATIONS

    def test_published_relations_hold(self):
        # (l) = (xi3, -xi1, 0) annihilates the monomial symbol
        M = pair_symbol_forms()
        assert _verify_relation(M, FORM_12_RELATIONS[0])
        assert _verify_relation(M, FORM_12_RELATIONS[1])

    def test_all_equal_forms_flagged_degenerate(self):
        M = (sym({(1, 1): 1}),) * 3
        data = symbol_relations(M=M)
        assert data.degenerate_kernel and data.kernel_dim > 2

    def test_generic_orbit_triples_have_kernel_dim_two(self):
        # dense symbols from random invertible changes of variables and
        # recombinations applied to the standard involutive symbol
        rng = random.Random(17)
        base = pair_symbol_forms()
        for trial in range(5):
            while True:
                T = [[Fraction(rng.randint(-2, 2)) for _ in range(3)]
                     for _ in range(3)]
                det = (T[0][0] * (T[1][1] * T[2][2] - T[1][2] * T[2][1])
                       - T[0][1] * (T[1][0] * T[2][2] - T[1][2] * T[2][0])
                       + T[0][2] * (T[1][0] * T[2][1] - T[1][1] * T[2][0]))
                if det != 0:
                    break
            transformed = []
            for mk in base:
                out = [[Fraction(0)] * 3 for _ in range(3)]
                for a in range(3):
                    for b in range(3):
                        for c in range(3):
                            for d in range(3):
                                out[a][b] += T[c][a] * mk[c][d] * T[d][b]
                transformed.append(tuple(tuple(r) for r in out))
            data = symbol_relations(M=tuple(transformed))
            assert data.kernel_dim == 2
            for rel in data.relations:
                assert _verify_relation(tuple(transformed), rel)

    def test_relation_verification_recomputed(self):
        # hand the classifier a wrong relation: verification must trip
        M = pair_symbol_forms()
        bogus = SymbolData(M, (FORM_12_RELATIONS[0],
                               ((Fraction(1), Fraction(0), Fraction(0)),) * 3), 2)
        assert not _verify_relation(M, bogus.relations[1])


class TestClassify:
    def test_pair_symbol_case_i(self, cubic):
        res = classify(symbol_relations(sys=cubic))
        assert res.case == "i"
        assert res.pattern == (1, 1, 1)
        # cubic proportional to (1+z)(1-z)(2z) = 2z - 2z^3
        assert res.cubic == (Fraction(0), Fraction(2), Fraction(0), Fraction(-2))

    def test_case_iii_triple_root(self):
        res = classify(symbol_relations(M=CASE_III_FORMS))
        assert res.case == "iii" and res.pattern == (3,)

    def test_case_ii(self):
        res = classify(symbol_relations(M=CASE_II_FORMS))
        assert res.case == "ii" and res.pattern == (2, 1)

    def test_degenerate_pencil(self):
        res = classify(symbol_relations(M=CASE_IV_FORMS))
        assert res.case == "iv-v" and res.cubic == ()

    def test_basis_change_stability(self):
        rng = random.Random(5)
        for M, want in ((pair_symbol_forms(), "i"), (CASE_III_FORMS, "iii"),
                        (CASE_II_FORMS, "ii")):
            data = symbol_relations(M=M) if M != pair_symbol_forms() else \
                SymbolData(M, FORM_12_RELATIONS, 2)
            l, m = data.relations
            for _ in range(4):
                while True:
                    a, b, c, d = (Fraction(rng.randint(-3, 3)) for _ in range(4))
                    if a * d - b * c != 0:
                        break
                l2 = tuple(tuple(a * l[k][q] + b * m[k][q] for q in range(3))
                           for k in range(3))
                m2 = tuple(tuple(c * l[k][q] + d * m[k][q] for q in range(3))
                           for k in range(3))
                recombined = SymbolData(M, (l2, m2), data.kernel_dim)
                assert classify(recombined).case == want

    def test_expr_coefficients_sampled(self):
        # x-dependent symbol entries take the probabilistic route
        x1 = parse("x1")
        M = (sym({(1, 1): 1}), sym({(1, 3): 1}), sym({(2, 3): 1}))
        data = symbol_relations(M=M)
        l, m = data.relations
        l_expr = tuple(tuple(parse("x1") if v == 1 else v for v in row)
                       for row in l)
        scaled = SymbolData(M, (l_expr, m), 2)
        res = classify(scaled)
        assert res.probabilistic
        assert res.case == "ii"

    def test_rank_guard(self):
        with pytest.raises(SymbolError):
            classify(SymbolData(pair_symbol_forms(), (FORM_12_RELATIONS[0],), 1))
