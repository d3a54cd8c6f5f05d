"""Symbol classification for involutive three-equation systems.

The symbol data consists of three quadratic forms M^k in the variables
xi^1..xi^3 whose associated nine cubic forms xi^i M^k admit at least two
linear relations.  The pencil of relations l + z*m yields a 3x3
coefficient matrix whose determinant is a cubic in z; the projective root
multiplicity pattern assigns the structural class:

    (i)   three simple roots          (ii)  one double + one simple
    (iii) one triple root             (iv/v) identically vanishing pencil

Degree drop is a root at infinity with the complementary multiplicity.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np

from . import expr as ex
from .expr import Coordinate, Expr

__all__ = [
    "SymbolData",
    "ClassificationResult",
    "SymbolError",
    "symbol_relations",
    "classify",
    "pair_symbol_forms",
    "FORM_12_RELATIONS",
]

_MONOMIALS = list(combinations_with_replacement((1, 2, 3), 3))


class SymbolError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolData:
    """Quadratic forms M^k plus a verified two-element relation basis.

    M[k] is a symmetric 3x3 matrix of Fraction (or x-only Expr) entries;
    each relation is a triple of linear forms given as coefficient rows
    (l^1, l^2, l^3) with l^k = sum_m l[k][m] * xi^m.
    """

    M: tuple
    relations: tuple
    kernel_dim: int

    @property
    def degenerate_kernel(self) -> bool:
        return self.kernel_dim > 2


@dataclass(frozen=True)
class ClassificationResult:
    cubic: tuple          # determinant coefficients, ascending in z
    pattern: tuple        # root multiplicities, descending
    case: str             # "i" | "ii" | "iii" | "iv-v"
    probabilistic: bool = False

    def to_json(self):
        return {
            "cubic": [_entry_repr(c) for c in self.cubic],
            "multiplicities": list(self.pattern),
            "case": self.case,
            "certainty": "probabilistic" if self.probabilistic else "exact",
        }


def _entry_repr(c):
    if isinstance(c, Fraction):
        return str(c) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
    return repr(c)


def _is_exprish(entries) -> bool:
    return any(isinstance(e, Expr) for e in entries)


def _as_field(v):
    return v if isinstance(v, (Fraction, Expr)) else Fraction(v)


def _f_zero(v) -> bool:
    if isinstance(v, Expr):
        from .zerotest import rational_numerator

        p, _ = rational_numerator(v)
        return not p
    return v == 0


def _f_add(a, b):
    if isinstance(a, Expr) or isinstance(b, Expr):
        return ex.add(_to_expr(a), _to_expr(b))
    return a + b


def _f_mul(a, b):
    if isinstance(a, Expr) or isinstance(b, Expr):
        return ex.mul(_to_expr(a), _to_expr(b))
    return a * b


def _f_div(a, b):
    if isinstance(a, Expr) or isinstance(b, Expr):
        return ex.div(_to_expr(a), _to_expr(b))
    return a / b


def _f_neg(a):
    return ex.neg(a) if isinstance(a, Expr) else -a


def _to_expr(v):
    return v if isinstance(v, Expr) else ex.rat(v)


def quadratic_to_poly(M) -> dict:
    """Quadratic-form matrix -> {(a,b) a<=b: coefficient}."""
    out = {}
    for a in range(3):
        for b in range(3):
            c = _as_field(M[a][b])
            if _f_zero(c):
                continue
            key = (min(a, b) + 1, max(a, b) + 1)
            out[key] = _f_add(out.get(key, Fraction(0)), c)
    return {k: v for k, v in out.items() if not _f_zero(v)}


def _cubic_column(m_index: int, quad: dict) -> dict:
    """xi_m * M as a cubic-monomial vector."""
    out = {}
    for (a, b), c in quad.items():
        key = tuple(sorted((m_index, a, b)))
        out[key] = _f_add(out.get(key, Fraction(0)), c)
    return out


def _nullspace(columns: list) -> list:
    """Kernel basis of the matrix with the given columns (exact)."""
    rows = sorted({mono for col in columns for mono in col})
    mat = [[col.get(r, Fraction(0)) for col in columns] for r in rows]
    ncols = len(columns)
    pivots = []
    rank_row = 0
    mat = [list(r) for r in mat]
    for col in range(ncols):
        pivot = None
        for r in range(rank_row, len(mat)):
            if not _f_zero(mat[r][col]):
                pivot = r
                break
        if pivot is None:
            continue
        mat[rank_row], mat[pivot] = mat[pivot], mat[rank_row]
        pv = mat[rank_row][col]
        mat[rank_row] = [_f_div(v, pv) for v in mat[rank_row]]
        for r in range(len(mat)):
            if r != rank_row and not _f_zero(mat[r][col]):
                factor = mat[r][col]
                mat[r] = [
                    _f_add(mat[r][cc], _f_neg(_f_mul(factor, mat[rank_row][cc])))
                    for cc in range(ncols)
                ]
        pivots.append(col)
        rank_row += 1
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * ncols
        vec[fc] = Fraction(1)
        for prow, pcol in enumerate(pivots):
            vec[pcol] = _f_neg(mat[prow][fc])
        basis.append(vec)
    return basis


def pair_symbol_forms() -> tuple:
    """The fixed symbol of systems u_ij = f_ij: xi1*xi2, xi2*xi3, xi1*xi3."""
    def mono(a, b):
        m = [[Fraction(0)] * 3 for _ in range(3)]
        m[a - 1][b - 1] = Fraction(1, 2)
        m[b - 1][a - 1] = _f_add(m[b - 1][a - 1], Fraction(1, 2))
        return tuple(tuple(r) for r in m)

    return (mono(1, 2), mono(2, 3), mono(1, 3))


# Normalized relation basis for the u_ij = f_ij symbol:
# (l) = (xi3, -xi1, 0) and (m) = (xi3, xi1, -2*xi2).
FORM_12_RELATIONS = (
    ((Fraction(0), Fraction(0), Fraction(1)),
     (Fraction(-1), Fraction(0), Fraction(0)),
     (Fraction(0), Fraction(0), Fraction(0))),
    ((Fraction(0), Fraction(0), Fraction(1)),
     (Fraction(1), Fraction(0), Fraction(0)),
     (Fraction(0), Fraction(-2), Fraction(0))),
)


def _verify_relation(M, rel) -> bool:
    total: dict = {}
    for k in range(3):
        quad = quadratic_to_poly(M[k])
        for m in range(3):
            c = rel[k][m]
            if _f_zero(c):
                continue
            for mono, qc in _cubic_column(m + 1, quad).items():
                total[mono] = _f_add(total.get(mono, Fraction(0)), _f_mul(c, qc))
    return all(_f_zero(v) for v in total.values())


def symbol_relations(M=None, sys=None) -> SymbolData:
    """Relation basis for a symbol: exact kernel of the 9 -> 10 cubic map.

    For a system of the standard shape the symbol is the fixed
    monomial triple and the normalized basis above is returned
    (verified, not assumed).
    """
    if sys is not None:
        M = pair_symbol_forms()
        fixed = True
    elif M is None:
        raise SymbolError("provide either symbol matrices or a system")
    else:
        M = tuple(tuple(tuple(_as_field(v) for v in row) for row in mk) for mk in M)
        fixed = False
    columns = []
    for k in range(3):
        quad = quadratic_to_poly(M[k])
        for m in (1, 2, 3):
            columns.append(_cubic_column(m, quad))
    basis = _nullspace(columns)
    dim = len(basis)
    if dim < 2:
        raise SymbolError(
            f"relation kernel has dimension {dim} < 2: non-involutive symbol data"
        )
    if fixed:
        relations = FORM_12_RELATIONS
    else:
        relations = tuple(
            tuple(tuple(vec[3 * k + m] for m in range(3)) for k in range(3))
            for vec in basis[:2]
        )
    for rel in relations:
        if not _verify_relation(M, rel):
            raise SymbolError("relation basis fails Sum(l^k M^k) = 0")
    return SymbolData(M=M, relations=relations, kernel_dim=dim)


# ---------------------------------------------------------------------------
# Pencil determinant and multiplicity pattern


def _poly_trim(p):
    while p and _f_zero(p[-1]):
        p.pop()
    return p


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1) if a and b else []
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] = _f_add(out[i + j], _f_mul(x, y))
    return _poly_trim(out)


def _poly_add(a, b, sign=1):
    out = [Fraction(0)] * max(len(a), len(b))
    for i, x in enumerate(a):
        out[i] = _f_add(out[i], x)
    for i, y in enumerate(b):
        out[i] = _f_add(out[i], _f_mul(Fraction(sign), y))
    return _poly_trim(out)


def _pencil_determinant(l, m):
    """det over rows k of (l^k + z m^k) as a polynomial in z (ascending)."""
    entries = [[( [l[k][c]], [Fraction(0), m[k][c]] ) for c in range(3)]
               for k in range(3)]
    # each entry as polynomial l + z*m
    P = [[_poly_add(entries[k][c][0], entries[k][c][1]) for c in range(3)]
         for k in range(3)]
    from itertools import permutations

    det = []
    for perm in permutations(range(3)):
        inv = sum(1 for i in range(3) for j in range(i + 1, 3) if perm[i] > perm[j])
        sign = -1 if inv % 2 else 1
        term = [Fraction(sign)]
        for r in range(3):
            term = _poly_mul(term, P[r][perm[r]])
            if not term:
                break
        det = _poly_add(det, term)
    return _poly_trim(det)


def _frac_poly_gcd(a, b):
    a, b = list(a), list(b)
    while b:
        # a mod b
        a = list(a)
        while len(a) >= len(b) and a:
            factor = a[-1] / b[-1]
            shift = len(a) - len(b)
            for i, c in enumerate(b):
                a[i + shift] -= factor * c
            _poly_trim(a)
        a, b = b, a
    if a:
        lead = a[-1]
        a = [c / lead for c in a]
    return a


def _finite_multiplicity_pattern(p) -> list:
    """Multiplicity partition of the finite roots of p (deg <= 3)."""
    deg = len(p) - 1
    if deg <= 0:
        return []
    dp = _poly_trim([p[i] * i for i in range(1, len(p))])
    g = _frac_poly_gcd(p, dp)
    repeated = len(g) - 1
    if deg == 1:
        return [1]
    if deg == 2:
        return [2] if repeated == 1 else [1, 1]
    if repeated == 0:
        return [1, 1, 1]
    if repeated == 1:
        return [2, 1]
    return [3]


def _sampled_pattern(l, m, samples=5, seed=0) -> tuple:
    """Root pattern by numeric sampling of x-dependent pencil entries."""
    import random

    rng = random.Random(seed)
    patterns = set()
    for _ in range(samples):
        point = {}
        values = {Coordinate.x(i): rng.uniform(1.0, 2.0) + i for i in (1, 2, 3)}
        point.update(values)

        def num(v):
            return float(v) if isinstance(v, Fraction) else ex.evaluate(v, point)

        ln = [[num(l[k][c]) for c in range(3)] for k in range(3)]
        mn = [[num(m[k][c]) for c in range(3)] for k in range(3)]
        # det(L + zM) coefficients by interpolation at four nodes
        zs = np.array([0.0, 1.0, -1.0, 2.0])
        vals = [np.linalg.det(np.array(ln) + z * np.array(mn)) for z in zs]
        V = np.vander(zs, 4, increasing=True)
        coeffs = np.linalg.solve(V, np.array(vals))
        if np.allclose(coeffs, 0.0, atol=1e-10):
            return ("degenerate",)
        c = np.trim_zeros(coeffs, "b")
        deg = len(c) - 1
        finite = np.roots(c[::-1]) if deg >= 1 else np.array([])
        mult = []
        used = [False] * len(finite)
        for a in range(len(finite)):
            if used[a]:
                continue
            count = 1
            used[a] = True
            for b in range(a + 1, len(finite)):
                if not used[b] and abs(finite[a] - finite[b]) < 1e-5 * (1 + abs(finite[a])):
                    used[b] = True
                    count += 1
            mult.append(count)
        if deg < 3:
            mult.append(3 - deg)
        patterns.add(tuple(sorted(mult, reverse=True)))
    if len(patterns) != 1:
        # degenerations happen on thin x-sets; the generic reading is the
        # one with the most distinct roots
        return max(patterns, key=len)
    return patterns.pop()


def classify(data: SymbolData, seed: int = 0) -> ClassificationResult:
    """Assign the structural case from the relation pencil determinant."""
    if len(data.relations) < 2:
        raise SymbolError("classification needs a rank-2 relation basis")
    l, m = data.relations[0], data.relations[1]
    entries = [v for row in l + m for v in row]
    if _is_exprish(entries):
        pattern = _sampled_pattern(l, m, seed=seed)
        if pattern == ("degenerate",):
            return ClassificationResult((), (), "iv-v", probabilistic=True)
        case = {(1, 1, 1): "i", (2, 1): "ii", (3,): "iii"}.get(pattern, "iv-v")
        return ClassificationResult((), tuple(pattern), case, probabilistic=True)
    det = _pencil_determinant(l, m)
    if not det:
        return ClassificationResult((), (), "iv-v")
    pattern = _finite_multiplicity_pattern(det)
    deg = len(det) - 1
    if deg < 3:
        pattern.append(3 - deg)
    pattern = tuple(sorted(pattern, reverse=True))
    case = {(1, 1, 1): "i", (2, 1): "ii", (3,): "iii"}.get(pattern, "iv-v")
    return ClassificationResult(tuple(det), pattern, case)
