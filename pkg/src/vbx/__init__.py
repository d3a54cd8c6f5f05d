"""Symbolic engine for semi-linear hyperbolic PDE systems u_ij = f_ij.

Linearization, the generalized Laplace cascade, bi-graded forms on the
restricted equation manifold, conservation-law construction and
verification, Darboux-pair checking, and symbol classification.

The usual entry points:

    from vbx import load_system, linearize, invariants, parse
    sys = load_system({"n": 2, "f12": "exp(u)"})
    H = invariants(linearize(sys)).H[(1, 2)]
"""

__version__ = "0.1.0"

from .parser import parse, unparse  # noqa: E402
from .zerotest import Sampled, ExactOnly, ZeroVerdict, is_zero  # noqa: E402
from .jets import (  # noqa: E402
    JetPoint,
    SystemSpec,
    TotalVectorField,
    check_involutive,
    load_system,
    reduce,
    sample_point,
    total_derivative,
)
from .forms import BiForm, d_H, d_V, interior, lie, wedge  # noqa: E402
from .laplace import (  # noqa: E402
    AdjointSystem,
    LaplaceIndex,
    LaplaceInvariants,
    LinearizedSystem,
    adjoint,
    apply_operator,
    compatibility,
    index,
    invariants,
    inverse_check,
    linearize,
    transform,
)
from .coframe import (  # noqa: E402
    AdaptedCoframe,
    adapted_order,
    bracket_check,
    build_coframe,
    characteristic_coframe,
    structure_check,
)
from .conslaws import (  # noqa: E402
    ConservationLaw,
    InvariantBundle,
    RhoTriple,
    conslaw_from_rho,
    darboux_check,
    generate_cl,
    invariant_contact_form,
    invariant_sequence,
    is_relative_invariant,
    psi,
    rescale_characteristics,
    verify_closed,
)
from .classify import ClassificationResult, SymbolData, classify, symbol_relations  # noqa: E402
