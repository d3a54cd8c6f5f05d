"""Command-line front end.

Subcommands ingest a system-spec JSON file, run one analysis, and emit a
report (pretty text by default, JSON with --json).  Exit status: 0 when
every verdict passes, 1 when some verdict fails or a cascade step is
inapplicable, 2 on malformed input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from . import expr as ex
from .forms import BiForm
from .jets import (
    OrderBudgetError,
    SystemValidationError,
    check_involutive,
    load_system,
)
from .laplace import (
    InvariantVanishesError,
    adjoint,
    index,
    invariants,
    linearize,
    transform,
)
from .parser import ParseError, parse, unparse
from .zerotest import Sampled

__all__ = ["main", "run"]


class InputError(Exception):
    pass


def _policy(args) -> Sampled:
    return Sampled(points=args.samples, tol=args.tol, seed=args.seed)


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise InputError(f"{path} is not valid JSON: {err}") from err


def _load_sys(args):
    doc = _load_json(args.spec)
    sys_ = load_system(doc)
    return sys_.with_budget(args.order_budget)


def _parse_dir(text: str):
    try:
        i, j = (int(p) for p in text.split(","))
    except ValueError:
        raise InputError(f"--dir expects 'i,j', got {text!r}") from None
    return i, j


def _parse_branch(text: str) -> dict:
    out = {}
    for piece in text.split(","):
        try:
            j, i = (int(p) for p in piece.split(":"))
        except ValueError:
            raise InputError(f"--branch expects 'j:i,...', got {text!r}") from None
        out[j] = i
    return out


def _emit(report: dict, args) -> None:
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=2))
        return
    def walk(obj, indent=0):
        pad = "  " * indent
        if isinstance(obj, dict):
            for k in obj:
                v = obj[k]
                if isinstance(v, (dict, list)):
                    print(f"{pad}{k}:")
                    walk(v, indent + 1)
                else:
                    print(f"{pad}{k}: {v}")
        elif isinstance(obj, list):
            for v in obj:
                if isinstance(v, (dict, list)):
                    walk(v, indent + 1)
                else:
                    print(f"{pad}- {v}")
    walk(report)


def _base_report(args, command: str) -> dict:
    return {
        "tool": "vbx",
        "version": __version__,
        "command": command,
        "seed": args.seed,
        "tolerance": args.tol,
        "samples": args.samples,
    }


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (report dict, passed bool)


def _cmd_check(args):
    sys_ = _load_sys(args)
    rep = check_involutive(sys_, _policy(args))
    rows = [
        {"identity": r.identity, "verdict": str(r.verdict)}
        for r in rep.rows
    ]
    out = {"involutive": rep.passed, "identities": rows}
    if not rep.passed:
        w = rep.witness()
        out["witness"] = {"identity": w.identity, "residual": unparse(w.residual)}
    return out, rep.passed


def _cmd_linearize(args):
    sys_ = _load_sys(args)
    mu = parse(args.mu, sys_.n) if args.mu else ex.ONE
    lin = linearize(sys_, mu, _policy(args))
    return {"coefficients": lin.to_json()}, True


def _cmd_invariants(args):
    sys_ = _load_sys(args)
    lin = linearize(sys_, ex.ONE, _policy(args))
    inv = invariants(lin)
    return {"invariants": inv.to_json()}, True


def _cmd_transform(args):
    sys_ = _load_sys(args)
    lin = linearize(sys_, ex.ONE, _policy(args))
    direction = _parse_dir(args.dir)
    for _ in range(args.times):
        lin = transform(lin, direction, _policy(args))
    return {"direction": list(direction), "times": args.times,
            "coefficients": lin.to_json()}, True


def _cmd_indices(args):
    sys_ = _load_sys(args)
    lin = linearize(sys_, ex.ONE, _policy(args))
    if args.dir:
        dirs = [_parse_dir(args.dir)]
    else:
        dirs = [(i, j) for i in range(1, sys_.n + 1)
                for j in range(1, sys_.n + 1) if i != j]
    out = {}
    blocked = False
    for d in dirs:
        r = index(lin, d, cap=args.cap, policy=_policy(args))
        out[f"{d[0]}{d[1]}"] = r.to_json()
        blocked = blocked or r.kind == "blocked"
    return {"cap": args.cap, "indices": out}, not blocked


def _cmd_adjoint(args):
    sys_ = _load_sys(args)
    lin = linearize(sys_, ex.ONE, _policy(args))
    return {"adjoint": adjoint(lin).to_json()}, True


def _cmd_coframe(args):
    from .coframe import bracket_check, build_coframe, structure_check

    sys_ = _load_sys(args)
    lin = linearize(sys_, ex.ONE, _policy(args))
    branch = _parse_branch(args.branch) if args.branch else None
    cf = build_coframe(lin, args.order, branch, _policy(args))
    elements = []
    for (key, el) in cf.elements():
        name = "Theta" if key == (0, 0) else f"xi_{key[0]}^{key[1]}"
        elements.append({"element": name, "expansion": el.to_json()})
    out = {
        "order": cf.order,
        "branch_choice": {str(j): i for j, i in sorted(cf.branch_choice.items())},
        "branch_index": {str(j): p for j, p in sorted(cf.branch_index.items())},
        "elements": elements,
    }
    passed = True
    if args.verify:
        srep = structure_check(cf, lin, args.order - 1, _policy(args))
        brep = bracket_check(cf, lin, _policy(args))
        out["structure_rows"] = [
            {"element": list(r.element), "direction": r.direction,
             "kind": r.kind, "verdict": str(r.verdict)}
            for r in srep.rows
        ]
        out["bracket_rows"] = [
            {"bracket": r.bracket, "component": list(r.component),
             "verdict": str(r.verdict)}
            for r in brep.rows
        ]
        passed = srep.passed and brep.passed
        out["verified"] = passed
    return out, passed


def _parse_rho_entry(value, n: int):
    if isinstance(value, str):
        return parse(value, n)
    if isinstance(value, list):
        return BiForm.from_json(value, n)
    raise InputError("rho entries must be expression strings or serialized forms")


def _cmd_conslaw(args):
    from .conslaws import RhoTriple, conslaw_from_rho

    sys_ = _load_sys(args)
    if sys_.n != 3:
        raise InputError("conslaw requires a three-variable system (the Psi "
                         "construction degenerates for n = 2)")
    lin = linearize(sys_, ex.ONE, _policy(args))
    doc = _load_json(args.rho)
    s = doc.get("s", 1)
    rho = {}
    for (i, j) in sys_.pairs():
        key = f"rho{i}{j}"
        if key not in doc:
            raise InputError(f"rho file is missing {key!r}")
        rho[(i, j)] = _parse_rho_entry(doc[key], sys_.n)
    law = conslaw_from_rho(lin, RhoTriple(s, rho), policy=_policy(args))
    passed = law.closure.zeroish and law.adjoint_sum.zeroish
    return {"law": law.to_json()}, passed


def _cmd_verify(args):
    from .conslaws import verify_closed

    sys_ = _load_sys(args)
    doc = _load_json(args.form)
    if "form" not in doc:
        raise InputError("form file must carry a 'form' entry")
    r, s = doc.get("type", [None, None])
    omega = BiForm.from_json(doc["form"], sys_.n, r, s)
    v = verify_closed(omega, sys_, _policy(args))
    return {"type": [omega.r, omega.s], "closure": str(v)}, v.zeroish


def _cmd_darboux(args):
    from .conslaws import InvariantBundle, darboux_check

    sys_ = _load_sys(args)
    doc = _load_json(args.bundle)
    n = sys_.n
    try:
        if n == 3:
            bundle = InvariantBundle(
                n=3,
                pair=(parse(doc["I"], n), parse(doc["It"], n)),
                pair_fields=tuple(doc.get("pair_fields", (1, 2))),
                quad=tuple(parse(doc[k], n) for k in ("J", "Jt", "K", "Kt")),
                quad_field=doc.get("quad_field", 3),
            )
        else:
            bundle = InvariantBundle(
                n=2,
                pair=(parse(doc["I"], n), parse(doc["It"], n)),
                pair_fields=tuple(doc.get("pair_fields", (1,))),
                quad=tuple(parse(doc[k], n) for k in ("J", "Jt")),
                quad_field=doc.get("quad_field", 2),
            )
    except KeyError as err:
        raise InputError(f"bundle file is missing {err}") from None
    rep = darboux_check(sys_, bundle, _policy(args))
    rows = [{"condition": r.label,
             "verdict": str(r.verdict) if r.verdict else ("ok" if r.ok else "failed"),
             "ok": r.ok} for r in rep.rows]
    return {"darboux": rep.passed, "conditions": rows}, rep.passed


def _cmd_generate(args):
    from .conslaws import generate_cl

    sys_ = _load_sys(args)
    doc = _load_json(args.inputs)
    n = sys_.n
    kind = args.kind
    if kind == "1s":
        inputs = {"l": doc["l"]}
        if "I" in doc:
            inputs["I"] = parse(doc["I"], n)
        if "alphas" in doc:
            inputs["alphas"] = [BiForm.from_json(a, n, 0, 1) for a in doc["alphas"]]
        if "I1" in doc:
            from .conslaws import invariant_sequence

            count = doc.get("count", doc.get("s", 1))
            alphas, rows = invariant_sequence(
                sys_, parse(doc["I1"], n), parse(doc["It1"], n),
                doc["l"], count, _policy(args))
            inputs["alphas"] = alphas[-doc.get("s", 1):]
    elif kind == "2s":
        inputs = {"l": doc["l"], "s": doc["s"]}
        for key in ("J_seq", "K_seq"):
            if key in doc:
                inputs[key] = [parse(t, n) for t in doc[key]]
    else:
        raise InputError(f"unknown generator kind {kind!r}")
    law = generate_cl(sys_, kind, _policy(args), **inputs)
    return {"law": law.to_json()}, law.closure.zeroish


def _cmd_classify(args):
    from .classify import classify as run_classify, symbol_relations

    if args.symbol:
        doc = _load_json(args.symbol)
        from fractions import Fraction

        def entry(v):
            if isinstance(v, str) and any(c.isalpha() for c in v):
                return parse(v, 3)
            return Fraction(v) if not isinstance(v, str) else Fraction(v)

        M = tuple(
            tuple(tuple(entry(v) for v in row) for row in mk) for mk in doc["M"]
        )
        data = symbol_relations(M=M)
    else:
        sys_ = _load_sys(args)
        if sys_.n != 3:
            raise InputError("classification is defined for n = 3 systems")
        data = symbol_relations(sys=sys_)
    res = run_classify(data, seed=args.seed)
    out = {"kernel_dim": data.kernel_dim, **res.to_json()}
    if data.degenerate_kernel:
        out["degenerate_kernel"] = True
    return out, True


_HANDLERS = {
    "check": _cmd_check,
    "linearize": _cmd_linearize,
    "invariants": _cmd_invariants,
    "transform": _cmd_transform,
    "indices": _cmd_indices,
    "adjoint": _cmd_adjoint,
    "coframe": _cmd_coframe,
    "conslaw": _cmd_conslaw,
    "verify": _cmd_verify,
    "darboux": _cmd_darboux,
    "generate": _cmd_generate,
    "classify": _cmd_classify,
}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vbx",
        description="Symbolic analysis of semi-linear hyperbolic systems "
                    "u_ij = f_ij: Laplace cascade, conservation laws, "
                    "Darboux integrability, symbol classification.",
    )
    ap.add_argument("--version", action="version", version=f"vbx {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("spec", help="system spec JSON file")
        p.add_argument("--json", action="store_true", help="emit JSON")
        p.add_argument("--seed", type=int,
                       default=int(os.environ.get("VBX_SEED", "0")))
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--samples", type=int, default=20)
        p.add_argument("--order-budget", type=int, default=8)

    common(sub.add_parser("check", help="involutivity conditions"))
    p = sub.add_parser("linearize", help="universal linearization coefficients")
    common(p)
    p.add_argument("--mu", help="rescaling function for Theta = mu*theta")
    common(sub.add_parser("invariants", help="Laplace invariants H_ij, H_ijk"))
    p = sub.add_parser("transform", help="directed Laplace transform")
    common(p)
    p.add_argument("--dir", required=True, help="ordered pair i,j")
    p.add_argument("--times", type=int, default=1)
    p = sub.add_parser("indices", help="Laplace indices by cascade iteration")
    common(p)
    p.add_argument("--cap", type=int, default=10)
    p.add_argument("--dir", help="restrict to one ordered pair i,j")
    common(sub.add_parser("adjoint", help="formal adjoint coefficients"))
    p = sub.add_parser("coframe", help="Laplace-adapted coframe")
    common(p)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--verify", action="store_true",
                   help="run structure and bracket oracles")
    p.add_argument("--branch", help="branch choices, e.g. 1:2,2:1,3:1")
    p = sub.add_parser("conslaw", help="conservation law from a rho triple")
    common(p)
    p.add_argument("--rho", required=True, help="rho JSON file")
    p = sub.add_parser("verify", help="closure check of a serialized form")
    common(p)
    p.add_argument("--form", required=True, help="form JSON file")
    p = sub.add_parser("darboux", help="Darboux-pair conditions")
    common(p)
    p.add_argument("--bundle", required=True, help="invariant bundle JSON file")
    p = sub.add_parser("generate", help="Darboux-family conservation laws")
    common(p)
    p.add_argument("--kind", required=True, choices=("1s", "2s"))
    p.add_argument("--inputs", required=True, help="generator inputs JSON file")
    p = sub.add_parser("classify", help="structural symbol classification")
    common(p)
    p.add_argument("--symbol", help="explicit symbol matrices JSON file")
    return ap


def run(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    if "VBX_SEED" in os.environ:
        try:
            args.seed = int(os.environ["VBX_SEED"])
        except ValueError:
            print("vbx: error: VBX_SEED must be an integer", file=sys.stderr)
            return 2
    try:
        payload, passed = _HANDLERS[args.command](args)
    except (InputError, SystemValidationError, ParseError) as err:
        print(f"vbx: error: {err}", file=sys.stderr)
        return 2
    except InvariantVanishesError as err:
        report = _base_report(args, args.command)
        report["error"] = "InvariantVanishes"
        report["detail"] = str(err)
        _emit(report, args)
        return 1
    except OrderBudgetError as err:
        report = _base_report(args, args.command)
        report["error"] = "OrderBudgetExceeded"
        report["detail"] = str(err)
        _emit(report, args)
        return 1
    except (ex.ExprError, ValueError, KeyError, TypeError) as err:
        print(f"vbx: error: {err}", file=sys.stderr)
        return 2
    except RuntimeError as err:
        # blocked coframe constructions and kin: a computation outcome
        report = _base_report(args, args.command)
        report["error"] = type(err).__name__.removesuffix("Error")
        report["detail"] = str(err)
        _emit(report, args)
        return 1
    report = _base_report(args, args.command)
    report.update(payload)
    report["passed"] = passed
    _emit(report, args)
    return 0 if passed else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
