"""Canonical pretty-printer; parse(print(ast)) is the identity on parsed ASTs."""

from __future__ import annotations

from .ast import (
    And,
    ArithExpr,
    BoolConst,
    BoolVectorConst,
    Constant,
    Equals,
    Exists,
    ExternRef,
    Forall,
    Formula,
    FuncApp,
    Implies,
    IntLiteral,
    MlpSpec,
    Not,
    Or,
    RelApp,
    SoftSelect,
    Term,
    Theory,
    Variable,
)

# precedence: implies/quantifier 1 < or 2 < and 3 < not 4 < equals 5 < arith 6
_IMPLIES, _OR, _AND, _NOT, _EQ, _ARITH = 1, 2, 3, 4, 5, 6


def print_term(t: Term, prec: int = 0) -> str:
    if isinstance(t, (Variable, Constant)):
        return t.name
    if isinstance(t, IntLiteral):
        return str(t.value)
    if isinstance(t, FuncApp):
        return f"{t.symbol}({', '.join(print_term(a) for a in t.args)})"
    if isinstance(t, ArithExpr):
        op = "+" if t.op == "add" else "mod"
        s = f"{print_term(t.args[0], _ARITH)} {op} {print_term(t.args[1], _ARITH + 1)}"
        return f"({s})" if prec > _ARITH else s
    raise TypeError(f"not a term: {t!r}")


def print_formula(f: Formula, prec: int = 0) -> str:
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, BoolVectorConst):
        return f.name
    if isinstance(f, RelApp):
        if not f.args:
            return f.symbol
        return f"{f.symbol}({', '.join(print_term(a) for a in f.args)})"
    if isinstance(f, Equals):
        s = f"{print_term(f.lhs, _ARITH)} = {print_term(f.rhs, _ARITH)}"
        return f"({s})" if prec > _EQ else s
    if isinstance(f, Not):
        return f"~{print_formula(f.body, _NOT)}"
    if isinstance(f, And):
        s = " & ".join(print_formula(i, _NOT) for i in f.items)
        return f"({s})" if prec > _AND else s
    if isinstance(f, Or):
        s = " | ".join(print_formula(i, _AND) for i in f.items)
        return f"({s})" if prec > _OR else s
    if isinstance(f, Implies):
        s = f"{print_formula(f.lhs, _OR)} -> {print_formula(f.rhs, _IMPLIES)}"
        return f"({s})" if prec > _IMPLIES else s
    if isinstance(f, (Forall, Exists)):
        kw = "forall" if isinstance(f, Forall) else "exists"
        vs = f.vars[0] if len(f.vars) == 1 else f"({', '.join(f.vars)})"
        s = f"{kw} {vs}: {f.domain} . {print_formula(f.body)}"
        # a quantifier body runs to the end of the enclosing formula, so the
        # node needs parens whenever anything could follow it
        return f"({s})" if prec > _IMPLIES else s
    if isinstance(f, SoftSelect):
        return f"pi[{print_term(f.index)}]({print_formula(f.vector)})"
    raise TypeError(f"not a formula: {f!r}")


def print_theory(theory: Theory) -> str:
    lines: list[str] = []
    for s in theory.sorts:
        parts = [f"sort {s.name}"]
        if s.cardinality is not None:
            parts.append(f"card {s.cardinality}")
        if s.dim is not None:
            parts.append(f"dim {s.dim}")
        lines.append(" ".join(parts) + ";")
    for c in theory.consts:
        suffix = " learned" if c.learned else ""
        lines.append(f"const {c.name} : {c.sort}{suffix};")
    for fn in theory.funcs:
        sig = " x ".join(fn.arg_sorts)
        lines.append(f"func {fn.name} : {sig} -> {fn.result_sort} {_binding(fn.binding)};")
    for r in theory.rels:
        sig = " x ".join(r.arg_sorts)
        head = f"rel {r.name} :" + (f" {sig}" if sig else "")
        if r.out is not None:
            head += f" out {r.out}"
        lines.append(f"{head} {_binding(r.binding)};")
    for b in theory.boolvecs:
        lines.append(f"boolvec {b.name} : [{', '.join(str(x) for x in b.bits)}];")
    for d in theory.datasets:
        sig = " x ".join(d.column_sorts)
        lines.append(f'data {d.name} : {sig} from "{d.source}";')
    for a in theory.axioms:
        lines.append(f"axiom {a.name} : {print_formula(a.formula)};")
    return "\n".join(lines) + "\n"


def _binding(b) -> str:
    if isinstance(b, MlpSpec):
        s = "mlp " + ",".join(str(h) for h in b.hidden)
        return f"{s} act {b.activation}"
    if isinstance(b, ExternRef):
        return f"extern {b.name}"
    raise TypeError(f"not a binding: {b!r}")
