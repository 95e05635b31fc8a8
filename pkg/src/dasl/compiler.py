"""Lower a checked, bound theory to a differentiable evaluation plan.

Structural recursion over each axiom: atoms become symbol evaluations,
connectives become logit-algebra nodes, quantifiers over index-range sorts
enumerate exhaustively (tensorized over the batch), and quantifiers over
datasets/embedding tables become sampler draws reduced by an n-ary
conjunction.  The root conjunction fuses with the loss: since the loss of
a conjunction is the sum of its conjuncts' losses, the fused loss is a
plain sum of softplus(-l) over root-level conjuncts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import logit as L
from . import tensor as T
from .interp import Interpretation, Sampler
from .lang import (
    And,
    ArithExpr,
    BoolConst,
    BoolVectorConst,
    Constant,
    Equals,
    Exists,
    Forall,
    FuncApp,
    Implies,
    IntLiteral,
    Not,
    Or,
    RelApp,
    SoftSelect,
    Term,
    Theory,
    Variable,
)
from .lang.check import SortError, UnboundSymbol
from .lang.printer import print_term
from .tensor import Tensor


class NonFiniteLogit(Exception):
    pass


@dataclass
class CompiledBatch:
    """One forward evaluation: root logit, per-axiom logits, provenance."""

    root: Tensor | None  # None only for an empty axiom set
    per_axiom: dict[str, Tensor]
    draws: dict
    symbol_outputs: dict = field(default_factory=dict)


class Plan:
    """Evaluation plan: checked theory + interpretation + samplers."""

    def __init__(self, theory: Theory, interp: Interpretation,
                 batch_size: int | None = None, shared_draw: bool = False, seed: int = 0):
        self.theory = theory
        self.interp = interp
        self.batch_size = batch_size
        self.shared_draw = shared_draw
        self.samplers: dict[tuple, Sampler] = {}
        self.widths: dict[int, int] = {}
        self._collect_samplers(seed)
        self._validate()
        for ax in theory.axioms:
            self._width(ax.formula)

    # -- construction

    def sampler_key(self, axiom: str, vars: tuple[str, ...], domain: str) -> tuple:
        if self.shared_draw:
            return (domain,)
        return (axiom, vars, domain)

    def _quantifier_sites(self):
        def walk(f, axiom):
            if isinstance(f, (Forall, Exists)):
                sort = self.theory.sort(f.domain)
                if sort is None or not sort.is_index:
                    yield (axiom, f.vars, f.domain)
                yield from walk(f.body, axiom)
            elif isinstance(f, (And, Or)):
                for i in f.items:
                    yield from walk(i, axiom)
            elif isinstance(f, Implies):
                yield from walk(f.lhs, axiom)
                yield from walk(f.rhs, axiom)
            elif isinstance(f, Not):
                yield from walk(f.body, axiom)
            elif isinstance(f, SoftSelect):
                yield from walk(f.vector, axiom)

        for ax in self.theory.axioms:
            yield from walk(ax.formula, ax.name)

    def _collect_samplers(self, seed: int) -> None:
        sites = []
        for axiom, vars_, domain in self._quantifier_sites():
            key = self.sampler_key(axiom, vars_, domain)
            if key not in self.samplers:
                sites.append((key, domain))
                self.samplers[key] = None  # placeholder to keep order
        seeds = np.random.SeedSequence(seed).spawn(len(sites))
        for (key, domain_name), ss in zip(sites, seeds):
            domain = self.interp.domains.get(domain_name)
            if domain is None:
                raise UnboundSymbol(domain_name)
            strategy = "full" if self.batch_size is None else "shuffled-minibatch"
            self.samplers[key] = Sampler(
                domain, strategy=strategy, batch_size=self.batch_size,
                rng=np.random.default_rng(ss),
            )

    def _validate(self) -> None:
        def walk_term(t):
            if isinstance(t, Constant) and t.name not in self.interp.symbols:
                raise UnboundSymbol(t.name)
            if isinstance(t, FuncApp):
                if t.symbol not in self.interp.symbols:
                    raise UnboundSymbol(t.symbol)
                for a in t.args:
                    walk_term(a)
            if isinstance(t, ArithExpr):
                for a in t.args:
                    walk_term(a)

        def walk(f):
            if isinstance(f, RelApp):
                if self.theory.boolvec(f.symbol) is None and f.symbol not in self.interp.symbols:
                    raise UnboundSymbol(f.symbol)
                for a in f.args:
                    walk_term(a)
            elif isinstance(f, Equals):
                walk_term(f.lhs)
                walk_term(f.rhs)
            elif isinstance(f, Not):
                walk(f.body)
            elif isinstance(f, (And, Or)):
                for i in f.items:
                    walk(i)
            elif isinstance(f, Implies):
                walk(f.lhs)
                walk(f.rhs)
            elif isinstance(f, (Forall, Exists)):
                if self.theory.sort(f.domain) is None and f.domain not in self.interp.domains:
                    raise UnboundSymbol(f.domain)
                walk(f.body)
            elif isinstance(f, SoftSelect):
                walk_term(f.index)
                walk(f.vector)
            elif isinstance(f, BoolVectorConst):
                if self.theory.boolvec(f.name) is None:
                    raise UnboundSymbol(f.name)
            elif not isinstance(f, BoolConst):
                raise SortError("compile", "a formula", type(f).__name__)

        for ax in self.theory.axioms:
            walk(ax.formula)

    def _width(self, f) -> int:
        """Static class-vector width of a formula (1 for scalar truth)."""
        w = self.widths.get(id(f))
        if w is not None:
            return w
        if isinstance(f, RelApp):
            decl = self.theory.rel(f.symbol)
            w = (decl.out or 1) if decl is not None else 1
        elif isinstance(f, BoolVectorConst):
            w = len(self.theory.boolvec(f.name).bits)
        elif isinstance(f, Not):
            w = self._width(f.body)
        elif isinstance(f, (And, Or)):
            w = max(self._width(i) for i in f.items)
        elif isinstance(f, Implies):
            w = max(self._width(f.lhs), self._width(f.rhs))
        elif isinstance(f, (Forall, Exists)):
            w = self._width(f.body)
        else:  # Equals, SoftSelect, BoolConst
            w = 1
        self.widths[id(f)] = w
        return w

    @property
    def parameters(self):
        return self.interp.parameters

    def draw(self) -> dict:
        """One batch of sampler draws, keyed like evaluate expects them."""
        return {key: s.sample() for key, s in self.samplers.items()}


def compile(theory: Theory, interp: Interpretation, batch_size: int | None = None,
            shared_draw: bool = False, seed: int = 0) -> Plan:
    """Build an evaluation plan; raises UnboundSymbol/SortError on bad input."""
    return Plan(theory, interp, batch_size=batch_size, shared_draw=shared_draw, seed=seed)


# ---------------------------------------------------------------------------
# evaluation


class _Ctx:
    __slots__ = ("plan", "draws", "axiom", "in_batch", "memo", "symbol_outputs", "pinned")

    def __init__(self, plan: Plan, draws: dict):
        self.plan = plan
        self.draws = draws
        self.axiom = ""
        self.in_batch = False
        self.memo: dict = {}
        self.symbol_outputs: dict = {}
        # objects referenced by id() inside memo keys; pinning them keeps
        # CPython from recycling an id into a different object mid-step
        self.pinned: list = []

    def pin(self, value):
        if not isinstance(value, (int, np.integer)):
            self.pinned.append(value)
        return value


def _term_vars(t: Term, out: set[str]) -> None:
    if isinstance(t, Variable):
        out.add(t.name)
    elif isinstance(t, (FuncApp, ArithExpr)):
        for a in t.args:
            _term_vars(a, out)


def _formula_vars(f, out: set[str]) -> None:
    if isinstance(f, RelApp):
        for a in f.args:
            _term_vars(a, out)
    elif isinstance(f, Equals):
        _term_vars(f.lhs, out)
        _term_vars(f.rhs, out)
    elif isinstance(f, Not):
        _formula_vars(f.body, out)
    elif isinstance(f, (And, Or)):
        for i in f.items:
            _formula_vars(i, out)
    elif isinstance(f, Implies):
        _formula_vars(f.lhs, out)
        _formula_vars(f.rhs, out)
    elif isinstance(f, (Forall, Exists)):
        _formula_vars(f.body, out)
    elif isinstance(f, SoftSelect):
        _term_vars(f.index, out)
        _formula_vars(f.vector, out)


def _memo_key(node, env: dict, ctx: _Ctx):
    fv: set[str] = set()
    if isinstance(node, Term):
        _term_vars(node, fv)
    else:
        _formula_vars(node, fv)
    sig = tuple(
        (v, env[v] if isinstance(env[v], int) else id(ctx.pin(env[v])))
        for v in sorted(fv)
        if v in env
    )
    return (id(node), sig)


def _eval_term(t: Term, env: dict, ctx: _Ctx):
    if isinstance(t, Variable):
        try:
            return env[t.name]
        except KeyError:
            raise UnboundSymbol(t.name) from None
    if isinstance(t, Constant):
        return ctx.plan.interp.symbols[t.name]([])
    if isinstance(t, IntLiteral):
        return t.value
    if isinstance(t, ArithExpr):
        a = _eval_term(t.args[0], env, ctx)
        b = _eval_term(t.args[1], env, ctx)
        return (a + b) if t.op == "add" else (a % b)
    if isinstance(t, FuncApp):
        key = _memo_key(t, env, ctx)
        hit = ctx.memo.get(key)
        if hit is None:
            args = [_eval_term(a, env, ctx) for a in t.args]
            hit = ctx.plan.interp.symbols[t.symbol](args)
            ctx.memo[key] = hit
        return hit
    raise TypeError(f"not a term: {t!r}")


def _crisp(mask, big: float) -> Tensor:
    return Tensor(np.where(np.asarray(mask, dtype=bool), big, -big))


def _eval_formula(f, env: dict, ctx: _Ctx) -> Tensor:
    interp = ctx.plan.interp
    if isinstance(f, BoolConst):
        return Tensor(interp.big if f.value else -interp.big)
    if isinstance(f, BoolVectorConst):
        return L.bool_vector(ctx.plan.theory.boolvec(f.name).bits, interp.big)
    if isinstance(f, RelApp):
        bv = ctx.plan.theory.boolvec(f.symbol)
        if bv is not None:
            idx = _eval_term(f.args[0], env, ctx)
            bits = np.asarray(bv.bits)
            return _crisp(bits[np.asarray(idx)] == 1, interp.big)
        key = _memo_key(f, env, ctx)
        hit = ctx.memo.get(key)
        if hit is None:
            args = [_eval_term(a, env, ctx) for a in f.args]
            out = interp.symbols[f.symbol](args)
            hit = out if isinstance(out, Tensor) else Tensor(out)
            ctx.memo[key] = hit
            decl = ctx.plan.theory.rel(f.symbol)
            if decl is not None and decl.out is not None:
                sig = tuple(print_term(a) for a in f.args)
                ctx.symbol_outputs.setdefault((f.symbol, sig), hit)
        return hit
    if isinstance(f, Equals):
        lhs = _eval_term(f.lhs, env, ctx)
        rhs = _eval_term(f.rhs, env, ctx)
        if _is_integerish(lhs) and _is_integerish(rhs):
            return _crisp(np.asarray(lhs) == np.asarray(rhs), interp.big)
        return L.equality_logit(lhs, rhs, interp.equality)
    if isinstance(f, Not):
        return T.neg(_eval_formula(f.body, env, ctx))
    if isinstance(f, And):
        return L.conj(*_aligned_items(f.items, f, env, ctx))
    if isinstance(f, Or):
        return L.disj(*_aligned_items(f.items, f, env, ctx))
    if isinstance(f, Implies):
        if isinstance(f.lhs, And):
            # ~(a & b & ... & ~c): one n-ary conjunction, exact by
            # associativity of logit(prod t_i)
            vals = _aligned_items((*f.lhs.items, f.rhs), f, env, ctx)
            return T.neg(L.conj(*vals[:-1], T.neg(vals[-1])))
        lhs, rhs = _aligned_items((f.lhs, f.rhs), f, env, ctx)
        return L.implies(lhs, rhs)
    if isinstance(f, SoftSelect):
        idx = _eval_term(f.index, env, ctx)
        vec = _eval_formula(f.vector, env, ctx)
        # key on the evaluated index so a y1+y2 grid hits 10 entries, not 100
        if isinstance(idx, (int, np.integer)):
            ikey = int(idx)
        else:
            ikey = id(ctx.pin(idx))
        key = ("softselect", id(f), ikey, id(ctx.pin(vec)))
        hit = ctx.memo.get(key)
        if hit is None:
            hit = L.softselect(vec, idx)
            ctx.memo[key] = hit
        return hit
    if isinstance(f, Forall):
        return _eval_forall(f, env, ctx)
    if isinstance(f, Exists):
        flipped = Forall(f.vars, f.domain, Not(f.body))
        return T.neg(_eval_forall(flipped, env, ctx))
    raise TypeError(f"not a formula: {f!r}")


def _aligned_items(items, parent, env: dict, ctx: _Ctx) -> list[Tensor]:
    """Evaluate connective operands, aligning class axes across widths.

    A width-1 operand evaluates without a class axis, so when it meets a
    class vector inside a batched quantifier its batch axis must not be
    mistaken for the class axis; give it an explicit trailing axis.
    """
    target = ctx.plan._width(parent)
    out = []
    for item in items:
        val = _eval_formula(item, env, ctx)
        if target > 1 and ctx.plan._width(item) == 1 and val.data.ndim >= 1:
            val = T.reshape(val, val.data.shape + (1,))
        out.append(val)
    return out


def _is_integerish(v) -> bool:
    if isinstance(v, (int, np.integer)):
        return True
    return isinstance(v, np.ndarray) and np.issubdtype(v.dtype, np.integer)


def _eval_forall(f: Forall, env: dict, ctx: _Ctx) -> Tensor:
    sort = ctx.plan.theory.sort(f.domain)
    if sort is not None and sort.is_index:
        # index-range quantifiers are always exhaustive, never sampled
        results = []
        for i in range(sort.cardinality):
            inner = dict(env)
            inner[f.vars[0]] = i
            results.append(_eval_formula(f.body, inner, ctx))
        return L.conj(*results)
    key = ctx.plan.sampler_key(ctx.axiom, f.vars, f.domain)
    indices = ctx.draws[key]
    domain = ctx.plan.samplers[key].domain
    if not ctx.in_batch:
        inner = dict(env)
        for v, col in zip(f.vars, domain.columns):
            inner[v] = col.take(indices)
        ctx.in_batch = True
        try:
            body = _eval_formula(f.body, inner, ctx)
        finally:
            ctx.in_batch = False
        return L.conj_reduce(body, axis=0)
    # already inside a batched quantifier: fall back to element-wise binding
    results = []
    for j in indices:
        inner = dict(env)
        one = np.array([j])
        for v, col in zip(f.vars, domain.columns):
            taken = col.take(one)
            if isinstance(taken, Tensor):
                inner[v] = T.reshape(taken, taken.data.shape[1:])
            elif np.issubdtype(np.asarray(taken).dtype, np.integer):
                inner[v] = int(taken[0])
            else:
                inner[v] = taken[0]
        results.append(_eval_formula(f.body, inner, ctx))
    return L.conj(*results)


def evaluate(plan: Plan, draws: dict | None = None) -> CompiledBatch:
    """Forward pass; inner index quantifiers enumerate, datasets use draws."""
    if draws is None:
        draws = plan.draw()
    ctx = _Ctx(plan, draws)
    per_axiom: dict[str, Tensor] = {}
    for ax in plan.theory.axioms:
        ctx.axiom = ax.name
        root = _eval_formula(ax.formula, {}, ctx)
        while root.data.ndim >= 1:  # vector-valued axiom roots conjoin componentwise
            root = L.conj_reduce(root, axis=-1)
        if not np.isfinite(root.data):
            raise NonFiniteLogit(f"axiom {ax.name!r} produced a non-finite logit")
        per_axiom[ax.name] = root
    root = L.conj(*per_axiom.values()) if per_axiom else None
    return CompiledBatch(root, per_axiom, draws, ctx.symbol_outputs)


# ---------------------------------------------------------------------------
# loss fusion


class FusedPlan:
    """Plan whose root is the scalar training loss.

    The loss of the root conjunction equals the sum of the per-conjunct
    losses, so evaluation sums softplus(-l) over root-level conjuncts
    (descending through And nodes and quantifier reductions) instead of
    materializing the conjunction logit.
    """

    def __init__(self, plan: Plan):
        self.plan = plan

    def evaluate(self, draws: dict | None = None,
                 active_axioms: set[str] | None = None) -> tuple[Tensor, CompiledBatch]:
        if draws is None:
            draws = self.plan.draw()
        ctx = _Ctx(self.plan, draws)
        total = Tensor(0.0)
        per_axiom: dict[str, Tensor] = {}
        for ax in self.plan.theory.axioms:
            if active_axioms is not None and ax.name not in active_axioms:
                continue
            ctx.axiom = ax.name
            part = _loss_of(ax.formula, {}, ctx)
            if not np.isfinite(part.data):
                raise NonFiniteLogit(f"axiom {ax.name!r} produced a non-finite loss")
            per_axiom[ax.name] = part
            total = T.add(total, part)
        return total, CompiledBatch(None, per_axiom, draws, ctx.symbol_outputs)


def _loss_of(f, env: dict, ctx: _Ctx) -> Tensor:
    if isinstance(f, And):
        total = Tensor(0.0)
        for i in f.items:
            total = T.add(total, _loss_of(i, env, ctx))
        return total
    if isinstance(f, Forall):
        sort = ctx.plan.theory.sort(f.domain)
        if sort is not None and sort.is_index:
            total = Tensor(0.0)
            for i in range(sort.cardinality):
                inner = dict(env)
                inner[f.vars[0]] = i
                total = T.add(total, _loss_of(f.body, inner, ctx))
            return total
        if not ctx.in_batch:
            key = ctx.plan.sampler_key(ctx.axiom, f.vars, f.domain)
            indices = ctx.draws[key]
            domain = ctx.plan.samplers[key].domain
            inner = dict(env)
            for v, col in zip(f.vars, domain.columns):
                inner[v] = col.take(indices)
            ctx.in_batch = True
            try:
                return _loss_of(f.body, inner, ctx)
            finally:
                ctx.in_batch = False
    logit_val = _eval_formula(f, env, ctx)
    return T.reduce_sum(T.softplus(T.neg(logit_val)))


def fuse_loss(plan: Plan) -> FusedPlan:
    """Fuse the root conjunction with the cross-entropy loss."""
    return FusedPlan(plan)


# ---------------------------------------------------------------------------
# plan explanation


def explain(plan: Plan) -> str:
    """Human-readable plan listing; deterministic across runs."""
    lines: list[str] = []
    if not plan.theory.axioms:
        lines.append("0 axioms; loss = 0")
    else:
        lines.append(f"{len(plan.theory.axioms)} axioms")
    for ax in plan.theory.axioms:
        lines.append(f"axiom {ax.name}:")
        _explain_formula(ax.formula, plan, ax.name, lines, depth=1)
    lines.append("samplers:")
    if not plan.samplers:
        lines.append("  (none)")
    for key, s in plan.samplers.items():
        label = "/".join(",".join(k) if isinstance(k, tuple) else str(k) for k in key)
        batch = s.batch_size if s.batch_size is not None else "all"
        lines.append(f"  {label}: {s.strategy} over {s.domain.name} "
                     f"(n={s.domain.cardinality}, batch={batch})")
    lines.append("parameters:")
    total = 0
    for name, binding in sorted(plan.interp.symbols.items()):
        count = sum(p.value.size for p in getattr(binding, "parameters", []))
        total += count
        kind = type(binding).__name__.replace("Binding", "").lower()
        lines.append(f"  {name}: {kind}, {count} parameters")
    for dname, dom in sorted(plan.interp.domains.items()):
        for col in dom.columns:
            if hasattr(col, "param"):
                total += col.param.value.size
                lines.append(f"  sort {dname}: embedding-table, {col.param.value.size} parameters")
    lines.append(f"total parameters: {total}")
    return "\n".join(lines)


def _explain_formula(f, plan: Plan, axiom: str, lines: list[str], depth: int) -> None:
    pad = "  " * depth
    if isinstance(f, (Forall, Exists)):
        kw = "forall" if isinstance(f, Forall) else "exists"
        sort = plan.theory.sort(f.domain)
        if sort is not None and sort.is_index:
            how = f"exhaustive 0..{sort.cardinality - 1}"
        else:
            how = "sampled"
        lines.append(f"{pad}{kw} {', '.join(f.vars)} in {f.domain} [{how}]")
        _explain_formula(f.body, plan, axiom, lines, depth + 1)
    elif isinstance(f, And):
        lines.append(f"{pad}and of {len(f.items)}")
        for i in f.items:
            _explain_formula(i, plan, axiom, lines, depth + 1)
    elif isinstance(f, Or):
        lines.append(f"{pad}or of {len(f.items)}")
        for i in f.items:
            _explain_formula(i, plan, axiom, lines, depth + 1)
    elif isinstance(f, Implies):
        lines.append(f"{pad}implies")
        _explain_formula(f.lhs, plan, axiom, lines, depth + 1)
        _explain_formula(f.rhs, plan, axiom, lines, depth + 1)
    elif isinstance(f, Not):
        lines.append(f"{pad}not")
        _explain_formula(f.body, plan, axiom, lines, depth + 1)
    elif isinstance(f, SoftSelect):
        lines.append(f"{pad}softselect[{print_term(f.index)}]")
        _explain_formula(f.vector, plan, axiom, lines, depth + 1)
    else:
        from .lang.printer import print_formula

        lines.append(f"{pad}{print_formula(f)}")
