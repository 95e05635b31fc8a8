"""Recursive-descent parser for theory files.

Connective precedence, loosest to tightest: `->` (right-assoc), `|`, `&`, `~`.
A quantifier body extends to the end of the enclosing formula.  Formula/term
ambiguity (e.g. `f(x) = y` vs `P(x)`) is resolved locally: applications parse
neutrally and are tagged term or formula by the position they end up in; the
checker later validates symbol kinds.
"""

from __future__ import annotations

from .ast import (
    And,
    ArithExpr,
    AxiomDecl,
    BoolConst,
    BoolVecDecl,
    ConstDecl,
    DataDecl,
    Equals,
    Exists,
    Forall,
    Formula,
    FuncApp,
    FuncDecl,
    ExternRef,
    Implies,
    IntLiteral,
    MlpSpec,
    Not,
    Or,
    RelApp,
    RelDecl,
    SoftSelect,
    SortDecl,
    Term,
    Theory,
    Variable,
)
from .lexer import Token, tokenize


class ParseError(Exception):
    def __init__(self, token: Token | None, expected: str):
        where = f"{token.line}:{token.col} at {token.text!r}" if token else "end of input"
        super().__init__(f"{where}: expected {expected}")
        self.token = token
        self.expected = expected


def _as_formula(node: Term | Formula, tok: Token | None) -> Formula:
    if isinstance(node, Formula):
        return node
    if isinstance(node, FuncApp):
        return RelApp(node.symbol, node.args)
    if isinstance(node, Variable):
        # bare name in formula position: 0-ary relation or boolvec constant;
        # the checker disambiguates
        return RelApp(node.name, ())
    raise ParseError(tok, "a formula (got an arithmetic term)")


def _as_term(node: Term | Formula, tok: Token | None) -> Term:
    if isinstance(node, Term):
        return node
    if isinstance(node, RelApp):
        return FuncApp(node.symbol, node.args) if node.args else Variable(node.symbol)
    raise ParseError(tok, "a term")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers

    def peek(self, kind: str | None = None) -> Token | None:
        tok = self.tokens[self.pos] if self.pos < len(self.tokens) else None
        if kind is not None:
            return tok if tok is not None and tok.kind == kind else None
        return tok

    def next(self) -> Token | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            raise ParseError(tok, repr(kind))
        self.pos += 1
        return tok

    def accept(self, kind: str) -> Token | None:
        tok = self.peek()
        if tok is not None and tok.kind == kind:
            self.pos += 1
            return tok
        return None

    # -- statements

    def theory(self) -> Theory:
        sorts, consts, funcs, rels = [], [], [], []
        boolvecs, datasets, axioms = [], [], []
        while self.peek() is not None:
            tok = self.peek()
            if tok.kind == "sort":
                sorts.append(self.sort_decl())
            elif tok.kind == "const":
                consts.append(self.const_decl())
            elif tok.kind == "func":
                funcs.append(self.func_decl())
            elif tok.kind == "rel":
                rels.append(self.rel_decl())
            elif tok.kind == "boolvec":
                boolvecs.append(self.boolvec_decl())
            elif tok.kind == "data":
                datasets.append(self.data_decl())
            elif tok.kind == "axiom":
                axioms.append(self.axiom_decl())
            else:
                raise ParseError(tok, "a declaration keyword")
        return Theory(
            sorts=tuple(sorts),
            consts=tuple(consts),
            funcs=tuple(funcs),
            rels=tuple(rels),
            boolvecs=tuple(boolvecs),
            datasets=tuple(datasets),
            axioms=tuple(axioms),
        )

    def sort_decl(self) -> SortDecl:
        self.expect("sort")
        name = self.expect("ident").text
        card = dim = None
        if self.accept("card"):
            card = int(self.expect("int").text)
        if self.accept("dim"):
            dim = int(self.expect("int").text)
        if card is None and dim is None:
            raise ParseError(self.peek(), "'card' or 'dim'")
        self.expect(";")
        return SortDecl(name, card, dim)

    def const_decl(self) -> ConstDecl:
        self.expect("const")
        name = self.expect("ident").text
        self.expect(":")
        sort = self.expect("ident").text
        learned = self.accept("learned") is not None
        self.expect(";")
        return ConstDecl(name, sort, learned)

    def _sort_list(self) -> tuple[str, ...]:
        names = [self.expect("ident").text]
        # 'x' separates sorts; it lexes as a plain identifier
        while (tok := self.peek("ident")) is not None and tok.text == "x":
            self.next()
            names.append(self.expect("ident").text)
        return tuple(names)

    def _binding(self):
        if self.accept("mlp"):
            hidden = [int(self.expect("int").text)]
            while self.accept(","):
                hidden.append(int(self.expect("int").text))
            act = "relu"
            if self.accept("act"):
                act = self.expect("ident").text
            return MlpSpec(tuple(hidden), act)
        if self.accept("extern"):
            return ExternRef(self.expect("ident").text)
        raise ParseError(self.peek(), "'mlp' or 'extern'")

    def func_decl(self) -> FuncDecl:
        self.expect("func")
        name = self.expect("ident").text
        self.expect(":")
        args = self._sort_list()
        self.expect("->")
        result = self.expect("ident").text
        binding = self._binding()
        self.expect(";")
        return FuncDecl(name, args, result, binding)

    def rel_decl(self) -> RelDecl:
        self.expect("rel")
        name = self.expect("ident").text
        self.expect(":")
        args: tuple[str, ...] = ()
        if self.peek("ident"):
            args = self._sort_list()
        out = None
        if self.accept("out"):
            out = int(self.expect("int").text)
        binding = self._binding()
        self.expect(";")
        return RelDecl(name, args, out, binding)

    def boolvec_decl(self) -> BoolVecDecl:
        self.expect("boolvec")
        name = self.expect("ident").text
        self.expect(":")
        self.expect("[")
        bits = [int(self.expect("int").text)]
        while self.accept(","):
            bits.append(int(self.expect("int").text))
        self.expect("]")
        self.expect(";")
        for b in bits:
            if b not in (0, 1):
                raise ParseError(self.peek(), "bits 0 or 1 in boolvec")
        return BoolVecDecl(name, tuple(bits))

    def data_decl(self) -> DataDecl:
        self.expect("data")
        name = self.expect("ident").text
        self.expect(":")
        cols = self._sort_list()
        self.expect("from")
        source = self.expect("string").text
        self.expect(";")
        return DataDecl(name, cols, source)

    def axiom_decl(self) -> AxiomDecl:
        self.expect("axiom")
        name = self.expect("ident").text
        self.expect(":")
        tok = self.peek()
        formula = _as_formula(self.formula(), tok)
        self.expect(";")
        return AxiomDecl(name, formula)

    # -- formulas (returns Term | Formula; callers coerce)

    def formula(self):
        return self.implies()

    def implies(self):
        tok = self.peek()
        lhs = self.disjunction()
        if self.accept("->"):
            rhs_tok = self.peek()
            rhs = self.implies()  # right-associative
            return Implies(_as_formula(lhs, tok), _as_formula(rhs, rhs_tok))
        return lhs

    def disjunction(self):
        tok = self.peek()
        first = self.conjunction()
        if not self.peek("|"):
            return first
        items = [_as_formula(first, tok)]
        while self.accept("|"):
            t = self.peek()
            items.append(_as_formula(self.conjunction(), t))
        return Or(tuple(items))

    def conjunction(self):
        tok = self.peek()
        first = self.unary()
        if not self.peek("&"):
            return first
        items = [_as_formula(first, tok)]
        while self.accept("&"):
            t = self.peek()
            items.append(_as_formula(self.unary(), t))
        return And(tuple(items))

    def unary(self):
        if self.accept("~"):
            tok = self.peek()
            return Not(_as_formula(self.unary(), tok))
        if self.peek("forall") or self.peek("exists"):
            return self.quantifier()
        return self.equality()

    def quantifier(self):
        kw = self.next()
        if self.accept("("):
            names = [self.expect("ident").text]
            while self.accept(","):
                names.append(self.expect("ident").text)
            self.expect(")")
        else:
            names = [self.expect("ident").text]
        self.expect(":")
        domain = self.expect("ident").text
        self.expect(".")
        tok = self.peek()
        body = _as_formula(self.formula(), tok)
        cls = Forall if kw.kind == "forall" else Exists
        return cls(tuple(names), domain, body)

    def equality(self):
        tok = self.peek()
        lhs = self.arith()
        if self.accept("="):
            rhs_tok = self.peek()
            rhs = self.arith()
            return Equals(_as_term(lhs, tok), _as_term(rhs, rhs_tok))
        return lhs

    def arith(self):
        tok = self.peek()
        node = self.primary()
        while True:
            if self.accept("+"):
                rhs = _as_term(self.primary(), self.peek())
                node = ArithExpr("add", (_as_term(node, tok), rhs))
            elif self.accept("mod"):
                rhs = _as_term(self.primary(), self.peek())
                node = ArithExpr("mod", (_as_term(node, tok), rhs))
            else:
                return node

    def primary(self):
        tok = self.peek()
        if tok is None:
            raise ParseError(None, "a term or formula")
        if self.accept("true"):
            return BoolConst(True)
        if self.accept("false"):
            return BoolConst(False)
        if tok.kind == "int":
            self.next()
            return IntLiteral(int(tok.text))
        if self.accept("pi"):
            self.expect("[")
            itok = self.peek()
            index = _as_term(self.formula(), itok)
            self.expect("]")
            self.expect("(")
            vtok = self.peek()
            vector = _as_formula(self.formula(), vtok)
            self.expect(")")
            return SoftSelect(index, vector)
        if self.accept("("):
            inner = self.formula()
            self.expect(")")
            return inner
        if tok.kind == "ident":
            self.next()
            if self.accept("("):
                args: list[Term] = []
                if not self.peek(")"):
                    atok = self.peek()
                    args.append(_as_term(self.formula(), atok))
                    while self.accept(","):
                        atok = self.peek()
                        args.append(_as_term(self.formula(), atok))
                self.expect(")")
                # neutral application; position decides RelApp vs FuncApp
                return FuncApp(tok.text, tuple(args))
            return Variable(tok.text)
        raise ParseError(tok, "a term or formula")


def parse_theory(source_or_tokens) -> Theory:
    """Parse a full theory file (string or token list) into an AST."""
    tokens = source_or_tokens
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    return _Parser(tokens).theory()


def parse_formula(source: str) -> Formula:
    """Parse a single formula; used by tests and the oracle generator."""
    tokens = tokenize(source)
    p = _Parser(tokens)
    tok = p.peek()
    f = _as_formula(p.formula(), tok)
    if p.peek() is not None:
        raise ParseError(p.peek(), "end of formula")
    return f
