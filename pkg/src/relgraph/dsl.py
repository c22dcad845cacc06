"""Parser and validator for relational rule programs.

A program declares typed entities and relations, then states weighted rules,
hard logical constraints and arithmetic constraints over them:

    entity Post features=2
    entity Ideology
    predicate Author(Post, User)
    predicate Agree(Post, Claim)?
    rule: InThread(T, P) & Claim(T, C) => Agree(P, C)
    hardconstraint: ~Agree(P, C) & Author(P, U) => ~Agree(U, C)
    arith: Ideology(X, +I) = 1

Tokens: ``&`` conjunction, ``=>`` implication, ``~`` negation, constants in
double quotes, variables uppercase-initial, ``+V`` sum variables (arithmetic
constraints only), ``(X = Y)`` / ``(X != Y)`` equality guards, ``// ...``
comments.  An optional ``?`` on an atom is redundant openness annotation and
is checked against the relation declaration.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (
    ClosedHeadRelationError,
    DuplicateDeclarationError,
    DuplicateTemplateError,
    NegatedWeightedHeadError,
    ParseError,
    TypeMismatchError,
    UnboundHeadVariableError,
    UndeclaredPredicateError,
    UnsafeVariableError,
)

KEYWORDS = {"entity", "predicate", "rule", "hardconstraint", "arith", "features", "vocab"}

SYMBOLIC = "symbolic"
ATTRIBUTED = "attributed"

# feature_spec values: an int is a dense-vector dimension, VOCAB_FEATURES means
# one-hot vectors over the type's vocabulary file, None marks a symbolic type.
VOCAB_FEATURES = "vocab"


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Span:
    line: int
    col: int


@dataclass(frozen=True)
class Const:
    value: str

    def __str__(self):
        return f'"{self.value}"'


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class SumVar:
    name: str

    def __str__(self):
        return f"+{self.name}"


Term = Const | Var | SumVar


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...]
    span: Span = field(default=Span(0, 0), compare=False)
    open_marked: bool = field(default=False, compare=False)

    def __str__(self):
        return f"{self.predicate}({', '.join(str(a) for a in self.args)})"

    def is_ground(self) -> bool:
        return all(isinstance(a, Const) for a in self.args)

    def variables(self) -> set[str]:
        return {a.name for a in self.args if isinstance(a, (Var, SumVar))}


@dataclass(frozen=True)
class Literal:
    atom: Atom
    negated: bool = False

    def __str__(self):
        return ("~" if self.negated else "") + str(self.atom)

    def negate(self) -> "Literal":
        return Literal(self.atom, not self.negated)


@dataclass(frozen=True)
class Guard:
    """Equality test between two variables, e.g. ``(C1 = C2)``."""

    left: Var
    right: Var
    equal: bool
    span: Span = field(default=Span(0, 0), compare=False)

    def __str__(self):
        op = "=" if self.equal else "!="
        return f"({self.left} {op} {self.right})"


@dataclass(frozen=True)
class EntityType:
    name: str
    kind: str  # SYMBOLIC | ATTRIBUTED
    feature_spec: int | str | None  # dense dim, VOCAB_FEATURES, or None
    span: Span = field(default=Span(0, 0), compare=False)


@dataclass(frozen=True)
class RelationSchema:
    predicate: str
    arg_types: tuple[str, ...]
    open: bool
    span: Span = field(default=Span(0, 0), compare=False)

    @property
    def arity(self) -> int:
        return len(self.arg_types)


@dataclass(frozen=True)
class RuleTemplate:
    body: tuple[Literal, ...]
    head: Literal
    weighted: bool
    guards: tuple[Guard, ...] = ()
    template_id: str = field(default="", compare=False)
    span: Span = field(default=Span(0, 0), compare=False)

    def __str__(self):
        parts = [str(x) for x in self.body] + [str(g) for g in self.guards]
        lhs = " & ".join(parts)
        kw = "rule" if self.weighted else "hardconstraint"
        return f"{kw}: {lhs} => {self.head}"

    def atoms(self):
        for lit in self.body:
            yield lit.atom
        yield self.head.atom


@dataclass(frozen=True)
class ArithmeticConstraint:
    terms: tuple[tuple[Fraction, Atom], ...]
    comparator: str  # "<=" | ">=" | "="
    rhs: Fraction
    constraint_id: str = field(default="", compare=False)
    span: Span = field(default=Span(0, 0), compare=False)

    def __str__(self):
        parts = []
        for i, (coef, atom) in enumerate(self.terms):
            sign = "-" if coef < 0 else ("+" if i else "")
            mag = abs(coef)
            coef_txt = "" if mag == 1 else f"{_fmt_fraction(mag)} * "
            parts.append(f"{sign} {coef_txt}{atom}".strip())
        return f"arith: {' '.join(parts)} {self.comparator} {_fmt_fraction(self.rhs)}"


@dataclass(frozen=True)
class AbstractProgram:
    entities: tuple[EntityType, ...]
    relations: tuple[RelationSchema, ...]
    rules: tuple[RuleTemplate, ...]
    ariths: tuple[ArithmeticConstraint, ...]
    # declaration order across all statement kinds, for faithful printing
    order: tuple[tuple[str, int], ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class CheckedProgram:
    entities: dict
    relations: dict
    templates: tuple[RuleTemplate, ...]  # weighted, template ids r0..
    constraints: tuple[RuleTemplate, ...]  # hard logical, ids c0..
    ariths: tuple[ArithmeticConstraint, ...]  # ids a0..
    source: AbstractProgram

    def schema(self, predicate: str) -> RelationSchema:
        return self.relations[predicate]

    def is_open(self, predicate: str) -> bool:
        return self.relations[predicate].open

    def open_relations(self) -> list[str]:
        return [p for p, s in self.relations.items() if s.open]


def _fmt_fraction(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<number>\d+(\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<op>=>|<=|>=|!=|[()=,?~&+\-*/:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "keyword" | "number" | "string" | literal op text | "eof"
    text: str
    line: int
    col: int


def _lex(source: str) -> list[Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        text = m.group(0)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            if kind == "ident" and text in KEYWORDS:
                tok_kind = text
            elif kind == "op":
                tok_kind = text
            else:
                tok_kind = kind
            tokens.append(Token(tok_kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_STATEMENT_KEYWORDS = ("entity", "predicate", "rule", "hardconstraint", "arith")


class _Parser:
    def __init__(self, source: str):
        self.tokens = _lex(source)
        self.pos = 0

    # -- token plumbing

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, *kinds: str) -> Token:
        tok = self.peek()
        if tok.kind not in kinds:
            raise ParseError(
                f"unexpected {tok.text!r}" if tok.kind != "eof" else "unexpected end of input",
                tok.line,
                tok.col,
                expected=kinds,
            )
        return self.advance()

    def at(self, *kinds: str) -> bool:
        return self.peek().kind in kinds

    # -- grammar

    def program(self) -> AbstractProgram:
        entities, relations, rules, ariths, order = [], [], [], [], []
        while not self.at("eof"):
            tok = self.peek()
            if tok.kind == "entity":
                order.append(("entity", len(entities)))
                entities.append(self.entity_decl())
            elif tok.kind == "predicate":
                order.append(("predicate", len(relations)))
                relations.append(self.predicate_decl())
            elif tok.kind in ("rule", "hardconstraint"):
                order.append(("rule", len(rules)))
                rules.append(self.rule_decl())
            elif tok.kind == "arith":
                order.append(("arith", len(ariths)))
                ariths.append(self.arith_decl())
            else:
                raise ParseError(
                    f"unexpected {tok.text!r}", tok.line, tok.col, expected=_STATEMENT_KEYWORDS
                )
        return AbstractProgram(
            tuple(entities), tuple(relations), tuple(rules), tuple(ariths), tuple(order)
        )

    def entity_decl(self) -> EntityType:
        kw = self.expect("entity")
        name = self.expect("ident").text
        if self.at("features"):
            self.advance()
            self.expect("=")
            dim_tok = self.expect("number")
            if "." in dim_tok.text:
                raise ParseError("feature count must be an integer", dim_tok.line, dim_tok.col)
            return EntityType(name, ATTRIBUTED, int(dim_tok.text), Span(kw.line, kw.col))
        if self.at("vocab"):
            self.advance()
            return EntityType(name, ATTRIBUTED, VOCAB_FEATURES, Span(kw.line, kw.col))
        return EntityType(name, SYMBOLIC, None, Span(kw.line, kw.col))

    def predicate_decl(self) -> RelationSchema:
        kw = self.expect("predicate")
        name = self.expect("ident").text
        self.expect("(")
        arg_types = [self.expect("ident").text]
        while self.at(","):
            self.advance()
            arg_types.append(self.expect("ident").text)
        self.expect(")")
        is_open = False
        if self.at("?"):
            self.advance()
            is_open = True
        return RelationSchema(name, tuple(arg_types), is_open, Span(kw.line, kw.col))

    def rule_decl(self) -> RuleTemplate:
        kw = self.expect("rule", "hardconstraint")
        weighted = kw.kind == "rule"
        self.expect(":")
        body: list[Literal] = []
        guards: list[Guard] = []
        if not self.at("=>"):
            while True:
                elem = self.body_element()
                if isinstance(elem, Guard):
                    guards.append(elem)
                else:
                    body.append(elem)
                if not self.at("&"):
                    break
                self.advance()
        self.expect("=>")
        head = self.literal(allow_sum=False)
        return RuleTemplate(
            tuple(body), head, weighted, guards=tuple(guards), span=Span(kw.line, kw.col)
        )

    def body_element(self) -> Literal | Guard:
        if self.at("("):
            open_tok = self.advance()
            guard = self.guard(Span(open_tok.line, open_tok.col))
            self.expect(")")
            return guard
        if self.at("ident") and self.peek(1).kind in ("=", "!="):
            tok = self.peek()
            return self.guard(Span(tok.line, tok.col))
        return self.literal(allow_sum=False)

    def guard(self, span: Span) -> Guard:
        left = self.variable()
        op = self.expect("=", "!=")
        right = self.variable()
        return Guard(left, right, op.kind == "=", span)

    def variable(self) -> Var:
        tok = self.expect("ident")
        if not tok.text[0].isupper():
            raise ParseError(
                f"variables must start with an uppercase letter, got {tok.text!r}",
                tok.line,
                tok.col,
            )
        return Var(tok.text)

    def literal(self, allow_sum: bool) -> Literal:
        negated = False
        if self.at("~"):
            self.advance()
            negated = True
        return Literal(self.atom(allow_sum), negated)

    def atom(self, allow_sum: bool) -> Atom:
        name_tok = self.expect("ident")
        self.expect("(")
        args = [self.term(allow_sum)]
        while self.at(","):
            self.advance()
            args.append(self.term(allow_sum))
        self.expect(")")
        open_marked = False
        if self.at("?"):
            self.advance()
            open_marked = True
        return Atom(name_tok.text, tuple(args), Span(name_tok.line, name_tok.col), open_marked)

    def term(self, allow_sum: bool) -> Term:
        tok = self.peek()
        if tok.kind == "string":
            self.advance()
            return Const(tok.text[1:-1])
        if tok.kind == "+":
            if not allow_sum:
                raise ParseError(
                    "sum variables are only allowed in arithmetic constraints", tok.line, tok.col
                )
            self.advance()
            return SumVar(self.variable().name)
        if tok.kind == "ident":
            if not tok.text[0].isupper():
                raise ParseError(
                    f"unquoted term {tok.text!r} is not a variable; constants must be quoted",
                    tok.line,
                    tok.col,
                )
            self.advance()
            return Var(tok.text)
        if tok.kind == "number":
            raise ParseError(
                "numeric literals are not valid terms; rule weights come from scorers",
                tok.line,
                tok.col,
            )
        raise ParseError(
            f"unexpected {tok.text!r}", tok.line, tok.col, expected=("constant", "variable")
        )

    def arith_decl(self) -> ArithmeticConstraint:
        kw = self.expect("arith")
        self.expect(":")
        terms: list[tuple[Fraction, Atom]] = []
        sign = Fraction(1)
        if self.at("-"):
            self.advance()
            sign = Fraction(-1)
        terms.append(self.arith_term(sign))
        while self.at("+", "-"):
            sign = Fraction(1) if self.advance().kind == "+" else Fraction(-1)
            terms.append(self.arith_term(sign))
        cmp_tok = self.expect("<=", ">=", "=")
        rhs = self.rational()
        return ArithmeticConstraint(
            tuple(terms), cmp_tok.kind, rhs, span=Span(kw.line, kw.col)
        )

    def arith_term(self, sign: Fraction) -> tuple[Fraction, Atom]:
        coef = Fraction(1)
        if self.at("number"):
            coef = self.rational()
            if self.at("*"):
                self.advance()
        return (sign * coef, self.atom(allow_sum=True))

    def rational(self) -> Fraction:
        tok = self.expect("number")
        value = Fraction(tok.text)
        if self.at("/"):
            self.advance()
            den = self.expect("number")
            if "." in den.text:
                raise ParseError("fraction denominator must be an integer", den.line, den.col)
            value = value / Fraction(den.text)
        return value


def parse_program(source: str) -> AbstractProgram:
    """Parse program text into an unchecked AST with source locations."""
    return _Parser(source).program()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_atom(atom: Atom, relations: dict, var_types: dict, allow_sum: bool):
    """Arity/type agreement for one atom, updating the variable typing map."""
    schema = relations.get(atom.predicate)
    if schema is None:
        raise UndeclaredPredicateError(
            f"predicate {atom.predicate!r} is not declared", atom.span.line, atom.span.col
        )
    if len(atom.args) != schema.arity:
        raise TypeMismatchError(
            f"{atom.predicate} expects {schema.arity} argument(s), got {len(atom.args)}",
            atom.span.line,
            atom.span.col,
        )
    if atom.open_marked and not schema.open:
        raise TypeMismatchError(
            f"'?' annotation on atom of closed relation {atom.predicate!r}",
            atom.span.line,
            atom.span.col,
        )
    for arg, arg_type in zip(atom.args, schema.arg_types):
        if isinstance(arg, SumVar) and not allow_sum:
            raise TypeMismatchError(
                "sum variables are only allowed in arithmetic constraints",
                atom.span.line,
                atom.span.col,
            )
        if isinstance(arg, (Var, SumVar)):
            seen = var_types.get(arg.name)
            if seen is not None and seen != arg_type:
                raise TypeMismatchError(
                    f"variable {arg.name} used both as {seen} and as {arg_type}",
                    atom.span.line,
                    atom.span.col,
                )
            var_types[arg.name] = arg_type


def validate(program: AbstractProgram) -> CheckedProgram:
    """Semantic checks; assigns stable ids r0../c0../a0.. in source order."""
    entities: dict[str, EntityType] = {}
    for ent in program.entities:
        if ent.name in entities:
            raise DuplicateDeclarationError(
                f"entity {ent.name!r} declared twice", ent.span.line, ent.span.col
            )
        entities[ent.name] = ent

    relations: dict[str, RelationSchema] = {}
    for rel in program.relations:
        if rel.predicate in relations:
            raise DuplicateDeclarationError(
                f"predicate {rel.predicate!r} declared twice", rel.span.line, rel.span.col
            )
        for t in rel.arg_types:
            if t not in entities:
                raise UndeclaredPredicateError(
                    f"entity type {t!r} in predicate {rel.predicate!r} is not declared",
                    rel.span.line,
                    rel.span.col,
                )
        relations[rel.predicate] = rel

    templates: list[RuleTemplate] = []
    constraints: list[RuleTemplate] = []
    seen_weighted: set = set()
    for rule in program.rules:
        var_types: dict[str, str] = {}
        for lit in rule.body:
            _check_atom(lit.atom, relations, var_types, allow_sum=False)
        _check_atom(rule.head.atom, relations, var_types, allow_sum=False)
        for guard in rule.guards:
            for v in (guard.left, guard.right):
                if v.name not in var_types:
                    raise UnsafeVariableError(
                        f"guard variable {v.name} does not appear in any atom",
                        guard.span.line,
                        guard.span.col,
                    )

        head_schema = relations[rule.head.atom.predicate]
        if not head_schema.open:
            raise ClosedHeadRelationError(
                f"head relation {head_schema.predicate!r} is closed",
                rule.head.atom.span.line,
                rule.head.atom.span.col,
            )
        if rule.weighted and rule.head.negated:
            raise NegatedWeightedHeadError(
                "weighted rules must have a positive head; use a hardconstraint",
                rule.head.atom.span.line,
                rule.head.atom.span.col,
            )

        # binding variables: those occurring in a positive closed literal or in
        # any open literal (open atoms join over the candidate table either way)
        bound: set[str] = set()
        for lit in rule.body:
            if relations[lit.atom.predicate].open or not lit.negated:
                bound |= lit.atom.variables()
        for v in rule.head.atom.variables():
            if v not in bound:
                raise UnboundHeadVariableError(
                    f"head variable {v} is not bound by the body",
                    rule.head.atom.span.line,
                    rule.head.atom.span.col,
                )
        for lit in rule.body:
            for v in lit.atom.variables():
                if v not in bound:
                    raise UnsafeVariableError(
                        f"variable {v} occurs only under negation",
                        lit.atom.span.line,
                        lit.atom.span.col,
                    )

        if rule.weighted:
            key = (rule.body, rule.guards, rule.head)
            if key in seen_weighted:
                raise DuplicateTemplateError(
                    "duplicate weighted template", rule.span.line, rule.span.col
                )
            seen_weighted.add(key)
            templates.append(
                RuleTemplate(
                    rule.body,
                    rule.head,
                    True,
                    guards=rule.guards,
                    template_id=f"r{len(templates)}",
                    span=rule.span,
                )
            )
        else:
            constraints.append(
                RuleTemplate(
                    rule.body,
                    rule.head,
                    False,
                    guards=rule.guards,
                    template_id=f"c{len(constraints)}",
                    span=rule.span,
                )
            )

    ariths: list[ArithmeticConstraint] = []
    for arith in program.ariths:
        var_types = {}
        any_open = False
        sum_names, plain_names = set(), set()
        for coef, atom in arith.terms:
            _check_atom(atom, relations, var_types, allow_sum=True)
            any_open |= relations[atom.predicate].open
            for t in atom.args:
                if isinstance(t, SumVar):
                    sum_names.add(t.name)
                elif isinstance(t, Var):
                    plain_names.add(t.name)
        clash = sum_names & plain_names
        if clash:
            raise TypeMismatchError(
                f"variable {sorted(clash)[0]} used both as sum and plain variable",
                arith.span.line,
                arith.span.col,
            )
        if not any_open:
            raise TypeMismatchError(
                "arithmetic constraint references no open relation",
                arith.span.line,
                arith.span.col,
            )
        ariths.append(
            ArithmeticConstraint(
                arith.terms,
                arith.comparator,
                arith.rhs,
                constraint_id=f"a{len(ariths)}",
                span=arith.span,
            )
        )

    return CheckedProgram(
        entities=entities,
        relations=relations,
        templates=tuple(templates),
        constraints=tuple(constraints),
        ariths=tuple(ariths),
        source=program,
    )


def compile_program(source: str) -> CheckedProgram:
    return validate(parse_program(source))


# ---------------------------------------------------------------------------
# Disjunctive form and printing
# ---------------------------------------------------------------------------

def to_disjunctive_form(rule: RuleTemplate) -> tuple[Literal, ...]:
    """Rewrite ``body => head`` as the clause ``~b1 | ~b2 | ... | head``.

    Closed literals are kept: they gate grounding rather than inference.
    Guards are grounding-time filters and do not appear in the clause.
    """
    return tuple(lit.negate() for lit in rule.body) + (rule.head,)


def pretty_print(program: AbstractProgram) -> str:
    """Canonical source text; ``parse(pretty_print(parse(s)))`` equals ``parse(s)``."""
    lines = []
    for kind, idx in program.order:
        if kind == "entity":
            ent = program.entities[idx]
            if ent.feature_spec == VOCAB_FEATURES:
                lines.append(f"entity {ent.name} vocab")
            elif ent.feature_spec is not None:
                lines.append(f"entity {ent.name} features={ent.feature_spec}")
            else:
                lines.append(f"entity {ent.name}")
        elif kind == "predicate":
            rel = program.relations[idx]
            suffix = "?" if rel.open else ""
            lines.append(f"predicate {rel.predicate}({', '.join(rel.arg_types)}){suffix}")
        elif kind == "rule":
            lines.append(str(program.rules[idx]))
        else:
            lines.append(str(program.ariths[idx]))
    return "\n".join(lines) + "\n"
