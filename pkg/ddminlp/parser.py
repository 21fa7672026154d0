from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

from ddminlp.expr import Term
from ddminlp.expr import constant_offset
from ddminlp.expr import decompose
from ddminlp.expr import linear_form
from ddminlp.interval import Interval
from ddminlp.interval import enclose
from ddminlp.model import ConstraintSpec
from ddminlp.model import Epigraph
from ddminlp.model import Model
from ddminlp.model import Variable
from ddminlp.nodes import CONSTANTS
from ddminlp.nodes import FUNCTIONS
from ddminlp.nodes import Binary
from ddminlp.nodes import Const
from ddminlp.nodes import ExpressionError
from ddminlp.nodes import Expression
from ddminlp.nodes import Sum
from ddminlp.nodes import Unary
from ddminlp.nodes import Var
from ddminlp.nodes import binary_value
from ddminlp.nodes import unary_value

logger = logging.getLogger(__name__)

TOKEN_RE = re.compile(
    r"""
    (?P<space>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|[-+*/^()\[\],;])
    """,
    re.VERBOSE,
)

SENSES = ('<=', '>=', '==')
OPERATORS = {'+': 'add', '-': 'sub', '*': 'mul', '/': 'div', '^': 'pow'}
KEYWORDS = frozenset({'var', 'in', 'integer', 'max', 'min', 'con', 'primal'})
EPIGRAPH_NAME = '_obj'


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f'line {line}, col {col}: {message}')
        self.line = line
        self.col = col


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        if m is None:
            err_msg = f'unexpected character {text[pos]!r}'
            raise ParseError(err_msg, line, pos - start + 1)
        kind = m.lastgroup or ''
        if kind == 'newline':
            line += 1
            start = m.end()
        elif kind not in ('space', 'comment'):
            tokens.append(Token(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    tokens.append(Token('eof', '', line, pos - start + 1))
    return tokens


class Parser:
    """
    Recursive-descent reader for instance files.

    Statements end with ';':
        var NAME in [LO, HI] [integer];
        max EXPR;  |  min EXPR;
        con EXPR (<= | >= | ==) EXPR;
        primal VALUE;
    """

    def __init__(self, text: str, name: str = '') -> None:
        self.tokens = tokenize(text)
        self.pos = 0
        self.name = name
        self.variables: list[Variable] = []
        self.index: dict[str, int] = {}
        self.sense: str | None = None
        self.objective: Expression | None = None
        self.objective_at: Token | None = None
        self.constraints: list[tuple[str, Expression, Token]] = []
        self.primal: float | None = None

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.current
        return ParseError(message, tok.line, tok.col)

    def advance(self) -> Token:
        tok = self.current
        self.pos += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.current.text == text and self.current.kind in ('op', 'name'):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if self.current.text != text:
            found = self.current.text or 'end of input'
            raise self.error(f'expected {text!r}, found {found!r}')
        return self.advance()

    def parse(self) -> Model:
        while self.current.kind != 'eof':
            self.statement()
        return self.build()

    def statement(self) -> None:
        tok = self.current
        if tok.kind != 'name' or tok.text not in ('var', 'max', 'min', 'con', 'primal'):
            raise self.error(f'expected a statement, found {tok.text!r}')
        self.advance()
        match tok.text:
            case 'var':
                self.declaration()
            case 'max' | 'min':
                if self.sense is not None:
                    raise self.error('objective declared twice', tok)
                self.sense, self.objective_at = tok.text, tok
                self.objective = self.expression()
            case 'con':
                lhs = self.expression()
                sense = self.current
                if sense.text not in SENSES:
                    raise self.error(f'expected one of {SENSES}, found {sense.text!r}')
                self.advance()
                self.constraints.append((sense.text, Binary('sub', lhs, self.expression()), tok))
            case 'primal':
                self.primal = self.signed_number()
        self.expect(';')

    def declaration(self) -> None:
        tok = self.current
        if tok.kind != 'name' or tok.text in KEYWORDS:
            raise self.error(f'expected a variable name, found {tok.text!r}')
        self.advance()
        if tok.text in self.index:
            raise self.error(f'variable {tok.text!r} declared twice', tok)
        if tok.text in CONSTANTS or tok.text in FUNCTIONS:
            raise self.error(f'{tok.text!r} is a reserved name', tok)
        if self.current.text != 'in':
            raise self.error(f'variable {tok.text!r} needs explicit bounds')
        self.advance()
        self.expect('[')
        lo = self.signed_number()
        self.expect(',')
        hi = self.signed_number()
        self.expect(']')
        integer = self.accept('integer')
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise self.error(f'variable {tok.text!r} has unbounded domain', tok)
        if lo > hi:
            raise self.error(f'variable {tok.text!r} has empty domain [{lo}, {hi}]', tok)
        if integer and (lo != math.floor(lo) or hi != math.floor(hi)):
            raise self.error(f'integer variable {tok.text!r} has fractional bounds', tok)
        self.index[tok.text] = len(self.variables)
        self.variables.append(Variable(tok.text, lo, hi, integer))

    def signed_number(self) -> float:
        sign = 1.0
        if self.accept('-'):
            sign = -1.0
        else:
            self.accept('+')
        tok = self.current
        if tok.kind == 'number':
            self.advance()
            return sign * float(tok.text)
        if tok.kind == 'name' and tok.text in CONSTANTS:
            self.advance()
            return sign * CONSTANTS[tok.text]
        raise self.error(f'expected a number, found {tok.text!r}')

    # expression grammar, lowest precedence first
    def expression(self) -> Expression:
        node = self.product()
        while self.current.text in ('+', '-') and self.current.kind == 'op':
            op = OPERATORS[self.advance().text]
            node = self.fold(Binary(op, node, self.product()))
        return node

    def product(self) -> Expression:
        node = self.unary()
        while self.current.text in ('*', '/') and self.current.kind == 'op':
            op = OPERATORS[self.advance().text]
            node = self.fold(Binary(op, node, self.unary()))
        return node

    def unary(self) -> Expression:
        if self.accept('-'):
            return self.fold(Unary('neg', self.unary()))
        if self.accept('+'):
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.accept('^'):
            return self.fold(Binary('pow', base, self.unary()))
        return base

    def atom(self) -> Expression:
        tok = self.advance()
        if tok.kind == 'number':
            return Const(float(tok.text))
        if tok.text == '(':
            node = self.expression()
            self.expect(')')
            return node
        if tok.kind != 'name':
            raise self.error(f'unexpected {tok.text or "end of input"!r}', tok)
        if tok.text in FUNCTIONS:
            return self.call(tok)
        if tok.text in CONSTANTS:
            return Const(CONSTANTS[tok.text])
        if self.current.text == '(':
            raise self.error(f'unknown function {tok.text!r}', tok)
        if tok.text not in self.index:
            raise self.error(f'undeclared variable {tok.text!r}', tok)
        return Var(self.index[tok.text])

    def call(self, tok: Token) -> Expression:
        self.expect('(')
        args = [self.expression()]
        while self.accept(','):
            args.append(self.expression())
        self.expect(')')
        if len(args) != FUNCTIONS[tok.text]:
            err_msg = f'{tok.text} takes {FUNCTIONS[tok.text]} argument(s), got {len(args)}'
            raise self.error(err_msg, tok)
        if len(args) == 1:
            return self.fold(Unary(tok.text, args[0]), tok)
        return self.fold(Binary(tok.text, args[0], args[1]), tok)

    def fold(self, e: Expression, tok: Token | None = None) -> Expression:
        """Replaces an operator applied to literals by its value."""
        try:
            match e:
                case Unary(op=op, arg=Const(value=a)):
                    return Const(unary_value(op, a))
                case Binary(op=op, left=Const(value=a), right=Const(value=b)):
                    return Const(binary_value(op, a, b))
        except ExpressionError as exc:
            raise self.error(str(exc), tok) from exc
        return e

    def build(self) -> Model:
        n = len(self.variables)
        objective = [0.0] * n
        offset = 0.0
        constraints: list[ConstraintSpec] = []
        epigraph: Epigraph | None = None

        if self.objective is not None:
            f = self.objective if self.sense == 'max' else Unary('neg', self.objective)
            if (lin := linear_form(f)) is not None:
                for i, c in lin[0].items():
                    objective[i] += c
                offset = lin[1]
            else:
                offset = constant_offset(f)
                epigraph = self.epigraph(f, constraints)
                objective.append(1.0)

        for k, (sense, diff, tok) in enumerate(self.constraints, start=1):
            if sense in ('<=', '=='):
                self.add_constraint(constraints, diff, f'c{k}', tok)
            if sense in ('>=', '=='):
                name = f'c{k}:ge' if sense == '==' else f'c{k}'
                self.add_constraint(constraints, Unary('neg', diff), name, tok)

        model = Model(
            variables=tuple(self.variables),
            objective=tuple(objective),
            constraints=tuple(constraints),
            offset=offset,
            minimize=self.sense == 'min',
            primal_bound=self.primal,
            epigraph=epigraph,
            name=self.name,
        )
        logger.debug(
            f'parsed model={self.name!r} vars={model.dimension} '
            f'constraints={len(model.constraints)}'
        )
        return model

    def add_constraint(
        self, out: list[ConstraintSpec], diff: Expression, name: str, tok: Token
    ) -> None:
        try:
            terms = decompose(diff)
            rhs = -constant_offset(diff)
        except ExpressionError as exc:
            raise self.error(str(exc), tok) from exc
        if not terms:
            if rhs >= 0:
                logger.warning(f'constraint {name} has no variables and always holds')
                return
            raise self.error(f'constraint {name} has no variables and never holds', tok)
        out.append(ConstraintSpec(tuple(terms), rhs, name))

    def epigraph(self, f: Expression, out: list[ConstraintSpec]) -> Epigraph:
        """Moves a nonlinear objective into constraints on a new variable."""
        tok = self.objective_at
        assert tok is not None
        terms = decompose(f)
        g = terms[0].expr if len(terms) == 1 else Sum(tuple(t.expr for t in terms))
        domains = tuple((v.lower, v.upper) for v in self.variables)
        try:
            r = enclose(g, [Interval(lo, hi) for lo, hi in domains])
        except ExpressionError as exc:
            raise self.error(f'cannot bound the objective: {exc}', tok) from exc

        name = EPIGRAPH_NAME
        while name in self.index:
            name += '_'
        z = len(self.variables)
        self.index[name] = z
        self.variables.append(Variable(name, r.lo, r.hi))
        upper = [Term(Var(z)), *decompose(Unary('neg', g))]
        lower = [*terms, Term(Unary('neg', Var(z)))]
        out.append(ConstraintSpec(tuple(upper), 0.0, 'obj'))
        out.append(ConstraintSpec(tuple(lower), 0.0, 'obj:ge'))
        logger.info(f'objective moved to epigraph variable {name!r} in [{r.lo:g}, {r.hi:g}]')
        return Epigraph(z, g)


def parse(text: str, name: str = '') -> Model:
    """Parses instance text into a `Model`."""
    return Parser(text, name).parse()
