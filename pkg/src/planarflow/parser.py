"""Recursive-descent parser for the expression language.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := unary ('^' factor)?
    unary  := '-'? atom
    atom   := number | 'pi' | identifier | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | exp | ln | sqrt | abs

Identifiers are x1, x2, t or a declared parameter name; anything else raises
UnknownIdentifier.  '^' is right-associative and the unary minus binds the
base, so ``-x1^2`` parses as ``(-x1)^2``.
"""

from __future__ import annotations

import math
from typing import Iterable

from .errors import ExprSyntaxError, UnknownIdentifier
from .expr import (Abs, Add, Constant, Cos, Div, Exp, Expr, Ln, Mul, Neg,
                   Parameter, Pow, Sin, Sqrt, Sub, Variable, VARIABLE_NAMES)

_FUNCS = {"sin": Sin, "cos": Cos, "exp": Exp, "ln": Ln, "sqrt": Sqrt, "abs": Abs}


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^(),":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lexeme = text[i:j]
            try:
                value = float(lexeme)
            except ValueError:
                raise ExprSyntaxError(f"bad number literal {lexeme!r}", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, parameters):
        self.tokens = tokens
        self.pos = 0
        self.parameters = parameters

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.parse_term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.parse_factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def parse_factor(self) -> Expr:
        base = self.parse_unary()
        if self.peek()[0] == "^":
            self.advance()
            expo = self.parse_factor()
            return Pow(base, expo)
        return base

    def parse_unary(self) -> Expr:
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.parse_atom())
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        tok = self.advance()
        kind, value, offset = tok
        if kind == "num":
            return Constant(value)
        if kind == "(":
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if kind == "ident":
            if value in _FUNCS:
                self.expect("(")
                arg = self.parse_expr()
                self.expect(")")
                return _FUNCS[value](arg)
            if value == "pi":
                return Constant(math.pi)
            if value in VARIABLE_NAMES:
                return Variable(value)
            if value in self.parameters:
                return Parameter(value)
            raise UnknownIdentifier(value, offset)
        raise ExprSyntaxError(f"unexpected token {value!r}", offset)


def parse(text: str, parameters: Iterable[str] = ()) -> Expr:
    """Parse expression text into a tree.

    ``parameters`` declares the parameter names allowed to appear; undeclared
    names raise UnknownIdentifier with the byte offset of the occurrence.
    """
    parser = _Parser(_tokenize(text), frozenset(parameters))
    node = parser.parse_expr()
    end = parser.peek()
    if end[0] != "end":
        raise ExprSyntaxError(f"trailing input {end[1]!r}", end[2])
    return node
