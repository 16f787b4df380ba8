"""Minimal boolean expression grammar used by Liberty ``function`` attributes.

Grammar (lowest to highest precedence)::

    expr   := xor ('|' xor)*
    xor    := term ('^' term)*
    term   := factor ('&' factor)*
    factor := '!' factor | '(' expr ')' | IDENT
"""
from __future__ import annotations

import re
from typing import Mapping

import numpy as np

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_\[\]]*)|([&|^!()]))")


class ExpressionError(ValueError):
    pass


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {text[pos:].strip()[:1]!r} in {text!r}")
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ExpressionError(f"expected {expected or 'token'} in {self.text!r}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise ExpressionError(f"trailing token {self.peek()!r} in {self.text!r}")
        return node

    def _chain(self, op, sub):
        node = sub()
        while self.peek() == op:
            self.take()
            node = ({"|": "or", "^": "xor", "&": "and"}[op], node, sub())
        return node

    def expr(self):
        return self._chain("|", self.xor)

    def xor(self):
        return self._chain("^", self.term)

    def term(self):
        return self._chain("&", self.factor)

    def factor(self):
        tok = self.peek()
        if tok == "!":
            self.take()
            return ("not", self.factor())
        if tok == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok is None or tok in "&|^)":
            raise ExpressionError(f"expected operand in {self.text!r}")
        self.take()
        return ("var", tok)


def parse_expr(text: str) -> tuple:
    """Parse ``text`` into a nested-tuple AST."""
    if not text.strip():
        raise ExpressionError("empty expression")
    return _Parser(text).parse()


def variables(ast: tuple) -> set[str]:
    if ast[0] == "var":
        return {ast[1]}
    return set().union(*(variables(a) for a in ast[1:]))


def evaluate(ast: tuple, env: Mapping[str, np.ndarray]) -> np.ndarray:
    """Evaluate over boolean numpy arrays (one lane per input vector)."""
    op = ast[0]
    if op == "var":
        return np.asarray(env[ast[1]], dtype=bool)
    if op == "not":
        return np.logical_not(evaluate(ast[1], env))
    a = evaluate(ast[1], env)
    b = evaluate(ast[2], env)
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    return a ^ b


def to_string(ast: tuple) -> str:
    op = ast[0]
    if op == "var":
        return ast[1]
    if op == "not":
        return "!" + to_string(ast[1])
    sym = {"and": "&", "or": "|", "xor": "^"}[op]
    return f"({to_string(ast[1])} {sym} {to_string(ast[2])})"
