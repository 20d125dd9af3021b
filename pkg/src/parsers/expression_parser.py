"""Recursive descent parser for the expression language.

Grammar::

    expr   := term { ("+"|"-") term }
    term   := factor { ("*"|"/") factor }
    factor := ["-"] power
    power  := atom [ "^" factor ]
    atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
"""

import re

from mechanics.expression import (
    FUNCTIONS,
    BinaryOp,
    Call,
    Expression,
    Negate,
    Number,
    Variable,
)
from utils.errors import ArityError, ExpressionSyntaxError, UnknownIdentifierError

TOKEN_TYPES = [
    ("NUMBER", r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"[-+*/^]"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("COMMA", r","),
    ("SPACE", r"[ \t]+"),
]
TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in TOKEN_TYPES))


class Token:
    def __init__(self, kind, text, offset):
        self.kind = kind
        self.text = text
        self.offset = offset

    def __repr__(self):
        return f"({self.kind}, {self.text!r}, {self.offset})"


class ExpressionParser:
    def __init__(self, text, symbols):
        self.text = text
        self.symbols = tuple(symbols)
        self._allowed = set(self.symbols)
        self.tokens = self._tokenize()
        self.pos = 0

    def _byte_offset(self, index):
        return len(self.text[:index].encode("utf-8"))

    def _error(self, cls, message, index):
        return cls(message, self._byte_offset(index), self.text)

    def _tokenize(self):
        tokens = []
        index = 0
        while index < len(self.text):
            match = TOKEN_RE.match(self.text, index)
            if not match:
                raise self._error(
                    ExpressionSyntaxError, f"unexpected character {self.text[index]!r}", index
                )
            if match.lastgroup != "SPACE":
                tokens.append(Token(match.lastgroup, match.group(), index))
            index = match.end()
        tokens.append(Token("EOF", "", len(self.text)))
        return tokens

    @property
    def current(self):
        return self.tokens[self.pos]

    def _advance(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _expect(self, kind, what):
        token = self.current
        if token.kind != kind:
            found = token.text or "end of input"
            message = f"expected {what}, found {found!r}"
            raise self._error(ExpressionSyntaxError, message, token.offset)
        return self._advance()

    def parse(self):
        if self.current.kind == "EOF":
            raise self._error(ExpressionSyntaxError, "empty expression", 0)
        root = self._expr()
        if self.current.kind != "EOF":
            token = self.current
            raise self._error(ExpressionSyntaxError, f"unexpected {token.text!r}", token.offset)
        return Expression(root, self.symbols, self.text)

    def _expr(self):
        node = self._term()
        while self.current.kind == "OP" and self.current.text in "+-":
            token = self._advance()
            node = BinaryOp(token.text, node, self._term(), self._byte_offset(token.offset))
        return node

    def _term(self):
        node = self._factor()
        while self.current.kind == "OP" and self.current.text in "*/":
            token = self._advance()
            node = BinaryOp(token.text, node, self._factor(), self._byte_offset(token.offset))
        return node

    def _factor(self):
        if self.current.kind == "OP" and self.current.text == "-":
            token = self._advance()
            return Negate(self._power(), self._byte_offset(token.offset))
        return self._power()

    def _power(self):
        base = self._atom()
        if self.current.kind == "OP" and self.current.text == "^":
            token = self._advance()
            return BinaryOp("^", base, self._factor(), self._byte_offset(token.offset))
        return base

    def _atom(self):
        token = self.current
        offset = self._byte_offset(token.offset)
        if token.kind == "NUMBER":
            self._advance()
            return Number(float(token.text), offset)
        if token.kind == "LPAREN":
            self._advance()
            node = self._expr()
            self._expect("RPAREN", "')'")
            return node
        if token.kind == "IDENT":
            self._advance()
            if token.text in FUNCTIONS:
                return self._call(token, offset)
            if self.current.kind == "LPAREN":
                raise self._error(
                    UnknownIdentifierError, f"unknown function '{token.text}'", token.offset
                )
            if token.text not in self._allowed:
                raise self._error(
                    UnknownIdentifierError, f"unknown identifier '{token.text}'", token.offset
                )
            return Variable(token.text, offset)
        found = token.text or "end of input"
        raise self._error(ExpressionSyntaxError, f"unexpected {found!r}", token.offset)

    def _call(self, name, offset):
        if self.current.kind != "LPAREN":
            raise self._error(
                ArityError, f"function '{name.text}' takes exactly 1 argument", name.offset
            )
        self._advance()
        if self.current.kind == "RPAREN":
            raise self._error(
                ArityError, f"function '{name.text}' takes exactly 1 argument", name.offset
            )
        arg = self._expr()
        if self.current.kind == "COMMA":
            raise self._error(
                ArityError, f"function '{name.text}' takes exactly 1 argument", name.offset
            )
        self._expect("RPAREN", "')'")
        return Call(name.text, arg, offset)


def parse_expression(text, symbols):
    """Parse text against an ordered symbol list and return an immutable Expression."""
    return ExpressionParser(text, symbols).parse()
