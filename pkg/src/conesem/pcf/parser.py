"""Tokenizer and recursive-descent parser for the PCF surface syntax.

    term   := "lam" ident ":" type "." term
            | "let" ident "=" term "in" term
            | "fix" term
            | "choice" real atom atom
            | app
    app    := atom { atom }
    atom   := ident | real | "unif" | "(" term ")"
            | unop "(" term ")" | binop "(" term "," term ")"
    type   := base [ "=>" type ]          (right associative)
    base   := "real" | "unit" | "(" type ")"

``#`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, NamedTuple

from ..errors import PcfSyntaxError
from .syntax import (BINOPS, KEYWORDS, REAL, UNIT, UNOPS, App, Arrow, Binop, Choice, Fix, Lam,
                     Let, Num, Term, Type, Unif, Unop, Var)

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>-?\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>=>|[().,:=])
""", re.VERBOSE)


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise PcfSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            if kind == "ident" and chunk in KEYWORDS:
                kind = "kw"
            out.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str, free: Iterable[str]):
        self.toks = tokenize(text)
        self.i = 0
        self.scope = list(free)
        self.unbound: Token | None = None

    # helpers -------------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        where = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise PcfSyntaxError(f"{msg} (at {where})", tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("kw", "sym")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> str:
        if self.tok.kind != "ident":
            self.error("expected an identifier")
        return self.advance().text

    def real(self) -> float:
        if self.tok.kind != "num":
            self.error("expected a real literal")
        tok = self.advance()
        v = float(tok.text)
        if not math.isfinite(v):
            self.error("real literal out of range", tok)
        return v

    # grammar -------------------------------------------------------------

    def parse(self) -> Term:
        t = self.term()
        if self.tok.kind != "eof":
            self.error("unexpected trailing input")
        # scope errors are reported only for syntactically complete input
        if self.unbound is not None:
            self.error(f"unbound variable {self.unbound.text!r}", self.unbound)
        return t

    def term(self) -> Term:
        tok = self.tok
        pos = (tok.line, tok.col)
        if self.at("lam"):
            self.advance()
            name = self.ident()
            self.expect(":")
            ty = self.type_()
            self.expect(".")
            return Lam(name, ty, self.scoped(name, self.term), pos)
        if self.at("let"):
            self.advance()
            name = self.ident()
            self.expect("=")
            bound = self.term()
            self.expect("in")
            return Let(name, bound, self.scoped(name, self.term), pos)
        if self.at("fix"):
            self.advance()
            return Fix(self.term(), pos)
        if self.at("choice"):
            self.advance()
            ptok = self.tok
            p = self.real()
            if not 0.0 <= p <= 1.0:
                self.error("choice probability must lie in [0, 1]", ptok)
            return Choice(p, self.atom(), self.atom(), pos)
        return self.app()

    def scoped(self, name: str, parse_body):
        self.scope.append(name)
        try:
            return parse_body()
        finally:
            self.scope.pop()

    def starts_atom(self) -> bool:
        tok = self.tok
        return (tok.kind in ("ident", "num") or (tok.kind == "sym" and tok.text == "(")
                or (tok.kind == "kw" and (tok.text == "unif" or tok.text in UNOPS
                                          or tok.text in BINOPS)))

    def app(self) -> Term:
        t = self.atom()
        while self.starts_atom():
            tok = self.tok
            t = App(t, self.atom(), (tok.line, tok.col))
        return t

    def atom(self) -> Term:
        tok = self.tok
        pos = (tok.line, tok.col)
        if tok.kind == "ident":
            self.advance()
            if tok.text not in self.scope and self.unbound is None:
                self.unbound = tok
            return Var(tok.text, pos)
        if tok.kind == "num":
            return Num(self.real(), pos)
        if self.at("unif"):
            self.advance()
            return Unif(pos)
        if self.at("("):
            self.advance()
            t = self.term()
            self.expect(")")
            return t
        if tok.kind == "kw" and tok.text in UNOPS:
            self.advance()
            self.expect("(")
            arg = self.term()
            self.expect(")")
            return Unop(tok.text, arg, pos)
        if tok.kind == "kw" and tok.text in BINOPS:
            self.advance()
            self.expect("(")
            left = self.term()
            self.expect(",")
            right = self.term()
            self.expect(")")
            return Binop(tok.text, left, right, pos)
        self.error("expected a term")

    def type_(self) -> Type:
        if self.at("real"):
            self.advance()
            base = REAL
        elif self.at("unit"):
            self.advance()
            base = UNIT
        elif self.at("("):
            self.advance()
            base = self.type_()
            self.expect(")")
        else:
            self.error("expected a type")
        if self.at("=>"):
            self.advance()
            return Arrow(base, self.type_())
        return base


def parse(text: str, free: Iterable[str] = ()) -> Term:
    """Parse ``text``; identifiers must be bound by the term or listed in ``free``."""
    return _Parser(text, free).parse()


def parse_type(text: str) -> Type:
    p = _Parser(text, ())
    ty = p.type_()
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    return ty
