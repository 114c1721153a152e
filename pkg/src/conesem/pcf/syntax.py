"""Abstract syntax of the probabilistic PCF and its concrete printer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

UNOPS = ("log", "sqrt", "cos", "exp", "neg")
BINOPS = ("plus", "mult")
KEYWORDS = frozenset({"lam", "let", "in", "fix", "choice", "unif", "real", "unit", *UNOPS, *BINOPS})

Pos = Optional[tuple]


# -- types -------------------------------------------------------------------

@dataclass(frozen=True)
class RealT:
    def __str__(self):
        return "real"


@dataclass(frozen=True)
class UnitT:
    def __str__(self):
        return "unit"


@dataclass(frozen=True)
class Arrow:
    dom: "Type"
    cod: "Type"

    def __str__(self):
        left = f"({self.dom})" if isinstance(self.dom, Arrow) else str(self.dom)
        return f"{left} => {self.cod}"


Type = Union[RealT, UnitT, Arrow]
REAL = RealT()
UNIT = UnitT()


def is_ground(t: Type) -> bool:
    return not isinstance(t, Arrow)


# -- terms -------------------------------------------------------------------
# Source positions are carried for diagnostics but ignored by equality.

@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Lam:
    name: str
    ty: Type
    body: "Term"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Term"
    body: "Term"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Fix:
    body: "Term"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: float
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unif:
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Choice:
    p: float
    left: "Term"
    right: "Term"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unop:
    op: str
    arg: "Term"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Binop:
    op: str
    left: "Term"
    right: "Term"
    pos: Pos = field(default=None, compare=False, repr=False)


Term = Union[Var, Lam, App, Let, Fix, Num, Unif, Choice, Unop, Binop]


def free_vars(t: Term) -> frozenset:
    match t:
        case Var(name):
            return frozenset({name})
        case Lam(name, _, body):
            return free_vars(body) - {name}
        case Let(name, bound, body):
            return free_vars(bound) | (free_vars(body) - {name})
        case App(a, b) | Binop(_, a, b) | Choice(_, a, b):
            return free_vars(a) | free_vars(b)
        case Fix(a) | Unop(_, a):
            return free_vars(a)
        case _:
            return frozenset()


# -- printer -----------------------------------------------------------------

def _num(x: float) -> str:
    return repr(float(x))


def show(t: Term) -> str:
    """Concrete syntax that parses back to ``t``."""
    match t:
        case Lam(name, ty, body):
            return f"lam {name}: {ty}. {show(body)}"
        case Let(name, bound, body):
            return f"let {name} = {show(bound)} in {show(body)}"
        case Fix(body):
            return f"fix {show(body)}"
        case Choice(p, left, right):
            return f"choice {_num(p)} {_atom(left)} {_atom(right)}"
        case App(fn, arg):
            head = show(fn) if isinstance(fn, App) else _atom(fn)
            return f"{head} {_atom(arg)}"
        case _:
            return _atom(t)


def _atom(t: Term) -> str:
    match t:
        case Var(name):
            return name
        case Num(v):
            return _num(v)
        case Unif():
            return "unif"
        case Unop(op, a):
            return f"{op}({show(a)})"
        case Binop(op, a, b):
            return f"{op}({show(a)}, {show(b)})"
        case _:
            return f"({show(t)})"
