"""Simply-typed checking with a sampling ``let`` over reals."""

from __future__ import annotations

from typing import Mapping

from ..errors import PcfTypeError
from .syntax import (REAL, App, Arrow, Binop, Choice, Fix, Lam, Let, Num, Term, Type, Unif,
                     Unop, Var, show)


def _where(t: Term) -> str:
    return f" at {t.pos[0]}:{t.pos[1]}" if t.pos else ""


def _fail(msg: str, t: Term):
    raise PcfTypeError(f"{msg}{_where(t)} in `{show(t)}`", term=t)


def typecheck(t: Term, env: Mapping[str, Type] | None = None) -> Type:
    env = dict(env or {})
    match t:
        case Var(name):
            if name not in env:
                _fail(f"unbound variable {name!r}", t)
            return env[name]
        case Num() | Unif():
            return REAL
        case Lam(name, ty, body):
            return Arrow(ty, typecheck(body, {**env, name: ty}))
        case App(fn, arg):
            fty = typecheck(fn, env)
            if not isinstance(fty, Arrow):
                _fail(f"applying a non-function of type {fty}", fn)
            aty = typecheck(arg, env)
            if aty != fty.dom:
                _fail(f"argument has type {aty}, expected {fty.dom}", arg)
            return fty.cod
        case Let(name, bound, body):
            bty = typecheck(bound, env)
            if bty != REAL:
                _fail(f"sampled term must have type real, not {bty}", bound)
            return typecheck(body, {**env, name: REAL})
        case Fix(body):
            fty = typecheck(body, env)
            if not (isinstance(fty, Arrow) and fty.dom == fty.cod):
                _fail(f"fix needs a term of type s => s, got {fty}", body)
            return fty.dom
        case Choice(p, left, right):
            if not 0.0 <= p <= 1.0:
                _fail(f"choice probability {p} outside [0, 1]", t)
            lty, rty = typecheck(left, env), typecheck(right, env)
            if lty != rty:
                _fail(f"choice branches have types {lty} and {rty}", t)
            return lty
        case Unop(op, arg):
            if (aty := typecheck(arg, env)) != REAL:
                _fail(f"{op} expects real, got {aty}", arg)
            return REAL
        case Binop(op, left, right):
            for side in (left, right):
                if (sty := typecheck(side, env)) != REAL:
                    _fail(f"{op} expects real operands, got {sty}", side)
            return REAL
    raise PcfTypeError(f"unknown term {t!r}", term=t)
