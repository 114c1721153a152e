"""A small probabilistic PCF with a sampling ``let``, evaluated over measure cones."""

from .evaluator import (GEOMETRIC, Evaluator, FixReport, FunValue, GridConfig, ProgramResult,
                        RealDist, evaluate, run_geometric, run_program)
from .parser import parse, parse_type, tokenize
from .syntax import (REAL, UNIT, App, Arrow, Binop, Choice, Fix, Lam, Let, Num, RealT, Unif,
                     UnitT, Unop, Var, free_vars, show)
from .typecheck import typecheck

__all__ = [
    "GEOMETRIC", "Evaluator", "FixReport", "FunValue", "GridConfig", "ProgramResult", "RealDist",
    "evaluate", "run_geometric", "run_program", "parse", "parse_type", "tokenize", "REAL", "UNIT",
    "App", "Arrow", "Binop", "Choice", "Fix", "Lam", "Let", "Num", "RealT", "Unif", "UnitT",
    "Unop", "Var", "free_vars", "show", "typecheck",
]
