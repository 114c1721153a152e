"""Batch front end: ``conesem run|fix|check|cantor|examples``.

Exit codes: 0 success, 1 user error (bad input, syntax, types, unknown
names), 2 contract violation or failed invariant suite.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import norm as gaussian

from . import cantor, fixpoint, suites
from .errors import ConesemError, ContractViolation
from .measure import FiniteMeasure
from .pcf import GridConfig, run_program
from .pcf.syntax import Arrow

EXIT_OK, EXIT_USER, EXIT_CONTRACT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunReport:
    command: str
    inputs: dict
    outputs: dict
    diagnostics: dict = field(default_factory=dict)
    wall_time: float | None = None

    @property
    def digest(self) -> str:
        blob = json.dumps([self.command, self.inputs], sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> dict:
        out = {"command": self.command, "inputs": self.inputs, "inputs_digest": self.digest,
               "outputs": self.outputs, "diagnostics": self.diagnostics}
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def histogram_csv(mu: FiniteMeasure) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "mass"])
    for lo, hi, m in mu.histogram_rows():
        w.writerow([repr(lo), repr(hi), repr(m)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Config flags
# ---------------------------------------------------------------------------


def parse_grid(text: str) -> tuple[float, float, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"--grid expects lo,hi,bins, got {text!r}")
    try:
        lo, hi, bins = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"--grid expects lo,hi,bins, got {text!r}") from None
    return lo, hi, bins


def config_from_args(args, default: GridConfig | None = None) -> GridConfig:
    base = default or GridConfig()
    lo, hi, bins = parse_grid(args.grid) if args.grid else (base.lo, base.hi, base.bins)
    return GridConfig(
        lo=lo, hi=hi, bins=bins,
        prune_floor=base.prune_floor if args.prune_floor is None else args.prune_floor,
        fix_unfold=base.fix_unfold if args.fix_unfold is None else args.fix_unfold,
        fix_tol=base.fix_tol if args.fix_tol is None else args.fix_tol,
        unif_bins=base.unif_bins if args.unif_bins is None else args.unif_bins,
        workers=args.workers,
    )


def _measure_outputs(mu: FiniteMeasure) -> dict:
    total = mu.norm()
    out = {"measure": mu.to_json(), "total_mass": total}
    if total > 0:
        out["mean"] = mu.mean()
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _program_text(name: str) -> tuple[str, str]:
    p = Path(name)
    if p.exists():
        return p.read_text(encoding="utf-8"), str(p)
    stem = p.name if p.suffix == ".ppcf" else p.name + ".ppcf"
    packaged = files("conesem.programs").joinpath(stem)
    if packaged.is_file():
        return packaged.read_text(encoding="utf-8"), f"<packaged>/{stem}"
    raise UsageError(f"no such program file: {name}")


def cmd_run(args) -> tuple[RunReport, str | None]:
    text, source = _program_text(args.file)
    cfg = config_from_args(args, PROGRAM_DEFAULTS.get(Path(source).stem))
    res = run_program(text, cfg)
    if isinstance(res.type, Arrow):
        raise UsageError(f"program has function type {res.type}; only ground programs can be run")
    inputs = {"program": source, "program_sha256": hashlib.sha256(text.encode()).hexdigest(),
              "config": cfg.to_json()}
    diagnostics = {"type": str(res.type), "fix_residual": res.residual,
                   "fix_converged": res.converged,
                   "fix_iterations": [r.iterations for r in res.fix_reports]}
    if isinstance(res.value, FiniteMeasure):
        outputs = _measure_outputs(res.value)
        diagnostics.update(lost_mass=res.lost_mass, clamped=res.clamped)
        csv_text = histogram_csv(res.value)
    else:
        outputs = {"value": res.value}
        csv_text = f"value\n{res.value!r}\n"
    return RunReport("run", inputs, outputs, diagnostics), csv_text


def _fixpoint_map(name: str, u: float | None):
    if name == "halfplus":
        if u is not None:
            raise UsageError("halfplus takes no parameter")
        return fixpoint.halfplus
    if name in ("sqrtfam", "pathological"):
        if u is None:
            raise UsageError(f"{name} needs a parameter u")
        if not 0.0 <= u <= 1.0:
            raise UsageError(f"{name} parameter must lie in [0, 1], got {u}")
        return fixpoint.BUILTINS[name](u)
    raise UsageError(f"unknown fixpoint built-in {name!r} (halfplus, sqrtfam, pathological)")


def cmd_fix(args) -> tuple[RunReport, str]:
    f = _fixpoint_map(args.name, args.u)
    res = fixpoint.kleene_fixpoint(f, tol=args.tol, max_iter=args.max_iter)
    inputs = {"name": args.name, "u": args.u, "tol": args.tol, "max_iter": args.max_iter}
    outputs = {"value": res.value, "iterations": res.iterations}
    diagnostics = {"converged": res.converged, "residual": res.residual}
    return RunReport("fix", inputs, outputs, diagnostics), res.trace_csv()


def cmd_check(args) -> tuple[RunReport, None]:
    try:
        suite = suites.SUITES[args.suite]
    except KeyError:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(suites.SUITES)}") from None
    rep = suite(args.seed, args.workers)
    inputs = {"suite": args.suite, "seed": args.seed}
    report = RunReport("check", inputs, rep.to_json(), {"passed": rep.passed, "failed": rep.failed})
    return report, None


def cmd_cantor(args) -> tuple[RunReport, None]:
    if args.input:
        try:
            x = cantor.TreeVector.from_json(json.loads(Path(args.input).read_text()))
        except FileNotFoundError:
            raise UsageError(f"no such tree file: {args.input}") from None
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise UsageError(f"malformed tree JSON: {e}") from None
        source = args.input
    else:
        x = cantor.coin_flip(args.depth)
        source = f"coin-flip depth {args.depth}"
    additive = cantor.is_additive(x)
    outputs = {"depth": x.depth, "additive": additive, "antichain_norm": cantor.antichain_norm(x),
               "root": x[""]}
    if x.depth > 0:
        outputs["equalized"] = cantor.is_equalized(x)
    if additive:
        outputs["measure"] = cantor.to_measure(x).to_json()
    return RunReport("cantor", {"tree": source}, outputs), None


def _gaussian_tv(mu: FiniteMeasure) -> float:
    sp = mu.space
    edges = np.array([sp.bin_edges(i)[0] for i in range(sp.bins)] + [sp.hi])
    ref = np.diff(gaussian.cdf(edges))
    got = np.array([mu[i] for i in range(sp.bins)])
    return 0.5 * math.fsum(np.abs(got - ref).tolist())


BOXMULLER_CONFIG = GridConfig(lo=-6.0, hi=6.0, bins=1200, unif_bins=512)
UNIT_GRID_CONFIG = GridConfig(lo=0.0, hi=1.0, bins=512)
PROGRAM_DEFAULTS = {
    "boxmuller": BOXMULLER_CONFIG,
    "normal_shift": GridConfig(lo=0.0, hi=9.0, bins=900, unif_bins=128),
    "geometric": GridConfig(lo=-0.5, hi=99.5, bins=100, fix_tol=0.0),
    "square_let": UNIT_GRID_CONFIG,
    "square_indep": UNIT_GRID_CONFIG,
}


def _program(name: str) -> str:
    return files("conesem.programs").joinpath(f"{name}.ppcf").read_text(encoding="utf-8")


def worked_examples() -> list[dict[str, Any]]:
    """The closed-form examples, each with its computed and expected value."""
    rows = []

    def row(name, value, expected, tol):
        rows.append({"name": name, "value": value, "expected": expected, "tol": tol,
                     "passed": abs(value - expected) <= tol})

    row("fix halfplus", fixpoint.kleene_fixpoint(fixpoint.halfplus).value, 2 - math.sqrt(2), 1e-9)
    for u in (0.0, 0.25, 0.5, 0.75):
        row(f"fix sqrtfam {u}", fixpoint.kleene_fixpoint(fixpoint.sqrtfam(u)).value,
            1 - math.sqrt(1 - u), 1e-8)
    row("fix pathological 0", fixpoint.kleene_fixpoint(fixpoint.pathological(0.0)).value, 0.0, 0.0)
    f = suites.bool_series()
    row("bool series at (1/2, 1/2)", f([0.5, 0.5]), 0.99609375, 1e-12)
    geo = run_program(_program("geometric"), PROGRAM_DEFAULTS["geometric"])
    row("geometric mass at 3", geo.value[3], 0.0625, 1e-12)
    let = run_program(_program("square_let"), UNIT_GRID_CONFIG).value.mean()
    ind = run_program(_program("square_indep"), UNIT_GRID_CONFIG).value.mean()
    row("mean of let x = unif in mult(x, x)", let, 1 / 3, 2 / 512)
    row("mean of mult(unif, unif)", ind, 1 / 4, 2 / 512)
    bm = run_program(_program("boxmuller"), BOXMULLER_CONFIG).value
    row("box-muller total variation to N(0,1)", _gaussian_tv(bm), 0.0, 0.02)
    shift = run_program(_program("normal_shift"), PROGRAM_DEFAULTS["normal_shift"]).value
    row("mean of N(4.2, 0.7) program", shift.mean(), 4.2, 0.01)
    return rows


def cmd_examples(args) -> tuple[RunReport, None]:
    rows = worked_examples()
    passed = sum(r["passed"] for r in rows)
    return RunReport("examples", {}, {"examples": rows},
                     {"passed": passed, "failed": len(rows) - passed}), None


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _add_grid_flags(p):
    p.add_argument("--grid", help="run grid as lo,hi,bins")
    p.add_argument("--unif-bins", type=int, help="represent unif by this many exact atoms")
    p.add_argument("--fix-unfold", type=int, help="maximum fixpoint unfoldings")
    p.add_argument("--fix-tol", type=float, help="fixpoint convergence tolerance")
    p.add_argument("--prune-floor", type=float, help="masses below this are dropped")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conesem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out=True):
        p.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
        p.add_argument("--workers", type=int, default=None, help="thread fan-out")
        p.add_argument("--timing", action="store_true", help="include wall time in the report")
        p.add_argument("--output", help="write to this file instead of stdout")
        if out:
            p.add_argument("--out", choices=("json", "csv"), default="json")

    p = sub.add_parser("run", help="evaluate a program file")
    p.add_argument("file")
    _add_grid_flags(p)
    common(p)

    p = sub.add_parser("fix", help="Kleene iteration of a built-in map")
    p.add_argument("name")
    p.add_argument("u", nargs="?", type=float)
    p.add_argument("--tol", type=float, default=fixpoint.DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=fixpoint.DEFAULT_MAX_ITER)
    common(p)

    p = sub.add_parser("check", help="run an invariant suite")
    p.add_argument("suite")
    common(p, out=False)

    p = sub.add_parser("cantor", help="analyze a tree vector")
    p.add_argument("--depth", type=int, default=cantor.DEFAULT_DEPTH)
    p.add_argument("--input", help="tree JSON file")
    common(p, out=False)

    p = sub.add_parser("examples", help="run the closed-form worked examples")
    common(p, out=False)
    return parser


def _normalize_argv(argv: list[str]) -> list[str]:
    # lets "--grid -6,6,512" through: argparse would read -6,6,512 as an option
    out, it = [], iter(argv)
    for a in it:
        if a == "--grid":
            out.append(f"--grid={next(it, '')}")
        else:
            out.append(a)
    return out


COMMANDS = {"run": cmd_run, "fix": cmd_fix, "check": cmd_check, "cantor": cmd_cantor,
            "examples": cmd_examples}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_normalize_argv(argv))
    except UsageError as e:
        print(f"conesem: error: {e}", file=sys.stderr)
        return EXIT_USER
    start = time.perf_counter()
    try:
        report, csv_text = COMMANDS[args.command](args)
    except ContractViolation as e:
        print(f"conesem: contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT
    except (UsageError, ConesemError, OSError) as e:
        print(f"conesem: error: {e}", file=sys.stderr)
        return EXIT_USER
    if args.timing:
        report.wall_time = time.perf_counter() - start
    text = csv_text if getattr(args, "out", "json") == "csv" else report.dumps()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    failed = report.diagnostics.get("failed", 0)
    return EXIT_CONTRACT if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
