"""Batch checker: load JSON fixtures, run a named check, emit a report.

    causabs run constructive low.json high.json align.json
    causabs run qc:opening circuit.json model.json measure.json --format text
    causabs list-checks

Exit codes: 0 the check holds, 1 it fails, 2 precondition or schema error.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass

import click

from . import formats
from .abstraction import (
    WITNESS_CAP,
    PreconditionError,
    check_cf_abstraction,
    check_constructive,
    check_exact_transformation,
    check_homomorphism,
    check_interchange_abstraction,
    check_order_preserving,
    check_strong_ca,
    do_omega,
    tau_io,
)
from .distributed import check_iso_cca
from .mechlevel import check_mechanism_level
from .model import FunctionalCausalModel, induce_model
from .qabs import QuantumDagModel, check_qc_abstraction
from .stoch import ContractError, ShapeError


@dataclass
class Flags:
    family: str | None = None
    max_tuple: int = 2
    max_m: int = 2
    tolerance: float | None = None
    witness_cap: int = WITNESS_CAP
    seed: int | None = None


# name -> (files, default mode, allowed modes, help)
CHECKS = {
    "constructive": (("low", "high", "align"), None, (), "constructive abstraction over every high Do subset"),
    "interchange": (("low", "high", "align"), None, (), "interchange abstraction, tuples up to --max-tuple"),
    "counterfactual": (("low-fcm", "high-fcm", "align"), None, (), "counterfactual abstraction, up to --max-m worlds"),
    "exact": (("low", "high", "align"), None, (), "exact transformation under omega (file or Do-induced)"),
    "strong": (("low", "high", "align"), None, (), "strong causal abstraction under omega"),
    "mechanism_level": (("low", "high", "align"), "cd", ("cd", "markov", "cartesian"), "mechanism-level abstraction for a structure type"),
    "iso_cca": (("m1", "m3", "align+iso"), "constructive", ("constructive", "interchange"), "iso-constructive pipeline M1 -> M2 -> M3"),
    "qc": (("circuit", "model", "qc-align"), "io", ("io", "interchange", "opening"), "quantum-classical abstraction for a query tier"),
    "algebra": (("low", "high", "align"), "hom", ("hom", "order"), "omega as a monoid homomorphism or order map"),
}


class UsageError(ValueError):
    pass


def list_checks() -> str:
    lines = []
    for name, (files, _, modes, doc) in CHECKS.items():
        shown = f"{name}:{{{'|'.join(modes)}}}" if modes else name
        lines.append(f"{shown:<40} {' '.join(files):<28} {doc}")
    return "\n".join(lines) + "\n"


def _split(check: str, family: str | None) -> tuple[str, str | None]:
    base, _, mode = check.partition(":")
    if base not in CHECKS:
        raise UsageError(f"unknown check {check!r}; see list-checks")
    _, default, modes, _ = CHECKS[base]
    mode = mode or family or default
    if modes and mode not in modes:
        raise UsageError(f"{base} takes one of {list(modes)}, got {mode!r}")
    return base, (mode if modes else None)


def _expect(obj, kind, what):
    if not isinstance(obj, kind):
        raise UsageError(f"{what}: expected a {getattr(kind, '__name__', kind)} file")
    return obj


def _omega(af, ML, MH, va):
    om = af.omega(ML, MH)
    return do_omega(ML, MH, va) if om is None else om


def _dispatch(base: str, mode: str | None, objs, fl: Flags):
    kw = dict(tol=fl.tolerance, cap=fl.witness_cap)
    a, b, af = objs
    if base == "qc":
        _expect(a, QuantumDagModel, "circuit")
        taus = _expect(af, dict, "qc-align")
        return check_qc_abstraction(a, b, taus["taus"], mode, out_taus=taus["out_taus"] or None, tol=fl.tolerance or 1e-9, cap=fl.witness_cap)
    af = _expect(af, formats.AlignmentFile, "align")
    if base == "iso_cca":
        iso = af.iso()
        if iso is None:
            raise UsageError("iso_cca needs an alignment file with an iso block")
        va = af.resolve(induce_model(a, iso), b)
        return check_iso_cca(a, iso, b, va, mode, **kw)
    if base == "counterfactual":
        _expect(a, FunctionalCausalModel, "low-fcm")
        _expect(b, FunctionalCausalModel, "high-fcm")
        return check_cf_abstraction(a, b, af.resolve(a, b), fl.max_m, **kw)
    va = af.resolve(a, b)
    if base == "constructive":
        return check_constructive(a, b, va, **kw)
    if base == "interchange":
        return check_interchange_abstraction(a, b, va, fl.max_tuple, **kw)
    if base == "mechanism_level":
        return check_mechanism_level(a, b, va, mode, tol=fl.tolerance)
    omega = _omega(af, a, b, va)
    IL = [s for s, _ in omega]
    if base == "algebra":
        IH = [s for _, s in omega]
        fn = check_homomorphism if mode == "hom" else check_order_preserving
        return fn(omega, IL, IH, cap=fl.witness_cap)
    tau_in, tau_out = tau_io(va, a, b)
    if base == "exact":
        return check_exact_transformation(a, IL, b, [s for _, s in omega], tau_in, tau_out, omega, **kw)
    return check_strong_ca(a, IL, b, omega, tau_in, tau_out, **kw)


def run(check: str, paths, flags: Flags | None = None) -> dict:
    """Load ``paths``, run ``check`` and return the report dict.

    Raises :class:`formats.SchemaError`, :class:`UsageError` or
    :class:`PreconditionError` for bad input.
    """
    fl = flags or Flags()
    base, mode = _split(check, fl.family)
    files = CHECKS[base][0]
    if len(paths) != len(files):
        raise UsageError(f"{base} takes {len(files)} files: {' '.join(files)}")
    if sum(str(p) == "-" for p in paths) > 1:
        raise UsageError("stdin can feed at most one file")
    docs = [formats.read_json(p) for p in paths]
    objs = [formats.from_doc(d) for d in docs]
    t0 = time.perf_counter()
    v = _dispatch(base, mode, objs, fl)
    name = f"{base}:{mode}" if mode else base
    shown = {"family": fl.family, "max_tuple": fl.max_tuple, "max_m": fl.max_m, "tolerance": fl.tolerance, "witness_cap": fl.witness_cap}
    return formats.report(name, v, docs, seed=fl.seed, timing=round(time.perf_counter() - t0, 6), flags=shown)


BAD_INPUT = (formats.SchemaError, UsageError, PreconditionError, ContractError, ShapeError, KeyError, OSError, ValueError)


@click.group()
def main():
    """Check causal abstractions between finite models."""


@main.command("list-checks")
def list_checks_cmd():
    """Show check names and the files each expects."""
    click.echo(list_checks(), nl=False)


@main.command("run")
@click.argument("check")
@click.argument("paths", nargs=-1, required=True)
@click.option("--family", default=None, help="mode for checks that take one, e.g. opening")
@click.option("--max-tuple", default=2, show_default=True, type=click.IntRange(0), help="interchange tuple length")
@click.option("--max-m", default=2, show_default=True, type=click.IntRange(1), help="counterfactual worlds")
@click.option("--tolerance", default=None, type=float, help="absolute tolerance; exact when omitted")
@click.option("--witness-cap", default=WITNESS_CAP, show_default=True, type=click.IntRange(1))
@click.option("--seed", default=None, type=int, help="recorded in the report")
@click.option("--format", "fmt", default="json", type=click.Choice(["json", "text"]), show_default=True)
def run_cmd(check, paths, family, max_tuple, max_m, tolerance, witness_cap, seed, fmt):
    """Run CHECK on PATHS ('-' reads stdin)."""
    fl = Flags(family, max_tuple, max_m, tolerance, witness_cap, seed)
    try:
        r = run(check, paths, fl)
    except BAD_INPUT as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    click.echo(json.dumps(r, indent=2) if fmt == "json" else formats.report_text(r), nl=fmt == "json")
    sys.exit(0 if r["holds"] else 1)


@main.command("export-fixtures")
@click.argument("directory", type=click.Path(file_okay=False))
def export_fixtures_cmd(directory):
    """Write the bundled fixtures as JSON files into DIRECTORY."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, doc in formats.bundled().items():
        (d / name).write_text(formats.dumps(doc), encoding="utf-8")
        click.echo(name)


if __name__ == "__main__":  # pragma: no cover
    main()
