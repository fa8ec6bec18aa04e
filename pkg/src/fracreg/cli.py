"""Command-line interface: ``fracreg {solve,verify,converge,report}``.

Exit codes: 0 success, 2 input error, 3 solver error, 4 failed suite.
All outputs are deterministic functions of the specification, the overrides
and the seed; nothing time- or host-dependent is written.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np
import scipy

from fracreg import __version__
from fracreg.errors import FracRegError, MittagLefflerAccuracyError, SolverError
from fracreg.fode import _fmt
from fracreg.report import dumps
from fracreg.specfile import RunSettings, SpecFile, build_problem, read_spec
from fracreg.spectral_pde import (
    ProblemSpec,
    SpectralField,
    field_convergence,
    regularity_report,
    sample_field,
    singular_field,
    solve_field,
)
from fracreg.suites import SUITES, run_suites

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_SUITE = 4

OVERRIDES = ("alpha", "N", "K", "T", "solver")


class CommandFailed(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracreg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fracreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve the problem and write field samples and modal coefficients"),
        ("verify", "run the operator identity suites"),
        ("converge", "paired convergence tables against the oracle"),
        ("report", "observed constants of a-priori estimates"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--spec", required=True, help="problem specification file")
        s.add_argument("--out", required=True, help="output path")
        s.add_argument("--alpha", type=float)
        s.add_argument("--N", type=int)
        s.add_argument("--K", type=int)
        s.add_argument("--T", type=float)
        s.add_argument("--solver")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--workers", type=int, default=1)
    return p


def _stem(out: Path) -> Path:
    return out.with_suffix("") if out.suffix else out


def sidecar(out: Path) -> Path:
    """JSON metadata path next to ``out``: ``run.csv`` gives ``run.json``."""
    return _stem(out).with_suffix(".meta.json" if out.suffix == ".json" else ".json")


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise CommandFailed(EXIT_INPUT, f"cannot write {str(path)!r}: {exc.strerror}") from None


def _meta(sf: SpecFile, seed: int) -> dict:
    return {
        "spec_sha256": sf.sha256,
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "overrides": dict(sorted(sf.overrides.items())),
        "seed": seed,
    }


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# {{{ solve


def sample_points(spec: ProblemSpec, samples: int) -> np.ndarray:
    """Uniform lattice of ``samples`` points per axis, boundary included."""
    axes = [np.linspace(0.0, L, samples) for L in spec.domain.lengths]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def field_csv(field: SpectralField, spec: ProblemSpec, samples: int) -> str:
    pts = sample_points(spec, samples)
    vals = sample_field(field, pts)
    names = ["x", "y"][: spec.domain.dim]
    rows = (
        (t, *p, u)
        for t, row in zip(field.grid.nodes, vals)
        for p, u in zip(pts, row)
    )  # fmt: skip
    return _csv(["t", *names, "u"], rows)


def modes_csv(field: SpectralField) -> str:
    header = ["t", *(f"c_{k}" for k in range(1, field.basis.K + 1))]
    return _csv(header, np.column_stack([field.grid.nodes, field.values.T]))


def cmd_solve(spec: ProblemSpec, settings: RunSettings, meta: dict, out: Path) -> int:
    field = solve_field(spec)
    stem = _stem(out)
    _write(out, field_csv(field, spec, settings.samples))
    _write(stem.with_suffix(".modes.csv"), modes_csv(field))
    sing = singular_field(field, spec)
    side = {
        **meta,
        "alpha": spec.alpha,
        "T": spec.T,
        "N": spec.N,
        "K": spec.K,
        "solver": spec.solver,
        "domain": {"kind": spec.domain.kind, "lengths": list(spec.domain.lengths)},
        "modes": [list(i) for i in field.basis.indices],
        "eigenvalues": field.basis.eigenvalues.tolist(),
        "sigma": sing.sigma.tolist(),
        "tail_indicator": field.tail_indicator(),
    }
    _write(sidecar(out), dumps(side))
    return EXIT_OK


# }}}


def cmd_verify(meta: dict, out: Path, seed: int, workers: int) -> int:
    results = run_suites(seed, list(SUITES), workers)
    failed = [r.name for r in results if not r.passed]
    doc = {**meta, "suites": [r.to_dict() for r in results], "failed": failed}
    _write(out, dumps(doc))
    for r in results:
        print(f"{r.name:12s} {'PASS' if r.passed else 'FAIL'}  "
              f"discrepancy={r.discrepancy:.3e}  tol={r.tolerance:.1e}")  # fmt: skip
    if failed:
        raise CommandFailed(EXIT_SUITE, f"suite(s) failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_converge(spec: ProblemSpec, settings: RunSettings, meta: dict, out: Path) -> int:
    tables = [field_convergence(spec, s, settings.base_N, settings.levels) for s in settings.solvers]
    text = tables[0].to_csv()
    for t in tables[1:]:
        text += "".join(t.to_csv().splitlines(keepends=True)[1:])
    _write(out, text)

    summary = {
        t.solver: {
            "fitted_order_inf": t.fitted_order("inf"),
            "fitted_order_l2": t.fitted_order("l2"),
            "monotone_inf": t.is_monotone("inf"),
            "exact": t.is_exact,
        }
        for t in tables
    }
    doc = {**meta, "alpha": spec.alpha, "T": spec.T, "K": spec.K, "solvers": summary,
           "base_N": settings.base_N, "levels": settings.levels}  # fmt: skip
    if "l1" in summary and "l1_corrected" in summary:
        a = summary["l1"]["fitted_order_inf"]
        b = summary["l1_corrected"]["fitted_order_inf"]
        # undefined when either scheme is exact on this problem
        doc["order_gap"] = None if isinstance(a, str) or isinstance(b, str) else b - a
    _write(sidecar(out), dumps(doc))
    return EXIT_OK


def cmd_report(spec: ProblemSpec, settings: RunSettings, meta: dict, out: Path) -> int:
    field = solve_field(spec)
    rep = regularity_report(field, spec, settings.estimates, meta=meta)
    _write(out, rep.to_json())
    return EXIT_OK


def run(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.workers < 1:
        raise CommandFailed(EXIT_INPUT, "--workers must be at least 1")
    sf = read_spec(args.spec).with_overrides(**{k: getattr(args, k) for k in OVERRIDES})
    spec, settings = build_problem(sf, args.workers)
    meta = _meta(sf, args.seed)
    out = Path(args.out)
    if args.command == "solve":
        return cmd_solve(spec, settings, meta, out)
    if args.command == "verify":
        return cmd_verify(meta, out, args.seed, args.workers)
    if args.command == "converge":
        return cmd_converge(spec, settings, meta, out)
    return cmd_report(spec, settings, meta, out)


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except CommandFailed as exc:
        print(f"fracreg: {exc}", file=sys.stderr)
        return exc.code
    except (SolverError, MittagLefflerAccuracyError) as exc:
        print(f"fracreg: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (FracRegError, ValueError) as exc:
        print(f"fracreg: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"fracreg: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
