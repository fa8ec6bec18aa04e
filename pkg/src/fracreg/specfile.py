"""Problem specification files.

A specification is UTF-8 text with one ``key = value`` pair per line. Blank
lines and lines starting with ``#`` are ignored; keys may appear once.

========================  ==========================================  =========
key                       value                                       default
========================  ==========================================  =========
``domain``                ``interval`` or ``rectangle``               interval
``L`` / ``Lx``, ``Ly``    side lengths                                1
``M``                     quadrature panels per axis (>= 64)          64
``alpha``                 model order, ``0.5 < alpha < 1``            required
``T``                     final time                                  1
``K``                     number of modes                             8
``N``                     time intervals                              256
``solver``                ``oracle``, ``l1`` or ``l1_corrected``      oracle
``u0``                    expression in ``x`` (and ``y``)             0
``f``                     expression in ``x`` (``y``), ``t``          0
``estimates``             comma-separated estimate ids                esti-u-1
``solvers``               comma-separated solver list for converge    l1, l1_corrected
``base_N``, ``levels``    refinement study for converge               64, 5
``samples``               field sample points per axis                21
``f_time_regularity``     declared time order of ``f``                0
``u0_regularity``         declared spatial order of ``u0``            1
``f0_regularity``         declared spatial order of ``f(., 0)``       0
========================  ==========================================  =========

Expressions use the language of :mod:`fracreg.expr` and may refer to
``alpha`` and ``T``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from fracreg.errors import FracRegError, SpecError
from fracreg.expr import Expression, space_time_function, spatial_function
from fracreg.fode import SOLVERS
from fracreg.report import ESTIMATE_IDS
from fracreg.spectral_pde import ProblemSpec, SpatialDomain

KEYS = (
    "domain", "L", "Lx", "Ly", "M", "alpha", "T", "K", "N", "solver", "u0", "f",
    "estimates", "solvers", "base_N", "levels", "samples",
    "f_time_regularity", "u0_regularity", "f0_regularity",
)  # fmt: skip


@dataclass(frozen=True)
class SpecFile:
    """Raw key-value content of a specification plus its SHA-256 hash."""

    entries: dict[str, str]
    sha256: str
    path: str = ""
    overrides: dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default: str | None = None) -> str | None:
        if key in self.overrides:
            return self.overrides[key]
        return self.entries.get(key, default)

    def with_overrides(self, **values) -> SpecFile:
        extra = {k: str(v) for k, v in values.items() if v is not None}
        unknown = set(extra) - set(KEYS)
        if unknown:
            raise SpecError(f"unknown override(s): {sorted(unknown)}")
        return replace(self, overrides={**self.overrides, **extra})


def parse_text(text: str, path: str = "") -> SpecFile:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SpecError(f"{path or 'spec'}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise SpecError(f"{path or 'spec'}:{lineno}: unknown key {key!r}")
        if key in entries:
            raise SpecError(f"{path or 'spec'}:{lineno}: duplicate key {key!r}")
        if not value:
            raise SpecError(f"{path or 'spec'}:{lineno}: empty value for {key!r}")
        entries[key] = value
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return SpecFile(entries, digest, path)


def read_spec(path: str | Path) -> SpecFile:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {str(p)!r}: {exc.strerror}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise SpecError(f"spec file {str(p)!r} is not valid UTF-8") from None
    return parse_text(text, str(p))


def _number(sf: SpecFile, key: str, default: str, kind=float):
    raw = sf.get(key, default)
    try:
        val = kind(raw)
    except ValueError:
        raise SpecError(f"{key} must be a {kind.__name__}, got {raw!r}") from None
    return val


def _list(sf: SpecFile, key: str, default: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in sf.get(key, default).split(",") if s.strip())


@dataclass(frozen=True)
class RunSettings:
    """Everything a command needs besides the problem itself."""

    estimates: tuple[str, ...]
    solvers: tuple[str, ...]
    base_N: int
    levels: int
    samples: int


def build_problem(sf: SpecFile, workers: int = 1) -> tuple[ProblemSpec, RunSettings]:
    """Turn a parsed specification into a :class:`ProblemSpec`."""
    if sf.get("alpha") is None:
        raise SpecError("missing required key 'alpha'")

    kind = sf.get("domain", "interval")
    M = _number(sf, "M", "64", int)
    try:
        if kind == "interval":
            if sf.get("Lx") is not None or sf.get("Ly") is not None:
                raise SpecError("interval domains take L, not Lx/Ly")
            domain = SpatialDomain.interval(_number(sf, "L", "1"), M)
        elif kind == "rectangle":
            if sf.get("L") is not None:
                raise SpecError("rectangle domains take Lx and Ly, not L")
            domain = SpatialDomain.rectangle(_number(sf, "Lx", "1"), _number(sf, "Ly", "1"), M)
        else:
            raise SpecError(f"unsupported domain {kind!r}; expected interval or rectangle")
    except FracRegError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc)) from None

    alpha = _number(sf, "alpha", "")
    T = _number(sf, "T", "1")
    consts = {"alpha": alpha, "T": T}
    u0 = spatial_function(Expression(sf.get("u0", "0"), consts), domain.dim)
    f_src = sf.get("f")
    f = None if f_src is None else space_time_function(Expression(f_src, consts), domain.dim)

    settings = RunSettings(
        estimates=_list(sf, "estimates", "esti-u-1"),
        solvers=_list(sf, "solvers", "l1, l1_corrected"),
        base_N=_number(sf, "base_N", "64", int),
        levels=_number(sf, "levels", "5", int),
        samples=_number(sf, "samples", "21", int),
    )
    for e in settings.estimates:
        if e not in ESTIMATE_IDS:
            raise SpecError(f"unknown estimate id {e!r}")
    for s in settings.solvers:
        if s not in SOLVERS:
            raise SpecError(f"unknown solver {s!r} in solvers")
    if settings.levels < 3:
        raise SpecError("levels must be at least 3")
    if settings.base_N < 2:
        raise SpecError("base_N must be at least 2")
    if settings.samples < 2:
        raise SpecError("samples must be at least 2")

    try:
        spec = ProblemSpec(
            domain=domain,
            alpha=alpha,
            T=T,
            K=_number(sf, "K", "8", int),
            N=_number(sf, "N", "256", int),
            u0=u0,
            f=f,
            solver=sf.get("solver", "oracle"),
            f_time_regularity=_number(sf, "f_time_regularity", "0"),
            u0_regularity=_number(sf, "u0_regularity", "1"),
            f0_regularity=_number(sf, "f0_regularity", "0"),
            workers=workers,
        )
    except FracRegError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    return spec, settings
