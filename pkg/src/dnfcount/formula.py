"""Weighted DNF formulas: representation, the ``wdnf`` text format, semantics.

A clause is a tuple of signed DIMACS-style literals (``3`` is x3, ``-3`` is
not x3) sorted by variable.  Weights are a float64 vector ``probs`` where
``probs[i]`` is the probability that variable ``i + 1`` is true.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

Clause = tuple[int, ...]


class FormatError(ValueError):
    """Raised for malformed ``wdnf`` input; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def make_clause(literals: Iterable[int], n: int | None = None) -> Clause:
    lits = [int(l) for l in literals]
    if not lits:
        raise ValueError("clause must contain at least one literal")
    seen = set()
    for lit in lits:
        if lit == 0:
            raise ValueError("literal 0 is not a variable")
        v = abs(lit)
        if v in seen:
            raise ValueError(f"variable {v} occurs twice in one clause")
        if n is not None and v > n:
            raise ValueError(f"variable {v} out of range [1, {n}]")
        seen.add(v)
    return tuple(sorted(lits, key=abs))


@dataclass(frozen=True)
class DnfFormula:
    """A disjunction of conjunctive clauses over variables ``1..n``."""

    n: int
    clauses: tuple[Clause, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("formula needs at least one variable")
        object.__setattr__(
            self, "clauses", tuple(make_clause(c, self.n) for c in self.clauses)
        )

    @property
    def m(self) -> int:
        return len(self.clauses)

    @cached_property
    def widths(self) -> np.ndarray:
        return np.array([len(c) for c in self.clauses], dtype=np.int64)

    @cached_property
    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR view ``(offsets, vars0, signs)`` used by the numeric kernels.

        ``vars0`` holds 0-based variable indices and ``signs`` 1 for positive
        literals, 0 for negative ones.
        """
        offsets = np.zeros(self.m + 1, dtype=np.int64)
        np.cumsum(self.widths, out=offsets[1:])
        flat = np.fromiter(
            (lit for c in self.clauses for lit in c), dtype=np.int64, count=int(offsets[-1])
        )
        return offsets, np.abs(flat) - 1, (flat > 0).astype(np.int8)

    def negated(self) -> DnfFormula:
        return DnfFormula(self.n, tuple(tuple(-l for l in c) for c in self.clauses))


def check_weights(probs: Sequence[float] | np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(probs, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"expected {n} probabilities, got shape {w.shape}")
    if not np.all((w >= 0.0) & (w <= 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    return w


def parse_formula(text: str | TextIO) -> tuple[DnfFormula, np.ndarray]:
    """Parse ``wdnf`` text into a formula and its weight vector."""
    if isinstance(text, str):
        text = io.StringIO(text)
    n = m = None
    clauses: list[Clause] = []
    probs: dict[int, float] = {}
    for lineno, raw in enumerate(text, start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        tok = line.split()
        if tok[0] == "p":
            if n is not None:
                raise FormatError("duplicate header", lineno)
            if len(tok) != 4 or tok[1] != "wdnf":
                raise FormatError("header must read 'p wdnf <n> <m>'", lineno)
            try:
                n, m = int(tok[2]), int(tok[3])
            except ValueError:
                raise FormatError("non-integer header field", lineno) from None
            if n < 1 or m < 0:
                raise FormatError("header needs n >= 1 and m >= 0", lineno)
            continue
        if n is None:
            raise FormatError("statement before 'p wdnf' header", lineno)
        if tok[0] == "w":
            if len(tok) != 3:
                raise FormatError("weight line must read 'w <k> <p>'", lineno)
            try:
                k, p = int(tok[1]), float(tok[2])
            except ValueError:
                raise FormatError("malformed weight line", lineno) from None
            if not 1 <= k <= n:
                raise FormatError(f"variable {k} out of range [1, {n}]", lineno)
            if k in probs:
                raise FormatError(f"duplicate weight for variable {k}", lineno)
            if not 0.0 <= p <= 1.0:
                raise FormatError(f"probability {tok[2]} outside [0, 1]", lineno)
            probs[k] = p
            continue
        try:
            lits = [int(t) for t in tok]
        except ValueError:
            raise FormatError(f"unexpected token in clause line: {line!r}", lineno) from None
        if lits[-1] != 0:
            raise FormatError("clause line must end with 0", lineno)
        if 0 in lits[:-1]:
            raise FormatError("0 inside clause line", lineno)
        try:
            clauses.append(make_clause(lits[:-1], n))
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    if n is None:
        raise FormatError("missing 'p wdnf' header")
    if len(clauses) != m:
        raise FormatError(f"header declares {m} clauses, found {len(clauses)}")
    missing = sorted(set(range(1, n + 1)) - probs.keys())
    if missing:
        raise FormatError(f"missing weights for variables {missing[:5]}")
    weights = np.array([probs[k] for k in range(1, n + 1)], dtype=np.float64)
    return DnfFormula(n, tuple(clauses)), weights


def serialize_formula(f: DnfFormula, probs: Sequence[float] | np.ndarray) -> str:
    if f.m == 0:
        raise ValueError("cannot serialize a formula without clauses")
    w = check_weights(probs, f.n)
    out = [f"p wdnf {f.n} {f.m}"]
    out.extend(" ".join(map(str, c)) + " 0" for c in f.clauses)
    # repr() of a float is the shortest decimal that round-trips exactly
    out.extend(f"w {k} {float(p)!r}" for k, p in enumerate(w, start=1))
    return "\n".join(out) + "\n"


def read_formula(path) -> tuple[DnfFormula, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        return parse_formula(fh)


def write_formula(path, f: DnfFormula, probs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_formula(f, probs))


def evaluate(f: DnfFormula, assignment: Sequence[int] | np.ndarray) -> bool:
    a = np.asarray(assignment)
    if a.shape != (f.n,):
        raise ValueError(f"assignment length {a.shape} does not match n={f.n}")
    return any(all(bool(a[abs(l) - 1]) == (l > 0) for l in c) for c in f.clauses)


def clause_probability(clause: Clause, probs: np.ndarray) -> float:
    p = 1.0
    for lit in clause:
        q = probs[abs(lit) - 1]
        p *= q if lit > 0 else 1.0 - q
    return float(p)


def clause_probabilities(f: DnfFormula, probs: np.ndarray) -> np.ndarray:
    offsets, vars0, signs = f.packed
    lit_p = np.where(signs == 1, probs[vars0], 1.0 - probs[vars0])
    if f.m == 0:
        return np.zeros(0)
    return np.multiply.reduceat(lit_p, offsets[:-1]) if lit_p.size else np.ones(f.m)


def width_stats(f: DnfFormula) -> tuple[float, int, int]:
    """Return ``(mean width, max width, total slots)``."""
    if f.m == 0:
        raise ValueError("width statistics need at least one clause")
    s = int(f.widths.sum())
    return s / f.m, int(f.widths.max()), s
