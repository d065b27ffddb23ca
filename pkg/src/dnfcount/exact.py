"""Exact weighted model counts for small instances.

Two independent routes: exhaustive enumeration over all ``2**n`` assignments
and inclusion-exclusion over clause subsets.  They exist to validate KLM and
the network, not to scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend, kernels
from .formula import DnfFormula, check_weights


class ExactLimitError(ValueError):
    pass


@dataclass(frozen=True)
class ExactLimit:
    max_vars_enum: int = 25
    max_clauses_ie: int = 22

    def __post_init__(self):
        if self.max_vars_enum < 1 or self.max_clauses_ie < 1:
            raise ValueError("limits must be positive")


DEFAULT_LIMIT = ExactLimit()


def _occurrences(f: DnfFormula):
    offsets, vars0, signs = f.packed
    clause_of = np.repeat(np.arange(f.m, dtype=np.int64), f.widths)
    order = np.argsort(vars0, kind="stable")
    occ_ptr = np.zeros(f.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(vars0, minlength=f.n), out=occ_ptr[1:])
    neg_count = np.bincount(clause_of[signs == 0], minlength=f.m).astype(np.int64)
    return occ_ptr, clause_of[order], signs[order].astype(np.int64), neg_count


def exact_wmc_enumeration(
    f: DnfFormula, probs, limit: ExactLimit = DEFAULT_LIMIT, backend: str | None = None
) -> float:
    if f.n > limit.max_vars_enum:
        raise ExactLimitError(f"n={f.n} exceeds enumeration limit {limit.max_vars_enum}")
    probs = check_weights(probs, f.n)
    if f.m == 0:
        return 0.0
    nlow = f.n // 2
    wlow, whigh = kernels.half_weight_tables(probs, nlow)
    if _backend.resolve(backend) == "numba":
        occ_ptr, occ_clause, occ_sign, neg_count = _occurrences(f)
        total = kernels.gray_enum_numba(
            f.n, f.widths, occ_ptr, occ_clause, occ_sign, neg_count, wlow, whigh, nlow
        )
    else:
        offsets, vars0, signs = f.packed
        total = kernels.enum_numpy(f.n, offsets, vars0, signs.astype(np.int64), wlow, whigh, nlow)
    return min(max(float(total), 0.0), 1.0)


def exact_wmc_inclusion_exclusion(
    f: DnfFormula, probs, limit: ExactLimit = DEFAULT_LIMIT
) -> float:
    """Sum of ``(-1)**(|S|+1) P(AND S)`` over nonempty clause subsets ``S``.

    Subsets are walked depth-first; a conflicting partial conjunction prunes
    its whole subtree since every superset conflicts as well.
    """
    if f.m > limit.max_clauses_ie:
        raise ExactLimitError(f"m={f.m} exceeds inclusion-exclusion limit {limit.max_clauses_ie}")
    probs = check_weights(probs, f.n)
    lit_prob = {}
    for v in range(1, f.n + 1):
        lit_prob[v] = probs[v - 1]
        lit_prob[-v] = 1.0 - probs[v - 1]
    clauses = f.clauses
    terms: list[float] = []

    def walk(start: int, fixed: dict[int, int], p: float, sign: float):
        for j in range(start, len(clauses)):
            extra = []
            for lit in clauses[j]:
                v = abs(lit)
                have = fixed.get(v)
                if have is None:
                    extra.append(lit)
                elif have != lit:
                    break
            else:
                q = p
                for lit in extra:
                    q *= lit_prob[lit]
                terms.append(sign * q)
                if j + 1 < len(clauses):
                    for lit in extra:
                        fixed[abs(lit)] = lit
                    walk(j + 1, fixed, q, -sign)
                    for lit in extra:
                        del fixed[abs(lit)]

    walk(0, {}, 1.0, 1.0)
    return min(max(math.fsum(terms), 0.0), 1.0)
