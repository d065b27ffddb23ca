"""Random weighted DNF generation by slot allocation.

Clause widths define ``s`` slots.  Each variable receives at least one slot
(so every variable appears), optionally a set of *privileged* variables gets
an exclusive share of the excess slots, and variables are then placed into
distinct clauses, most frequent first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formula import DnfFormula


class GenerationError(RuntimeError):
    pass


class RetryExhausted(GenerationError):
    pass


class AssignmentStuck(GenerationError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    m: int
    min_width: int
    max_width: int
    q: float = 0.0
    r: float = 0.0
    seed: int = 0
    max_retries: int = 50

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 1 <= self.min_width <= self.max_width <= self.n:
            raise ValueError("need 1 <= min_width <= max_width <= n")
        if not (0.0 <= self.q <= 1.0 and 0.0 <= self.r <= 1.0):
            raise ValueError("q and r must lie in [0, 1]")
        if self.q > 0 and self.n_privileged < 1:
            raise ValueError("q > 0 must select at least one privileged variable")
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")

    @property
    def n_privileged(self) -> int:
        return int(math.floor(self.q * self.n + 0.5))


@dataclass
class SlotPlan:
    widths: np.ndarray
    allocations: np.ndarray
    privileged: frozenset = field(default_factory=frozenset)

    @property
    def slot_count(self) -> int:
        return int(self.widths.sum())

    @property
    def excess(self) -> int:
        return self.slot_count - len(self.allocations)


def _draw_widths(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(cfg.min_width, cfg.max_width + 1, size=cfg.m)


def sample_widths(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform clause widths, redrawn until the slot count covers every variable."""
    for _ in range(cfg.max_retries):
        widths = _draw_widths(cfg, rng)
        if widths.sum() >= cfg.n:
            return widths
    raise RetryExhausted(
        f"slot count stayed below n={cfg.n} after {cfg.max_retries} draws"
    )


def allocate_slots(s: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Split ``s`` slots over ``n`` variables, none empty.

    One slot each, the remaining ``s - n`` by independent uniform choice.
    """
    if s < n:
        raise ValueError(f"cannot give {n} variables a slot each from {s} slots")
    return 1 + np.bincount(rng.integers(0, n, size=s - n), minlength=n)


def allocate_privileged(
    cfg: GeneratorConfig, e: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Choose the privileged variables and hand them ``floor(r*e)`` exclusive slots.

    Returns the sorted 0-based privileged ids and a length-``n`` vector of
    their exclusive slot counts.
    """
    k = cfg.n_privileged
    privileged = np.sort(rng.choice(cfg.n, size=k, replace=False))
    extra = np.zeros(cfg.n, dtype=np.int64)
    exclusive = int(math.floor(cfg.r * e))
    if exclusive:
        extra[privileged] = np.bincount(rng.integers(0, k, size=exclusive), minlength=k)
    return privileged, extra


def expected_privileged_allocation(e: int, n: int, q: float, r: float) -> float:
    return 1.0 + e * (q * (1.0 - r) + r) / (q * n)


def assign_to_clauses(plan: SlotPlan, rng: np.random.Generator) -> list[list[int]]:
    """Place each variable into as many distinct clauses as it has slots.

    Variables go in decreasing allocation order (ties in random order); each
    picks its clauses without replacement, weighted by their free slots.
    """
    widths = np.asarray(plan.widths, dtype=np.int64)
    alloc = np.asarray(plan.allocations, dtype=np.int64)
    m = widths.shape[0]
    free = widths.copy()
    members: list[list[int]] = [[] for _ in range(m)]
    perm = rng.permutation(alloc.shape[0])
    order = perm[np.argsort(-alloc[perm], kind="stable")]
    for v in order:
        a = int(alloc[v])
        open_clauses = int(np.count_nonzero(free))
        if a > open_clauses:
            raise AssignmentStuck(
                f"variable {v + 1} needs {a} clauses, only {open_clauses} have room"
            )
        chosen = rng.choice(m, size=a, replace=False, p=free / free.sum())
        free[chosen] -= 1
        for c in chosen:
            members[c].append(int(v))
    return members


def randomize_signs(
    members: list[list[int]], privileged, n: int, rng: np.random.Generator
) -> DnfFormula:
    """Fair-coin polarity per occurrence; one shared coin per privileged variable."""
    shared = rng.integers(0, 2, size=n)
    is_priv = np.zeros(n, dtype=bool)
    is_priv[np.asarray(sorted(privileged), dtype=np.int64)] = True
    coins = rng.integers(0, 2, size=sum(len(c) for c in members))
    clauses = []
    pos = 0
    for vs in members:
        lits = []
        for v in vs:
            positive = shared[v] if is_priv[v] else coins[pos]
            pos += 1
            lits.append(v + 1 if positive else -(v + 1))
        clauses.append(tuple(lits))
    return DnfFormula(n, tuple(clauses))


def generate_with_plan(cfg: GeneratorConfig) -> tuple[DnfFormula, SlotPlan]:
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.max_retries):
        widths = _draw_widths(cfg, rng)
        s = int(widths.sum())
        if s < cfg.n:
            continue
        if cfg.q > 0:
            privileged, extra = allocate_privileged(cfg, s - cfg.n, rng)
            alloc = extra + allocate_slots(s - int(extra.sum()), cfg.n, rng)
        else:
            privileged, alloc = np.zeros(0, dtype=np.int64), allocate_slots(s, cfg.n, rng)
        plan = SlotPlan(widths, alloc, frozenset(int(v) for v in privileged))
        try:
            members = assign_to_clauses(plan, rng)
        except AssignmentStuck:
            continue
        return randomize_signs(members, plan.privileged, cfg.n, rng), plan
    raise RetryExhausted(f"generation failed {cfg.max_retries} times for {cfg}")


def generate_formula(cfg: GeneratorConfig) -> DnfFormula:
    return generate_with_plan(cfg)[0]


def generate_uniform_formula(cfg: GeneratorConfig) -> DnfFormula:
    """Plain random DNF: each clause draws distinct variables uniformly.

    Unlike :func:`generate_formula` this does not guarantee every variable
    appears; ``q``, ``r`` and ``max_retries`` are ignored.
    """
    rng = np.random.default_rng(cfg.seed)
    clauses = []
    for w in _draw_widths(cfg, rng):
        vs = rng.choice(cfg.n, size=int(w), replace=False) + 1
        signs = rng.integers(0, 2, size=int(w))
        clauses.append(tuple(int(v) if s else -int(v) for v, s in zip(vs, signs)))
    return DnfFormula(cfg.n, tuple(clauses))


def sample_base_distribution(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random(n)


def quarter_increments(probs) -> list[np.ndarray]:
    p = np.asarray(probs, dtype=np.float64)
    return [np.mod(p + 0.25 * k, 1.0) for k in (1, 2, 3)]


def chebyshev_r(n: int, m: int, q: float, e: int, grid: int = 100) -> float:
    """Largest ``r`` on ``{0, 1/grid, ..., 1}`` keeping the overflow risk at most 1/2.

    A privileged variable's allocation ``A`` has mean
    ``1 + r e/(qn) + (1-r) e/n`` and (from the exclusive share) variance
    ``r e (1/(qn)) (1 - 1/(qn))``.  Cantelli's inequality bounds
    ``P(A - mean >= m - mean)`` by ``var / (var + (m - mean)^2)``.
    """
    qn = q * n
    best = 0.0
    for i in range(grid + 1):
        r = i / grid
        mean = 1.0 + r * e / qn + (1.0 - r) * e / n
        if mean >= m:
            continue
        var = r * e * (1.0 / qn) * (1.0 - 1.0 / qn)
        if var / (var + (m - mean) ** 2) <= 0.5:
            best = r
    return best


def sample_experiment_q_r(
    n: int, m: int, rng: np.random.Generator, mean_width: float
) -> tuple[float, float]:
    """Draw ``(q, r)`` for one formula of an experiment corpus.

    Half of the time no privileged variables are used.  Otherwise
    ``q = ceil_to(1/n)(Exp(1) mod (ln n / n))`` and ``r`` comes from
    :func:`chebyshev_r` with the excess implied by ``mean_width``.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    if rng.random() < 0.5:
        return 0.0, 0.0
    x = -math.log(1.0 - rng.random())
    if n > 1:
        x = math.fmod(x, math.log(n) / n)
    k = max(1, math.ceil(x * n - 1e-9))
    q = k / n
    e = max(0, int(round(m * mean_width)) - n)
    return q, chebyshev_r(n, m, q, e)
