"""Runtime scaling of KLM and the network over a size sweep."""
from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..exact import exact_wmc_enumeration
from ..formula import DnfFormula
from ..generator import GeneratorConfig, generate_formula, sample_base_distribution
from ..klm import KlmParams, klm_estimate
from ..nn.model import ModelConfig, batch_graphs, encode_graph, forward_batch, frozen


@dataclass
class BenchRow:
    n: int
    m: int
    width: int
    edges: int
    messages: int
    messages_expected: int
    klm_seconds: float
    gnn_seconds: float


@dataclass
class BenchReport:
    rows: list[BenchRow]
    gnn_fit: dict = field(default_factory=dict)
    klm_ratios: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "gnn_fit": self.gnn_fit, "klm_ratios": self.klm_ratios}


def median_time(fn, repeats: int) -> float:
    """Median wall time over ``repeats`` calls after one untimed warm-up."""
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> dict:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def sweep_formulas(ns: Sequence[int], width: int, m_ratio: float, seed: int = 0):
    out = []
    for i, n in enumerate(ns):
        m = max(1, int(round(m_ratio * n)))
        f = generate_formula(GeneratorConfig(n, m, width, width, seed=seed + i))
        w = sample_base_distribution(n, np.random.default_rng(seed + 1000 + i))
        out.append((f, w))
    return out


def bench(
    instances: Sequence[tuple[DnfFormula, np.ndarray]],
    params,
    cfg: ModelConfig,
    klm: KlmParams = KlmParams(),
    repeats: int = 3,
    backend: str | None = None,
    run_klm: bool = True,
) -> BenchReport:
    fixed = frozen(params)
    rows = []
    for f, w in instances:
        g = encode_graph(f)
        batch = batch_graphs([g], [w])
        res = forward_batch(fixed, cfg, batch, iterations=1)
        gnn = median_time(lambda: forward_batch(fixed, cfg, batch), repeats)
        klm_t = median_time(lambda: klm_estimate(f, w, klm, backend=backend), repeats) if run_klm else float("nan")
        rows.append(
            BenchRow(f.n, f.m, int(f.widths.max()), g.n_edges, res.messages[0], g.messages_per_iteration(), klm_t, gnn)
        )
    report = BenchReport(rows)
    if len(rows) >= 2:
        report.gnn_fit = linear_fit([r.edges for r in rows], [r.gnn_seconds for r in rows])
    report.klm_ratios = [b.klm_seconds / a.klm_seconds for a, b in zip(rows, rows[1:])]
    return report


@dataclass
class BackendRow:
    task: str
    size: int
    numba_seconds: float
    numpy_seconds: float
    identical: bool

    @property
    def speedup(self) -> float:
        return self.numpy_seconds / self.numba_seconds


def compare_backends(ns: Sequence[int] = (20, 50, 100), enum_ns: Sequence[int] = (12, 16), width: int = 3,
                     repeats: int = 3, seed: int = 0) -> list[BackendRow]:
    """Time the numba and numpy kernels on the same inputs."""
    rows = []
    klm = KlmParams(0.1, 0.05, seed)
    for f, w in sweep_formulas(ns, width, 0.75, seed):
        a = klm_estimate(f, w, klm, backend="numba")
        b = klm_estimate(f, w, klm, backend="numpy")
        rows.append(BackendRow(
            "klm", f.n,
            median_time(lambda: klm_estimate(f, w, klm, backend="numba"), repeats),
            median_time(lambda: klm_estimate(f, w, klm, backend="numpy"), repeats),
            a == b,
        ))
    for f, w in sweep_formulas(enum_ns, width, 0.75, seed):
        a = exact_wmc_enumeration(f, w, backend="numba")
        b = exact_wmc_enumeration(f, w, backend="numpy")
        rows.append(BackendRow(
            "enumeration", f.n,
            median_time(lambda: exact_wmc_enumeration(f, w, backend="numba"), repeats),
            median_time(lambda: exact_wmc_enumeration(f, w, backend="numpy"), repeats),
            abs(a - b) <= 1e-12,
        ))
    return rows
