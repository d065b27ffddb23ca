"""Labelled datasets: generation grid, KLM labelling, JSON-lines storage."""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import kernels
from ..formula import DnfFormula, read_formula, write_formula
from ..generator import (
    GeneratorConfig,
    RetryExhausted,
    generate_with_plan,
    quarter_increments,
    sample_base_distribution,
    sample_experiment_q_r,
)
from ..klm import KlmError, KlmParams, fit_gaussian_label, klm_estimate
from ..nn.train import TrainingRecord

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INLINE_MAX_VARS = 1000
DEFAULT_M_RATIOS = (0.25, 0.375, 0.5, 0.625, 0.75)
DEFAULT_WIDTHS = (3, 5, 8, 13, 21, 34)


@dataclass(frozen=True)
class GridConfig:
    """Sizes to generate; every valid ``(n, w, m)`` cell gets ``per_cell`` formulas.

    ``qr`` is ``"experiment"`` for the experiment rule (half without privileged
    variables), ``"none"`` for ``q = r = 0``, or ``"fixed"`` to use ``q``/``r``.
    """

    ns: tuple[int, ...]
    widths: tuple[int, ...]
    m_ratios: tuple[float, ...] = DEFAULT_M_RATIOS
    per_cell: int = 1
    qr: str = "experiment"
    q: float = 0.0
    r: float = 0.0
    ms: tuple[int, ...] | None = None
    max_retries: int = 50

    def __post_init__(self):
        if self.qr not in ("experiment", "none", "fixed"):
            raise ValueError(f"unknown qr mode {self.qr!r}")

    def cells(self) -> list[tuple[int, int, int]]:
        out = []
        for n in self.ns:
            for w in self.widths:
                if w > n:
                    continue
                if self.ms is not None:
                    out.extend((n, w, m) for m in self.ms)
                    continue
                for ratio in self.m_ratios:
                    if w == 3 and ratio == 0.25:
                        continue
                    out.append((n, w, max(1, int(round(ratio * n)))))
        return out


@dataclass
class Dataset:
    records: list[dict]
    dropped: list[dict] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)


def formula_seed(master: int, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *index])


def _derive_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


def _formula_json(f: DnfFormula) -> dict:
    return {"n": f.n, "clauses": [list(c) for c in f.clauses]}


def label_instance(f: DnfFormula, probs, params: KlmParams) -> dict:
    res = klm_estimate(f, probs, params)
    lab = fit_gaussian_label(res, params)
    return {
        "label_mean": lab.mean,
        "label_sigma": lab.sigma,
        "klm": {
            "epsilon": params.epsilon,
            "delta": params.delta,
            "seed": params.seed,
            "estimate": res.estimate,
            "trials": res.trials,
            "hits": res.hits,
        },
    }


def _plan_formulas(grid: GridConfig, master_seed: int):
    jobs = []
    index = 0
    for n, w, m in grid.cells():
        for _ in range(grid.per_cell):
            jobs.append((index, n, w, m))
            index += 1
    return jobs


def _generate_one(grid: GridConfig, master_seed: int, index: int, n: int, w: int, m: int):
    ss = formula_seed(master_seed, index)
    gen_ss, qr_ss, w_ss = ss.spawn(3)
    if grid.qr == "experiment":
        q, r = sample_experiment_q_r(n, m, np.random.default_rng(qr_ss), mean_width=w)
    elif grid.qr == "fixed":
        q, r = grid.q, grid.r
    else:
        q, r = 0.0, 0.0
    cfg = GeneratorConfig(n, m, w, w, q, r, seed=_derive_int(gen_ss), max_retries=grid.max_retries)
    f, plan = generate_with_plan(cfg)
    base = sample_base_distribution(n, np.random.default_rng(w_ss))
    return cfg, f, [base, *quarter_increments(base)], sorted(plan.privileged)


def build_dataset(
    grid: GridConfig,
    klm: KlmParams,
    master_seed: int,
    out_path: str | os.PathLike | None = None,
    threads: int = 1,
) -> Dataset:
    """Generate formulas on ``grid`` and label all four distributions of each with KLM.

    Instances whose KLM run has no hits or zero clause mass are dropped and
    listed in the manifest.  Output is deterministic in ``master_seed``
    regardless of ``threads``.
    """
    jobs = _plan_formulas(grid, master_seed)
    generated = []
    for index, n, w, m in jobs:
        try:
            generated.append((index, *_generate_one(grid, master_seed, index, n, w, m)))
        except RetryExhausted as exc:
            raise RetryExhausted(f"cell n={n} w={w} m={m}: {exc}") from exc

    tasks = []
    for index, cfg, f, dists, privileged in generated:
        for d, probs in enumerate(dists):
            seed = _derive_int(formula_seed(master_seed, index, d + 1))
            tasks.append((index, cfg, f, d, probs, privileged, seed))

    def run(task):
        index, cfg, f, d, probs, privileged, seed = task
        params = KlmParams(klm.epsilon, klm.delta, seed)
        try:
            return label_instance(f, probs, params), None
        except KlmError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    formula_dir = None
    if out_path is not None:
        formula_dir = Path(str(out_path) + ".formulas")
    records, dropped = [], []
    for (index, cfg, f, d, probs, privileged, seed), (label, err) in zip(tasks, results):
        rid = f"f{index:06d}_d{d}"
        if err is not None:
            dropped.append({"id": rid, "reason": err})
            log.warning("dropping %s: %s", rid, err)
            continue
        rec = {
            "schema": SCHEMA_VERSION,
            "id": rid,
            "formula_index": index,
            "dist": d,
            "n": f.n,
            "m": f.m,
            "width": cfg.max_width,
            "probs": [float(p) for p in probs],
            **label,
            "generator": {**asdict(cfg), "privileged": [v + 1 for v in privileged]},
        }
        if f.n > INLINE_MAX_VARS and formula_dir is not None:
            formula_dir.mkdir(parents=True, exist_ok=True)
            fpath = formula_dir / f"f{index:06d}.wdnf"
            if d == 0:
                write_formula(fpath, f, probs)
            rec["formula_path"] = os.path.relpath(fpath, Path(out_path).parent)
        else:
            rec["formula"] = _formula_json(f)
        records.append(rec)

    manifest = {
        "schema": SCHEMA_VERSION,
        "master_seed": int(master_seed),
        "grid": asdict(grid),
        "klm": {"epsilon": klm.epsilon, "delta": klm.delta},
        "rng": {
            "generator": "numpy PCG64 via SeedSequence([master, formula_index])",
            "klm": kernels.RNG_ALGORITHM,
        },
        "qr_rule": "q=r=0 w.p. 1/2; else q=ceil_1/n(Exp(1) mod ln(n)/n), "
        "r=largest multiple of 0.01 with Cantelli bound <= 1/2",
        "formulas": len(generated),
        "records": len(records),
        "dropped": dropped,
    }
    ds = Dataset(records, dropped, manifest)
    if out_path is not None:
        write_dataset(out_path, ds)
    return ds


def write_dataset(path, ds: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in ds.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(str(path) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(ds.manifest, fh, sort_keys=True, indent=1)


def read_records(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("schema") != SCHEMA_VERSION:
                raise ValueError(f"{path}:{lineno}: unsupported schema {rec.get('schema')!r}")
            out.append(rec)
    return out


def record_formula(rec: dict, base_dir=None) -> DnfFormula:
    if "formula" in rec:
        return DnfFormula(rec["formula"]["n"], tuple(tuple(c) for c in rec["formula"]["clauses"]))
    path = Path(rec["formula_path"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return read_formula(path)[0]


def to_training_records(records: Iterable[dict], base_dir=None) -> list[TrainingRecord]:
    out = []
    cache: dict[str, DnfFormula] = {}
    for rec in records:
        key = rec.get("formula_path") or rec["id"]
        f = cache.get(key) if "formula_path" in rec else None
        if f is None:
            f = record_formula(rec, base_dir)
            if "formula_path" in rec:
                cache[key] = f
        mean, sigma = rec["label_mean"], rec["label_sigma"]
        if not (math.isfinite(mean) and sigma > 0):
            raise ValueError(f"record {rec['id']} has an invalid label")
        out.append(TrainingRecord(f, np.asarray(rec["probs"], dtype=np.float64), mean, sigma, rec["id"]))
    return out


def load_dataset(path) -> list[TrainingRecord]:
    return to_training_records(read_records(path), Path(path).parent)


def label_files(paths: Sequence[str], klm: KlmParams, master_seed: int, threads: int = 1) -> Dataset:
    """Label existing ``wdnf`` files with their embedded weights."""
    tasks = []
    for i, p in enumerate(paths):
        f, w = read_formula(p)
        tasks.append((i, p, f, w, _derive_int(formula_seed(master_seed, i, 0))))

    def run(task):
        i, p, f, w, seed = task
        try:
            return label_instance(f, w, KlmParams(klm.epsilon, klm.delta, seed)), None
        except KlmError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, tasks))
    records, dropped = [], []
    for (i, p, f, w, seed), (label, err) in zip(tasks, results):
        rid = Path(p).stem
        if err:
            dropped.append({"id": rid, "reason": err})
            continue
        records.append({
            "schema": SCHEMA_VERSION, "id": rid, "formula_index": i, "dist": 0, "n": f.n, "m": f.m,
            "width": int(f.widths.max()), "probs": [float(x) for x in w], **label,
            "formula": _formula_json(f),
        })
    manifest = {"schema": SCHEMA_VERSION, "master_seed": master_seed, "inputs": list(map(str, paths)),
                "klm": {"epsilon": klm.epsilon, "delta": klm.delta}, "dropped": dropped}
    return Dataset(records, dropped, manifest)
