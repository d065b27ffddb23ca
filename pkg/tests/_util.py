"""Shared helpers for the test modules."""
from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from dnfcount.formula import DnfFormula
from dnfcount.nn import autodiff as ad
from dnfcount.nn.model import batch_graphs, encode_graph, forward_batch, kl_loss

FIG2 = DnfFormula(4, ((1, -2, 4), (1, 2, -3)))
PSI = DnfFormula(2, ((1, 2), (-1, -2)))


def random_formula(rng: np.random.Generator, n: int, m: int, max_width: int | None = None) -> DnfFormula:
    """Clauses of mixed width over distinct random variables with random signs."""
    max_width = min(n, max_width or n)
    clauses = []
    for _ in range(m):
        w = int(rng.integers(1, max_width + 1))
        vs = rng.choice(n, size=w, replace=False) + 1
        signs = rng.choice([-1, 1], size=w)
        clauses.append(tuple(sorted((int(v * s) for v, s in zip(vs, signs)), key=abs)))
    return DnfFormula(n, tuple(clauses))


def random_weights(rng: np.random.Generator, n: int, edge_prob: float = 0.1) -> np.ndarray:
    """Uniform weights, with some entries pushed to exactly 0 or 1."""
    w = rng.random(n)
    edge = rng.random(n) < edge_prob
    w[edge] = rng.integers(0, 2, size=int(edge.sum()))
    return w


@st.composite
def instances(draw, max_n: int = 8, max_m: int = 6):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    clauses = []
    for _ in range(m):
        vs = draw(st.lists(st.integers(1, n), min_size=1, max_size=n, unique=True))
        signs = draw(st.lists(st.booleans(), min_size=len(vs), max_size=len(vs)))
        clauses.append(tuple(sorted((v if s else -v for v, s in zip(vs, signs)), key=abs)))
    probs = draw(
        st.lists(
            st.one_of(st.floats(0.0, 1.0, allow_nan=False), st.sampled_from([0.0, 0.5, 1.0])),
            min_size=n,
            max_size=n,
        )
    )
    return DnfFormula(n, tuple(clauses)), np.asarray(probs, dtype=np.float64)


def per_instance_losses(params, cfg, batch, label_mean, label_sigma) -> np.ndarray:
    res = forward_batch(params, cfg, batch)
    mu, sd = res.mean.data, res.sigma.data
    return np.log(label_sigma / sd) - 0.5 + (sd**2 + (mu - label_mean) ** 2) / (2.0 * label_sigma**2)


def gradient_check(params, cfg, formulas, weights, label_mean, label_sigma, h: float = 1e-6) -> dict:
    """Worst relative error (over instances) per parameter tensor.

    Analytic gradients come from one backward pass per instance; central
    differences perturb each scalar once and read every instance's loss from
    the same batched forward pass.
    """
    batch = batch_graphs([encode_graph(f) for f in formulas], weights)
    count = len(formulas)
    analytic = []
    for i in range(count):
        for p in params.values():
            p.grad = None
        res = forward_batch(params, cfg, batch)
        loss = kl_loss(
            ad.take_rows(res.mean, np.array([i])),
            ad.take_rows(res.sigma, np.array([i])),
            label_mean[i:i + 1],
            label_sigma[i:i + 1],
        )
        loss.backward()
        analytic.append({k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()})

    worst = {}
    for name, p in params.items():
        fd = np.zeros((count,) + p.data.shape)
        for idx in np.ndindex(p.data.shape):
            old = p.data[idx]
            p.data[idx] = old + h
            up = per_instance_losses(params, cfg, batch, label_mean, label_sigma)
            p.data[idx] = old - h
            down = per_instance_losses(params, cfg, batch, label_mean, label_sigma)
            p.data[idx] = old
            fd[(slice(None),) + idx] = (up - down) / (2.0 * h)
        errs = []
        for i in range(count):
            g = analytic[i][name]
            scale = max(np.linalg.norm(g), np.linalg.norm(fd[i]))
            errs.append(0.0 if scale < 1e-10 else float(np.linalg.norm(g - fd[i]) / scale))
        worst[name] = max(errs)
    return worst
