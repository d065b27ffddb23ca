"""Message-passing network over the literal/conjunction/disjunction graph.

Several formulas are processed at once as the disjoint union of their
graphs; every aggregation is a sparse incidence product, so batching changes
nothing about the per-formula computation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..formula import DnfFormula, check_weights
from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 128
    iterations: int = 8
    enc_hidden: tuple[int, ...] = (8, 32)
    msg_layers: int = 4
    out_hidden: tuple[int, ...] = (32, 8)
    elu_variant: str = "exp"

    def __post_init__(self):
        object.__setattr__(self, "enc_hidden", tuple(self.enc_hidden))
        object.__setattr__(self, "out_hidden", tuple(self.out_hidden))
        sizes = (self.dim, self.msg_layers, *self.enc_hidden, *self.out_hidden)
        if min(sizes) < 1 or self.iterations < 0:
            raise ValueError("layer sizes must be positive and iterations non-negative")
        if self.elu_variant not in ("exp", "printed"):
            raise ValueError("elu_variant must be 'exp' or 'printed'")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DnfGraph:
    """Graph of one formula.

    Literal node ``2*(v-1)`` is ``x_v`` and ``2*(v-1)+1`` is ``not x_v``;
    conjunction ``c`` is clause ``c`` in file order.
    """

    n: int
    m: int
    edge_conj: np.ndarray  # conjunction end of each literal-conjunction edge
    edge_lit: np.ndarray  # literal end

    @property
    def n_literals(self) -> int:
        return 2 * self.n

    @property
    def n_edges(self) -> int:
        return int(self.edge_lit.shape[0])

    @property
    def negation(self) -> np.ndarray:
        return np.arange(2 * self.n) ^ 1

    def messages_per_iteration(self) -> int:
        return 2 * self.n_edges + 2 * self.n + 2 * self.m


def encode_graph(f: DnfFormula) -> DnfGraph:
    offsets, vars0, signs = f.packed
    edge_lit = 2 * vars0 + (1 - signs.astype(np.int64))
    edge_conj = np.repeat(np.arange(f.m, dtype=np.int64), f.widths)
    return DnfGraph(f.n, f.m, edge_conj, edge_lit)


def literal_features(probs: np.ndarray) -> np.ndarray:
    """Satisfaction probability of each literal node (``p`` then ``1 - p``)."""
    out = np.empty(2 * probs.shape[0])
    out[0::2] = probs
    out[1::2] = 1.0 - probs
    return out


@dataclass
class GraphBatch:
    features: np.ndarray
    lit_conj: sp.csr_matrix  # (conjunctions, literals)
    conj_lit: sp.csr_matrix
    conj_disj: sp.csr_matrix  # (graphs, conjunctions)
    disj_conj: sp.csr_matrix
    negation: np.ndarray
    n_graphs: int
    messages_per_iteration: int = 0

    @property
    def n_literals(self) -> int:
        return self.features.shape[0]

    @property
    def n_conj(self) -> int:
        return self.conj_disj.shape[1]


def batch_graphs(graphs: Sequence[DnfGraph], weights: Sequence[np.ndarray]) -> GraphBatch:
    lit_off = np.cumsum([0] + [g.n_literals for g in graphs])
    conj_off = np.cumsum([0] + [g.m for g in graphs])
    rows = np.concatenate([g.edge_conj + c0 for g, c0 in zip(graphs, conj_off)])
    cols = np.concatenate([g.edge_lit + l0 for g, l0 in zip(graphs, lit_off)])
    n_lit, n_conj = int(lit_off[-1]), int(conj_off[-1])
    ones = np.ones(rows.shape[0])
    lit_conj = sp.csr_matrix((ones, (rows, cols)), shape=(n_conj, n_lit))
    disj_rows = np.repeat(np.arange(len(graphs)), [g.m for g in graphs])
    conj_disj = sp.csr_matrix(
        (np.ones(n_conj), (disj_rows, np.arange(n_conj))), shape=(len(graphs), n_conj)
    )
    feats = np.concatenate(
        [literal_features(check_weights(w, g.n)) for g, w in zip(graphs, weights)]
    )
    return GraphBatch(
        features=feats,
        lit_conj=lit_conj,
        conj_lit=lit_conj.T.tocsr(),
        conj_disj=conj_disj,
        disj_conj=conj_disj.T.tocsr(),
        negation=np.arange(n_lit) ^ 1,
        n_graphs=len(graphs),
    )


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _mlp_sizes(cfg: ModelConfig) -> dict[str, list[int]]:
    k = cfg.dim
    return {
        "enc": [1, *cfg.enc_hidden, k],
        "msg_l": [k] * (cfg.msg_layers + 1),
        "msg_c": [k] * (cfg.msg_layers + 1),
        "msg_d": [k] * (cfg.msg_layers + 1),
        "out": [k, *cfg.out_hidden, 2],
    }


LSTM_INPUTS = {"lstm_c1": 1, "lstm_c2": 1, "lstm_d": 1, "lstm_l": 2}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    k = cfg.dim
    shapes: dict[str, tuple[int, ...]] = {}
    for name, sizes in _mlp_sizes(cfg).items():
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            shapes[f"{name}.{i}.w"] = (a, b)
            shapes[f"{name}.{i}.b"] = (b,)
    for name, mult in LSTM_INPUTS.items():
        shapes[f"{name}.wx"] = (mult * k, 4 * k)
        shapes[f"{name}.wh"] = (k, 4 * k)
        shapes[f"{name}.b"] = (4 * k,)
        for ln, width in (("ln_x", 4 * k), ("ln_h", 4 * k), ("ln_c", k)):
            shapes[f"{name}.{ln}.g"] = (width,)
            shapes[f"{name}.{ln}.b"] = (width,)
    shapes["v_c"] = (k,)
    shapes["v_d"] = (k,)
    return shapes


def _is_last_layer(name: str, cfg: ModelConfig) -> bool:
    mlp_name, layer = name.split(".")[:2]
    return int(layer) == len(_mlp_sizes(cfg)[mlp_name]) - 2


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Fan-in scaled uniform weights, unit layer-norm gains, forget bias +1, ReLU biases 0.01."""
    rng = np.random.default_rng(seed)
    k = cfg.dim
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if name in ("v_c", "v_d"):
            data = rng.normal(0.0, 0.1, size=shape)
        elif leaf in ("w", "wx", "wh"):
            # variance-preserving bound; ReLU layers get the extra factor 2
            gain = 6.0 if leaf == "w" and not _is_last_layer(name, cfg) else 3.0
            bound = math.sqrt(gain / shape[0])
            data = rng.uniform(-bound, bound, size=shape)
        elif leaf == "g":
            data = np.ones(shape)
        elif name.startswith("lstm"):
            data = np.zeros(shape)
            if ".ln_" not in name:
                data[k:2 * k] = 1.0
        else:
            # small positive bias keeps ReLU units off their kink at start
            data = np.full(shape, 0.0 if _is_last_layer(name, cfg) else 0.01)
        params[name] = ad.parameter(data)
    return params


def check_params(params: dict, cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ValueError(f"parameter names mismatch; missing={missing[:4]} extra={extra[:4]}")
    for name, shape in expected.items():
        got = tuple(np.shape(params[name].data if isinstance(params[name], Tensor) else params[name]))
        if got != shape:
            raise ValueError(f"parameter {name} has shape {got}, expected {shape}")


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def mlp(params, name: str, depth: int, x: Tensor, final_linear: bool = True) -> Tensor:
    """ReLU between layers, linear output."""
    for i in range(depth):
        x = ad.linear(x, params[f"{name}.{i}.w"], params[f"{name}.{i}.b"])
        if i < depth - 1 or not final_linear:
            x = ad.relu(x)
    return x


def ln_lstm(params, name: str, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """Layer-norm LSTM cell; gate order input, forget, output, candidate."""
    k = h.shape[1]
    p = lambda s: params[f"{name}.{s}"]
    gx = ad.layer_norm(ad.matmul(x, p("wx")), p("ln_x.g"), p("ln_x.b"), groups=4)
    gh = ad.layer_norm(ad.matmul(h, p("wh")), p("ln_h.g"), p("ln_h.b"), groups=4)
    pre = gx + gh + p("b")
    i = ad.sigmoid(ad.slice_cols(pre, 0, k))
    f = ad.sigmoid(ad.slice_cols(pre, k, 2 * k))
    o = ad.sigmoid(ad.slice_cols(pre, 2 * k, 3 * k))
    g = ad.tanh(ad.slice_cols(pre, 3 * k, 4 * k))
    c_new = f * c + i * g
    h_new = o * ad.tanh(ad.layer_norm(c_new, p("ln_c.g"), p("ln_c.b")))
    return h_new, c_new


def output_head(params, cfg: ModelConfig, v_disj: Tensor) -> tuple[Tensor, Tensor]:
    """Map disjunction states to ``(mean, sigma)`` with mean < 0 < sigma."""
    pre = mlp(params, "out", len(cfg.out_hidden) + 1, v_disj)
    return head_activations(pre, cfg.elu_variant)


def head_activations(pre: Tensor, variant: str = "exp") -> tuple[Tensor, Tensor]:
    mean = -ad.elu_plus_one(ad.column(pre, 0), variant)
    sigma = ad.elu_plus_one(ad.column(pre, 1), variant)
    return mean, sigma


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

@dataclass
class ForwardResult:
    mean: Tensor
    sigma: Tensor
    trace: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    messages: list[int] = field(default_factory=list)


def forward_batch(
    params, cfg: ModelConfig, batch: GraphBatch, iterations: int | None = None, trace: bool = False
) -> ForwardResult:
    T = cfg.iterations if iterations is None else iterations
    depth = cfg.msg_layers
    k = cfg.dim
    L, C, G = batch.n_literals, batch.n_conj, batch.n_graphs

    h_l = mlp(params, "enc", len(cfg.enc_hidden) + 1, ad.as_tensor(batch.features[:, None]))
    c_l = ad.as_tensor(np.zeros((L, k)))
    h_c = ad.broadcast_rows(params["v_c"], C)
    c_c = ad.as_tensor(np.zeros((C, k)))
    h_d = ad.broadcast_rows(params["v_d"], G)
    c_d = ad.as_tensor(np.zeros((G, k)))

    result = ForwardResult(None, None)
    for _ in range(T):
        sent = 0
        # (a) literals -> conjunctions
        m_l = mlp(params, "msg_l", depth, h_l)
        agg = ad.spmm(batch.lit_conj, m_l, batch.conj_lit)
        sent += batch.lit_conj.nnz
        hat_h, hat_c = ln_lstm(params, "lstm_c1", agg, h_c, c_c)
        # (b) conjunctions -> disjunction
        agg_d = ad.spmm(batch.conj_disj, mlp(params, "msg_c", depth, hat_h), batch.disj_conj)
        sent += batch.conj_disj.nnz
        h_d, c_d = ln_lstm(params, "lstm_d", agg_d, h_d, c_d)
        # (c) disjunction -> conjunctions
        down = ad.spmm(batch.disj_conj, mlp(params, "msg_d", depth, h_d), batch.conj_disj)
        sent += batch.disj_conj.nnz
        h_c, c_c = ln_lstm(params, "lstm_c2", down, hat_h, hat_c)
        # (d) conjunctions -> literals, concatenated with the negated literal's message
        agg_l = ad.spmm(batch.conj_lit, mlp(params, "msg_c", depth, h_c), batch.lit_conj)
        neg = ad.permute_rows(m_l, batch.negation, batch.negation)
        sent += batch.conj_lit.nnz + L
        h_l, c_l = ln_lstm(params, "lstm_l", ad.concat([agg_l, neg]), h_l, c_l)
        result.messages.append(sent)
        if trace:
            mu, sd = output_head(params, cfg, h_d)
            result.trace.append((mu.data.copy(), sd.data.copy()))
    result.mean, result.sigma = output_head(params, cfg, h_d)
    return result


def frozen(params) -> dict[str, Tensor]:
    """Constant copies of ``params`` for inference (no gradient bookkeeping)."""
    return {
        name: Tensor(p.data if isinstance(p, Tensor) else p, requires_grad=False)
        for name, p in params.items()
    }


def forward(f: DnfFormula, probs, params, cfg: ModelConfig, iterations: int | None = None, trace: bool = False):
    """Predict ``(mean, sigma)`` of the log count for one formula.

    With ``trace=True`` also returns the per-iteration list of predictions.
    """
    batch = batch_graphs([encode_graph(f)], [np.asarray(probs, dtype=np.float64)])
    res = forward_batch(frozen(params), cfg, batch, iterations, trace)
    pred = (float(res.mean.data[0]), float(res.sigma.data[0]))
    if trace:
        return pred, [(float(mu[0]), float(sd[0])) for mu, sd in res.trace]
    return pred


def predict_many(formulas, weights, params, cfg: ModelConfig, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    fixed = frozen(params)
    means, sigmas = [], []
    graphs = [encode_graph(f) for f in formulas]
    for start in range(0, len(graphs), batch_size):
        batch = batch_graphs(graphs[start:start + batch_size], weights[start:start + batch_size])
        res = forward_batch(fixed, cfg, batch)
        means.append(res.mean.data)
        sigmas.append(res.sigma.data)
    if not means:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(means), np.concatenate(sigmas)


def predict_wmc(f: DnfFormula, probs, params, cfg: ModelConfig) -> float:
    return math.exp(forward(f, probs, params, cfg)[0])


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def kl_divergence(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """KL(N1 || N2) between univariate Gaussians given by mean and std."""
    if not (sigma1 > 0 and sigma2 > 0):
        raise ValueError("standard deviations must be positive")
    return math.log(sigma2 / sigma1) - 0.5 + (sigma1**2 + (mu1 - mu2) ** 2) / (2.0 * sigma2**2)


def kl_loss(mean: Tensor, sigma: Tensor, label_mean: np.ndarray, label_sigma: np.ndarray) -> Tensor:
    """Mean over the batch of KL(prediction || label)."""
    inv2 = 1.0 / (2.0 * label_sigma**2)
    diff = mean - label_mean
    terms = ad.neg(ad.log(sigma)) + (ad.square(sigma) + ad.square(diff)) * inv2
    return ad.mean(terms) + float(np.mean(np.log(label_sigma)) - 0.5)
