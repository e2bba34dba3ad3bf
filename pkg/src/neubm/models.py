"""Two-layer GNN forward passes (convolutional and attention variants) with
hand-written reverse-mode gradients, plus parameter containers and a JSON
checkpoint format.

Everything runs in float64; forward and backward are deterministic given
the explicit dropout seed, so training trajectories are bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .graph import CsrAdjacency, Graph, build_adjacency, symmetric_normalize

LEAKY_SLOPE = 0.2  # attention score nonlinearity


@dataclass(frozen=True)
class ModelConfig:
    architecture: str  # "gcn" | "gat"
    input_dim: int
    hidden_dim: int
    num_classes: int
    dropout: float = 0.5
    num_heads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ("gcn", "gat"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.num_heads < 1:
            raise ConfigError("num_heads must be >= 1")

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "num_classes": self.num_classes,
            "dropout": self.dropout,
            "num_heads": self.num_heads,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ModelParams:
    """Ordered weight arrays plus a flat view for the optimizer and
    finite-difference checks.

    gcn: (W0, W1). gat: per layer-1 head (W, a_src, a_dst), then the output
    head (W1, a1_src, a1_dst).
    """

    config: ModelConfig
    arrays: tuple[np.ndarray, ...]

    def __post_init__(self):
        for a in self.arrays:
            if not np.all(np.isfinite(a)):
                raise NumericError("non-finite model parameter")

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def from_flat(self, flat: np.ndarray) -> "ModelParams":
        out, pos = [], 0
        for a in self.arrays:
            out.append(flat[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != flat.size:
            raise ShapeError(f"flat vector has {flat.size} entries, expected {pos}")
        return replace(self, arrays=tuple(out))

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays)


def _glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_params(config: ModelConfig) -> ModelParams:
    """Seeded Glorot-uniform initialization."""
    rng = np.random.default_rng(config.seed)
    d, h, c, k = config.input_dim, config.hidden_dim, config.num_classes, config.num_heads
    if config.architecture == "gcn":
        arrays = (_glorot(rng, d, h), _glorot(rng, h, c))
    else:
        arrays = []
        for _ in range(k):
            arrays.append(_glorot(rng, d, h))
            arrays.append(_glorot(rng, 2 * h, 1, shape=(h,)))
            arrays.append(_glorot(rng, 2 * h, 1, shape=(h,)))
        arrays.append(_glorot(rng, k * h, c))
        arrays.append(_glorot(rng, 2 * c, 1, shape=(c,)))
        arrays.append(_glorot(rng, 2 * c, 1, shape=(c,)))
        arrays = tuple(arrays)
    return ModelParams(config=config, arrays=arrays)


def _dropout_mask(rng, shape, rate):
    # inverted dropout: kept entries scaled by 1/keep so eval needs no rescaling
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


# ---------------------------------------------------------------------------
# GCN


def gcn_forward(
    params: ModelParams,
    norm_adj: CsrAdjacency,
    features: np.ndarray,
    mode: str = "eval",
    dropout_seed: int = 0,
) -> np.ndarray:
    """logits = A_hat . dropout(relu(A_hat . X . W0)) . W1"""
    logits, _ = _gcn_pass(params, norm_adj, features, mode, dropout_seed)
    return logits


def _gcn_pass(params, norm_adj, features, mode, dropout_seed):
    w0, w1 = params.arrays
    if features.shape[1] != w0.shape[0]:
        raise ShapeError(
            f"features have width {features.shape[1]}, layer expects {w0.shape[0]}"
        )
    ax = norm_adj.matmul(features)
    z1 = ax @ w0
    a1 = np.maximum(z1, 0.0)
    if mode == "train" and params.config.dropout > 0.0:
        mask = _dropout_mask(
            np.random.default_rng(dropout_seed), a1.shape, params.config.dropout
        )
    else:
        mask = None
    h1 = a1 * mask if mask is not None else a1
    ah = norm_adj.matmul(h1)
    logits = ah @ w1
    cache = (ax, z1, mask, h1, ah)
    return logits, cache


def _gcn_backward(params, norm_adj, dlogits, cache):
    w0, w1 = params.arrays
    ax, z1, mask, h1, ah = cache
    dw1 = ah.T @ dlogits
    dh1 = norm_adj.matmul(dlogits @ w1.T)  # A_hat is symmetric
    da1 = dh1 * mask if mask is not None else dh1
    dz1 = da1 * (z1 > 0.0)
    dw0 = ax.T @ dz1
    return (dw0, dw1)


# ---------------------------------------------------------------------------
# GAT

NEG_INF = -1e30  # masked-out attention score


def _attention_layer(h, w, a_src, a_dst, adj_mask):
    """Single attention head: softmax-normalized neighbor aggregation.

    Scores are LeakyReLU(a_src . Wh_i + a_dst . Wh_j) over j in N(i) + {i}.
    Returns the output and a cache for the backward pass.
    """
    g = h @ w
    s_src = g @ a_src
    s_dst = g @ a_dst
    e = s_src[:, None] + s_dst[None, :]
    e_act = np.where(e > 0.0, e, LEAKY_SLOPE * e)
    scores = np.where(adj_mask, e_act, NEG_INF)
    scores = scores - scores.max(axis=1, keepdims=True)
    exps = np.exp(scores) * adj_mask
    alpha = exps / exps.sum(axis=1, keepdims=True)
    out = alpha @ g
    return out, (g, e, alpha)


def _attention_backward(dout, h, w, a_src, a_dst, adj_mask, cache):
    g, e, alpha = cache
    dalpha = dout @ g.T
    dg = alpha.T @ dout
    # softmax rows: restricted to the neighborhood mask
    row_dot = (alpha * dalpha).sum(axis=1, keepdims=True)
    de_act = alpha * (dalpha - row_dot)
    de = de_act * np.where(e > 0.0, 1.0, LEAKY_SLOPE)
    ds_src = de.sum(axis=1)
    ds_dst = de.sum(axis=0)
    dg += np.outer(ds_src, a_src) + np.outer(ds_dst, a_dst)
    da_src = g.T @ ds_src
    da_dst = g.T @ ds_dst
    dw = h.T @ dg
    dh = dg @ w.T
    return dh, dw, da_src, da_dst


def _gat_mask(graph: Graph) -> np.ndarray:
    mask = np.zeros((graph.num_nodes, graph.num_nodes), dtype=bool)
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    mask[u, v] = True
    mask[v, u] = True
    np.fill_diagonal(mask, True)
    return mask


def gat_forward(
    params: ModelParams,
    graph: Graph,
    features: np.ndarray,
    mode: str = "eval",
    dropout_seed: int = 0,
) -> np.ndarray:
    logits, _ = _gat_pass(params, _gat_mask(graph), features, mode, dropout_seed)
    return logits


def _gat_pass(params, adj_mask, features, mode, dropout_seed):
    cfg = params.config
    if features.shape[1] != cfg.input_dim:
        raise ShapeError(
            f"features have width {features.shape[1]}, model expects {cfg.input_dim}"
        )
    k = cfg.num_heads
    head_outs, head_caches = [], []
    for i in range(k):
        w, a_s, a_d = params.arrays[3 * i : 3 * i + 3]
        out, cache = _attention_layer(features, w, a_s, a_d, adj_mask)
        head_outs.append(out)
        head_caches.append(cache)
    z1 = np.concatenate(head_outs, axis=1)
    a1 = np.maximum(z1, 0.0)
    if mode == "train" and cfg.dropout > 0.0:
        mask = _dropout_mask(
            np.random.default_rng(dropout_seed), a1.shape, cfg.dropout
        )
    else:
        mask = None
    h1 = a1 * mask if mask is not None else a1
    w1, a1_s, a1_d = params.arrays[3 * k : 3 * k + 3]
    logits, out_cache = _attention_layer(h1, w1, a1_s, a1_d, adj_mask)
    return logits, (head_caches, z1, mask, h1, out_cache)


def _gat_backward(params, adj_mask, features, dlogits, cache):
    cfg = params.config
    k = cfg.num_heads
    head_caches, z1, mask, h1, out_cache = cache
    w1, a1_s, a1_d = params.arrays[3 * k : 3 * k + 3]
    dh1, dw1, da1_s, da1_d = _attention_backward(
        dlogits, h1, w1, a1_s, a1_d, adj_mask, out_cache
    )
    da1 = dh1 * mask if mask is not None else dh1
    dz1 = da1 * (z1 > 0.0)
    grads = []
    h = cfg.hidden_dim
    for i in range(k):
        w, a_s, a_d = params.arrays[3 * i : 3 * i + 3]
        _, dw, da_s, da_d = _attention_backward(
            dz1[:, i * h : (i + 1) * h], features, w, a_s, a_d, adj_mask,
            head_caches[i],
        )
        grads.extend([dw, da_s, da_d])
    grads.extend([dw1, da1_s, da1_d])
    return tuple(grads)


# ---------------------------------------------------------------------------
# shared entry points


def prepare_operator(graph: Graph, config: ModelConfig):
    """Precompute the fixed propagation operator for a graph.

    gcn: symmetrically normalized self-looped adjacency. gat: the dense
    neighborhood mask (with self-loops).
    """
    if config.architecture == "gcn":
        return symmetric_normalize(build_adjacency(graph, add_self_loops=True))
    return _gat_mask(graph)


def forward_with_operator(params, operator, features, mode="eval", dropout_seed=0):
    if params.config.architecture == "gcn":
        return _gcn_pass(params, operator, features, mode, dropout_seed)
    return _gat_pass(params, operator, features, mode, dropout_seed)


def backward_with_operator(params, operator, features, dlogits, cache):
    if params.config.architecture == "gcn":
        return _gcn_backward(params, operator, dlogits, cache)
    return _gat_backward(params, operator, features, dlogits, cache)


def predict_logits(params: ModelParams, graph: Graph) -> np.ndarray:
    """Uncalibrated per-node logits, eval mode."""
    operator = prepare_operator(graph, params.config)
    logits, _ = forward_with_operator(params, operator, graph.features, mode="eval")
    return logits


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "neubm-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": params.config.to_dict(),
        "params_flat": params.flat().tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_checkpoint(path) -> ModelParams:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('version')}")
    config = ModelConfig(**payload["model_config"])
    template = init_params(config)
    flat = np.asarray(payload["params_flat"], dtype=np.float64)
    return template.from_flat(flat)
