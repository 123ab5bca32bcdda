"""Graph encoder: SAGE-style convolutions with edge-difference attention.

Per layer the node state goes through a mean-aggregating convolution, a
ReLU+dropout, and then gets concatenated with an attention-weighted summary
of the edge attributes on its incident responder edges. Edge attributes are
an MLP of raw feature differences (responded-to minus responder) and are
shared across layers, as are the combine and output projections. Logits are
read out at node 0, the source tweet.

A plain variant without the edge path (baseline=True) serves as an ablation
control; with the edge MLP forced to zero and an identity-block combine the
full model reproduces it exactly.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nm
from .fileio import DataError
from .graph import FeaturedGraph
from .numerics import Tape, Tensor


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = 768
    hidden: int = 64
    edge_hidden: int = 64
    classes: int = 5
    heads: int = 2
    depth: int = 2
    dropout: float = 0.5
    neighborhood: str = "directed"        # "directed" | "undirected"
    attention_variant: str = "learned"    # "learned" | "attrmean"

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ModelConfigError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if self.depth < 1:
            raise ModelConfigError("depth must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.neighborhood not in ("directed", "undirected"):
            raise ModelConfigError(f"unknown neighborhood {self.neighborhood!r}")
        if self.attention_variant not in ("learned", "attrmean"):
            raise ModelConfigError(f"unknown attention_variant {self.attention_variant!r}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


def _layer_in_dim(config: ModelConfig, k: int) -> int:
    return config.in_dim if k == 0 else config.hidden


@dataclass
class ModelParams:
    """Named parameter tensors; baseline models leave the edge path empty."""

    config: ModelConfig
    baseline: bool
    sage_self: list[Tensor]
    sage_neigh: list[Tensor]
    attn_query: list[list[Tensor]]  # [layer][head]
    attn_key: list[list[Tensor]]
    edge_w1: Tensor | None
    edge_b1: Tensor | None
    edge_w2: Tensor | None
    edge_b2: Tensor | None
    combine_w3: Tensor | None
    out_w4: Tensor

    def named_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for k in range(self.config.depth):
            out[f"sage_self.{k}"] = self.sage_self[k]
            out[f"sage_neigh.{k}"] = self.sage_neigh[k]
        if not self.baseline:
            for k in range(self.config.depth):
                for j in range(self.config.heads):
                    out[f"attn_query.{k}.{j}"] = self.attn_query[k][j]
                    out[f"attn_key.{k}.{j}"] = self.attn_key[k][j]
            out["edge_w1"] = self.edge_w1
            out["edge_b1"] = self.edge_b1
            out["edge_w2"] = self.edge_w2
            out["edge_b2"] = self.edge_b2
            out["combine_w3"] = self.combine_w3
        out["out_w4"] = self.out_w4
        return out

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.named_tensors().values())

    def copy(self) -> "ModelParams":
        def cp(t):
            return t.copy() if t is not None else None
        return ModelParams(
            config=self.config, baseline=self.baseline,
            sage_self=[cp(t) for t in self.sage_self],
            sage_neigh=[cp(t) for t in self.sage_neigh],
            attn_query=[[cp(t) for t in row] for row in self.attn_query],
            attn_key=[[cp(t) for t in row] for row in self.attn_key],
            edge_w1=cp(self.edge_w1), edge_b1=cp(self.edge_b1),
            edge_w2=cp(self.edge_w2), edge_b2=cp(self.edge_b2),
            combine_w3=cp(self.combine_w3), out_w4=cp(self.out_w4))


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=(fan_in, fan_out)), requires_grad=True)


def _zeros(cols: int) -> Tensor:
    return Tensor(np.zeros((1, cols)), requires_grad=True)


def init_params(config: ModelConfig, seed: int, baseline: bool = False) -> ModelParams:
    """Xavier-uniform weights, zero biases; draw order is fixed so the same
    seed always yields bitwise-identical parameters."""
    rng = np.random.default_rng(seed)
    sage_self, sage_neigh = [], []
    for k in range(config.depth):
        d_in = _layer_in_dim(config, k)
        sage_self.append(_xavier(rng, d_in, config.hidden))
        sage_neigh.append(_xavier(rng, d_in, config.hidden))
    attn_query: list[list[Tensor]] = []
    attn_key: list[list[Tensor]] = []
    edge_w1 = edge_b1 = edge_w2 = edge_b2 = combine_w3 = None
    if not baseline:
        for k in range(config.depth):
            q_row, k_row = [], []
            for _ in range(config.heads):
                q_row.append(_xavier(rng, config.hidden, config.head_dim))
                k_row.append(_xavier(rng, config.hidden, config.head_dim))
            attn_query.append(q_row)
            attn_key.append(k_row)
        edge_w1 = _xavier(rng, config.in_dim, config.edge_hidden)
        edge_b1 = _zeros(config.edge_hidden)
        edge_w2 = _xavier(rng, config.edge_hidden, config.edge_hidden)
        edge_b2 = _zeros(config.edge_hidden)
        combine_w3 = _xavier(rng, config.hidden + config.edge_hidden, config.hidden)
    out_w4 = _xavier(rng, config.hidden, config.classes)
    return ModelParams(config=config, baseline=baseline,
                       sage_self=sage_self, sage_neigh=sage_neigh,
                       attn_query=attn_query, attn_key=attn_key,
                       edge_w1=edge_w1, edge_b1=edge_b1,
                       edge_w2=edge_w2, edge_b2=edge_b2,
                       combine_w3=combine_w3, out_w4=out_w4)


# ---------------------------------------------------------------------------
# forward pieces

@dataclass
class EdgeAttrTable:
    """Per-edge attributes in stored-edge order (mirrors appended in
    undirected mode): raw feature differences and their MLP transform."""

    raw: np.ndarray          # (E', in_dim) responded-to minus responder
    transformed: Tensor      # (E', edge_hidden)


def compute_edge_attrs(fg: FeaturedGraph, params: ModelParams,
                       tape: Tape | None = None) -> EdgeAttrTable:
    if params.baseline:
        raise ModelConfigError("baseline params have no edge attributes")
    undirected = params.config.neighborhood == "undirected"
    src, dst = fg.oriented_edges(undirected)
    raw = fg.features[dst] - fg.features[src]
    raw_t = Tensor(raw) if raw.size else Tensor(np.zeros((0, fg.dim)))
    h = nm.relu(nm.affine(raw_t, params.edge_w1, params.edge_b1, tape), tape)
    transformed = nm.affine(h, params.edge_w2, params.edge_b2, tape)
    return EdgeAttrTable(raw=raw, transformed=transformed)


def sage_conv(k: int, h: Tensor, fg: FeaturedGraph, params: ModelParams,
              tape: Tape | None = None) -> Tensor:
    """Pre-activation W_self @ h_v + W_neigh @ mean of responders; the
    caller applies the nonlinearity. Nodes with no responders aggregate a
    zero vector."""
    undirected = params.config.neighborhood == "undirected"
    key = ("mean_adj_t", undirected)
    if key not in fg._cache:
        fg._cache[key] = Tensor(fg.mean_adjacency(undirected))
    agg = nm.matmul(fg._cache[key], h, tape)
    return nm.add(nm.matmul(h, params.sage_self[k], tape),
                  nm.matmul(agg, params.sage_neigh[k], tape), tape)


@dataclass
class LayerState:
    """Eval-time internals captured for inspection, one per layer."""

    hidden: np.ndarray                 # node state after the combine step
    edge_logits: np.ndarray | None     # head-averaged scores per edge
    attention: np.ndarray | None       # softmax weights per edge (by dst)
    context: np.ndarray                # per-node edge context


def edge_attention(k: int, h: Tensor, attrs: EdgeAttrTable, fg: FeaturedGraph,
                   params: ModelParams, tape: Tape | None = None) -> tuple[Tensor, dict]:
    """Per-node convex combination of incident edge attributes.

    learned: per-head scaled dot-product scores between the responded-to
    node's query and the responder's key, averaged over heads, softmaxed
    over each node's in-edges. attrmean: feature-axis softmax of the node's
    mean edge attribute reweights attributes elementwise, then a per-node
    mean (the literal alternative kept for comparison).

    Nodes without in-edges get a zero context row.
    """
    cfg = params.config
    undirected = cfg.neighborhood == "undirected"
    src, dst = fg.oriented_edges(undirected)
    n = fg.graph.n_nodes
    skey = ("incidence_t", undirected)
    if skey not in fg._cache:
        fg._cache[skey] = Tensor(fg.incidence(undirected))
    s_mat = fg._cache[skey]

    if len(src) == 0:
        ctx = Tensor(np.zeros((n, cfg.edge_hidden)))
        return ctx, {"edge_logits": np.zeros(0), "attention": np.zeros(0)}

    if cfg.attention_variant == "learned":
        head_scores = []
        inv_sqrt = 1.0 / math.sqrt(cfg.head_dim)
        for j in range(cfg.heads):
            q = nm.matmul(h, params.attn_query[k][j], tape)
            key = nm.matmul(h, params.attn_key[k][j], tape)
            qe = nm.gather_rows(q, dst, tape)
            ke = nm.gather_rows(key, src, tape)
            head_scores.append(nm.scale(nm.row_dot(qe, ke, tape), inv_sqrt, tape))
        logits = head_scores[0]
        for extra in head_scores[1:]:
            logits = nm.add(logits, extra, tape)
        logits = nm.scale(logits, 1.0 / cfg.heads, tape)
        att = nm.segment_softmax(logits, dst, n, tape)
        weighted = nm.mul(att, attrs.transformed, tape)
        ctx = nm.matmul(s_mat, weighted, tape)
        return ctx, {"edge_logits": logits.data[:, 0].copy(),
                     "attention": att.data[:, 0].copy()}

    # attrmean: Softmax over the feature axis of each node's mean attribute
    mean_key = ("mean_inc_t", undirected)
    if mean_key not in fg._cache:
        inc = fg.incidence(undirected)
        deg = inc.sum(axis=1, keepdims=True)
        fg._cache[mean_key] = Tensor(np.divide(inc, deg, out=np.zeros_like(inc),
                                               where=deg > 0))
    mean_inc = fg._cache[mean_key]
    node_mean = nm.matmul(mean_inc, attrs.transformed, tape)
    node_soft = nm.softmax_rows(node_mean, tape)
    per_edge = nm.gather_rows(node_soft, dst, tape)
    weighted = nm.mul(per_edge, attrs.transformed, tape)
    ctx = nm.matmul(mean_inc, weighted, tape)
    return ctx, {"edge_logits": None, "attention": None}


@dataclass
class ForwardResult:
    logits: Tensor               # (1, classes), node-0 readout
    layers: list[LayerState] | None = None


def forward(fg: FeaturedGraph, params: ModelParams, mode: str = "eval",
            seed: int = 0, tape: Tape | None = None,
            capture_state: bool = False) -> ForwardResult:
    """Full model: per layer conv -> relu -> dropout -> attention context ->
    combine; then relu and the class projection at node 0."""
    cfg = params.config
    if params.baseline:
        return forward_baseline(fg, params, mode=mode, seed=seed, tape=tape,
                                capture_state=capture_state)
    if mode not in ("train", "eval"):
        raise ModelConfigError(f"unknown mode {mode!r}")
    if fg.dim != cfg.in_dim:
        raise DataError(f"graph {fg.graph.graph_id}: feature dim {fg.dim} "
                        f"!= model in_dim {cfg.in_dim}")
    training = mode == "train"
    attrs = compute_edge_attrs(fg, params, tape)
    h = Tensor(fg.features)
    states: list[LayerState] | None = [] if capture_state else None
    for k in range(cfg.depth):
        h = nm.relu(sage_conv(k, h, fg, params, tape), tape)
        h = nm.dropout(h, cfg.dropout, seed=_mix_seed(seed, k), training=training,
                       tape=tape)
        ctx, att_info = edge_attention(k, h, attrs, fg, params, tape)
        h = nm.matmul(nm.concat_cols(h, ctx, tape), params.combine_w3, tape)
        if states is not None:
            states.append(LayerState(hidden=h.data.copy(),
                                     edge_logits=att_info["edge_logits"],
                                     attention=att_info["attention"],
                                     context=ctx.data.copy()))
    h0 = nm.gather_rows(h, np.array([0]), tape)
    logits = nm.matmul(nm.relu(h0, tape), params.out_w4, tape)
    return ForwardResult(logits=logits, layers=states)


def forward_baseline(fg: FeaturedGraph, params: ModelParams, mode: str = "eval",
                     seed: int = 0, tape: Tape | None = None,
                     capture_state: bool = False) -> ForwardResult:
    """Ablation control: conv -> relu -> dropout per layer, no edge path."""
    cfg = params.config
    if mode not in ("train", "eval"):
        raise ModelConfigError(f"unknown mode {mode!r}")
    if fg.dim != cfg.in_dim:
        raise DataError(f"graph {fg.graph.graph_id}: feature dim {fg.dim} "
                        f"!= model in_dim {cfg.in_dim}")
    training = mode == "train"
    h = Tensor(fg.features)
    states: list[LayerState] | None = [] if capture_state else None
    for k in range(cfg.depth):
        h = nm.relu(sage_conv(k, h, fg, params, tape), tape)
        h = nm.dropout(h, cfg.dropout, seed=_mix_seed(seed, k), training=training,
                       tape=tape)
        if states is not None:
            states.append(LayerState(hidden=h.data.copy(), edge_logits=None,
                                     attention=None,
                                     context=np.zeros((fg.graph.n_nodes, 0))))
    h0 = nm.gather_rows(h, np.array([0]), tape)
    logits = nm.matmul(nm.relu(h0, tape), params.out_w4, tape)
    return ForwardResult(logits=logits, layers=states)


def _mix_seed(seed: int, k: int) -> int:
    # distinct per-layer dropout streams from one forward seed
    return (seed * 1000003 + k) % (2**63)


def predict(fg: FeaturedGraph, params: ModelParams) -> int:
    """Eval-mode argmax; ties resolve to the lowest class index."""
    logits = forward(fg, params, mode="eval").logits
    return int(np.argmax(logits.data[0]))


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "model-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, params: ModelParams,
                    extra: dict | None = None) -> None:
    """Named float64 arrays plus a JSON meta blob; round-trips bitwise."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "model_config": asdict(params.config), "baseline": params.baseline,
            "extra": extra or {}}
    arrays = {name: t.data for name, t in params.named_tensors().items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".npz")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        with np.load(path) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: not a checkpoint: {exc}") from exc
    if "__meta__" not in arrays:
        raise DataError(f"{path}: checkpoint meta missing")
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: unexpected checkpoint format {meta.get('format')!r}")
    config = ModelConfig(**meta["model_config"])
    params = init_params(config, seed=0, baseline=meta["baseline"])
    for name, t in params.named_tensors().items():
        if name not in arrays:
            raise DataError(f"{path}: missing tensor '{name}'")
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != t.data.shape:
            raise DataError(f"{path}: tensor '{name}' has shape {arr.shape}, "
                            f"expected {t.data.shape}")
        t.data = arr
    return params, meta
