"""Propagation graphs, time snapshots, and node-feature files.

Nodes are tweets/comments/reposts of one post set; node 0 is always the
source tweet. Edges run responder -> responded-to, so a node's in-neighbors
are its direct responders and information flows toward the source.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import DataError, atomic_write, make_header, read_jsonl, write_jsonl
from .ingestion import PostSet


class GraphBuildError(DataError):
    pass


@dataclass(frozen=True)
class GraphNode:
    index: int
    tweet_id: str
    timestamp: int
    kind: str  # "source" | "reply" | "retweet"


@dataclass(frozen=True)
class GraphEdge:
    src: int  # responder
    dst: int  # responded-to
    kind: str  # "reply" | "retweet"


@dataclass
class StaticGraph:
    graph_id: str
    nodes: list[GraphNode]
    edges: list[GraphEdge]
    label: int | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def validate_graph(g: StaticGraph) -> None:
    """Check the structural contract: source at index 0, responder edges
    never predate their target, no self loops or duplicate edges, and every
    node reaches the source (weak connectivity)."""
    if not g.nodes:
        raise GraphBuildError(f"graph {g.graph_id}: no nodes")
    if g.nodes[0].kind != "source" or g.nodes[0].index != 0:
        raise GraphBuildError(f"graph {g.graph_id}: node 0 must be the source")
    for i, node in enumerate(g.nodes):
        if node.index != i:
            raise GraphBuildError(f"graph {g.graph_id}: node index {node.index} at slot {i}")
    seen = set()
    adj: dict[int, set[int]] = {i: set() for i in range(len(g.nodes))}
    for e in g.edges:
        if not (0 <= e.src < len(g.nodes) and 0 <= e.dst < len(g.nodes)):
            raise GraphBuildError(f"graph {g.graph_id}: edge endpoint out of range")
        if e.src == e.dst:
            raise GraphBuildError(f"graph {g.graph_id}: self loop at {e.src}")
        if (e.src, e.dst) in seen:
            raise GraphBuildError(f"graph {g.graph_id}: duplicate edge {e.src}->{e.dst}")
        seen.add((e.src, e.dst))
        if g.nodes[e.src].timestamp < g.nodes[e.dst].timestamp:
            raise GraphBuildError(
                f"graph {g.graph_id}: edge {e.src}->{e.dst} goes back in time")
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    # weak connectivity from the source
    stack = [0]
    reached = {0}
    while stack:
        for n in adj[stack.pop()]:
            if n not in reached:
                reached.add(n)
                stack.append(n)
    if len(reached) != len(g.nodes):
        raise GraphBuildError(f"graph {g.graph_id}: {len(g.nodes) - len(reached)} "
                              "nodes unreachable from the source")


def build_static_graph(post_set: PostSet) -> StaticGraph:
    """Turn one post set into a propagation graph.

    Responsive nodes keep their (timestamp, id) order after the source;
    every member's parent must be the source or another member.
    """
    nodes = [GraphNode(index=0, tweet_id=post_set.source_id,
                       timestamp=post_set.source_timestamp, kind="source")]
    index_of = {post_set.source_id: 0}
    members = sorted(post_set.members, key=lambda m: (m.timestamp, m.id))
    for m in members:
        if m.id in index_of:
            raise GraphBuildError(f"graph {post_set.source_id}: duplicate member {m.id}")
        index_of[m.id] = len(nodes)
        kind = m.kind if m.kind in ("reply", "retweet") else "reply"
        nodes.append(GraphNode(index=len(nodes), tweet_id=m.id,
                               timestamp=m.timestamp, kind=kind))
    edges = []
    for m in members:
        parent = index_of.get(m.parent_id)
        if parent is None:
            raise GraphBuildError(
                f"graph {post_set.source_id}: member {m.id} has parent "
                f"{m.parent_id} outside the set")
        edges.append(GraphEdge(src=index_of[m.id], dst=parent, kind=m.kind))
    g = StaticGraph(graph_id=post_set.source_id, nodes=nodes, edges=edges,
                    label=post_set.label)
    validate_graph(g)
    return g


# ---------------------------------------------------------------------------
# snapshots

SNAPSHOT_INTERVAL_SECONDS = 6 * 3600


@dataclass
class Snapshot:
    graph_id: str
    k: int  # 1-based window index
    cutoff: int
    node_indices: list[int]  # original indices, ascending
    edges: list[GraphEdge]   # original index space

    def to_static_graph(self, base: StaticGraph) -> StaticGraph:
        """Reindex to a standalone graph; the source stays at 0 and the
        relative node order (by timestamp) is preserved."""
        remap = {old: new for new, old in enumerate(self.node_indices)}
        nodes = [GraphNode(index=remap[i], tweet_id=base.nodes[i].tweet_id,
                           timestamp=base.nodes[i].timestamp, kind=base.nodes[i].kind)
                 for i in self.node_indices]
        edges = [GraphEdge(src=remap[e.src], dst=remap[e.dst], kind=e.kind)
                 for e in self.edges]
        return StaticGraph(graph_id=f"{self.graph_id}@{self.k}", nodes=nodes,
                           edges=edges, label=base.label)


def snapshot_series(g: StaticGraph,
                    interval_seconds: int = SNAPSHOT_INTERVAL_SECONDS) -> list[Snapshot]:
    """Cumulative windows at source_time + k*interval.

    The series ends with the first cutoff at or beyond the latest node
    timestamp, so the final snapshot always equals the full graph.
    """
    if interval_seconds <= 0:
        raise GraphBuildError("snapshot interval must be positive")
    t0 = g.nodes[0].timestamp
    latest = max(n.timestamp for n in g.nodes)
    out: list[Snapshot] = []
    k = 0
    while True:
        k += 1
        cutoff = t0 + k * interval_seconds
        keep = [n.index for n in g.nodes if n.timestamp <= cutoff]
        keep_set = set(keep)
        edges = [e for e in g.edges if e.src in keep_set and e.dst in keep_set]
        out.append(Snapshot(graph_id=g.graph_id, k=k, cutoff=cutoff,
                            node_indices=keep, edges=edges))
        if cutoff >= latest:
            return out


# ---------------------------------------------------------------------------
# graph file

GRAPHS_FORMAT = "rumor-graphs"


def write_graphs(path: str | Path, graphs: list[StaticGraph],
                 config: dict | None = None) -> None:
    def rows():
        for g in graphs:
            yield {"graph_id": g.graph_id, "label": g.label,
                   "nodes": [{"i": n.index, "tweet_id": n.tweet_id,
                              "ts": n.timestamp, "kind": n.kind} for n in g.nodes],
                   "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind}
                             for e in g.edges]}
    write_jsonl(path, rows(), header=make_header(GRAPHS_FORMAT, config))


def read_graphs(path: str | Path) -> list[StaticGraph]:
    _, rows = read_jsonl(path, expect_format=GRAPHS_FORMAT)
    graphs = []
    for row in rows:
        try:
            nodes = [GraphNode(index=int(n["i"]), tweet_id=str(n["tweet_id"]),
                               timestamp=int(n["ts"]), kind=str(n["kind"]))
                     for n in row["nodes"]]
            edges = [GraphEdge(src=int(e["src"]), dst=int(e["dst"]), kind=str(e["kind"]))
                     for e in row["edges"]]
            g = StaticGraph(graph_id=str(row["graph_id"]),
                            nodes=nodes, edges=edges,
                            label=None if row.get("label") is None else int(row["label"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: bad graph row: {exc}") from exc
        validate_graph(g)
        graphs.append(g)
    return graphs


# ---------------------------------------------------------------------------
# node features (NFV1)

FEATURES_MAGIC = b"NFV1"
FEATURE_IDS_FORMAT = "nfv1-ids"


@dataclass
class FeatureTable:
    """Feature rows keyed by node id; float64 in memory, float32 on disk."""

    ids: list[str]
    data: np.ndarray  # (n, dim) float64
    row_of: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DataError("feature table must be 2-D")
        if len(self.ids) != self.data.shape[0]:
            raise DataError(f"{len(self.ids)} ids for {self.data.shape[0]} rows")
        if not self.row_of:
            self.row_of = {nid: i for i, nid in enumerate(self.ids)}
        if len(self.row_of) != len(self.ids):
            raise DataError("duplicate node ids in feature table")

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


def write_features(path: str | Path, table: FeatureTable,
                   sidecar_path: str | Path | None = None,
                   config: dict | None = None) -> None:
    """NFV1: magic "NFV1", u32-LE row count, u32-LE dim, then row-major
    float32-LE payload; a JSONL sidecar lists node ids in row order."""
    path = Path(path)
    n, dim = table.data.shape
    payload = np.ascontiguousarray(table.data, dtype="<f4").tobytes()
    with atomic_write(path, binary=True) as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<II", n, dim))
        fh.write(payload)
    sidecar = Path(sidecar_path) if sidecar_path else default_sidecar_path(path)
    write_jsonl(sidecar, ({"row": i, "id": nid} for i, nid in enumerate(table.ids)),
                header=make_header(FEATURE_IDS_FORMAT, config))


def default_sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids.jsonl")


def read_features(path: str | Path, sidecar_path: str | Path | None = None) -> FeatureTable:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != FEATURES_MAGIC:
        raise DataError(f"{path}: not an NFV1 feature file")
    n, dim = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * n * dim
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes for {n}x{dim}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, dim).astype(np.float64)
    sidecar = Path(sidecar_path) if sidecar_path else default_sidecar_path(path)
    _, rows = read_jsonl(sidecar, expect_format=FEATURE_IDS_FORMAT)
    if len(rows) != n:
        raise DataError(f"{sidecar}: {len(rows)} ids for {n} rows")
    ids = [""] * n
    for row in rows:
        try:
            ids[int(row["row"])] = str(row["id"])
        except (KeyError, ValueError, IndexError) as exc:
            raise DataError(f"{sidecar}: bad id row: {exc}") from exc
    return FeatureTable(ids=ids, data=data)


# ---------------------------------------------------------------------------
# featured graphs

class FeatureCoverageError(DataError):
    pass


class FeatureDimError(DataError):
    pass


@dataclass
class FeaturedGraph:
    """A StaticGraph plus its node-feature matrix and cached index arrays."""

    graph: StaticGraph
    features: np.ndarray  # (N, dim) float64
    edge_src: np.ndarray = field(init=False, repr=False)
    edge_dst: np.ndarray = field(init=False, repr=False)
    _cache: dict = field(default_factory=dict, repr=False, init=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape[0] != self.graph.n_nodes:
            raise FeatureCoverageError(
                f"graph {self.graph.graph_id}: {self.features.shape[0]} feature rows "
                f"for {self.graph.n_nodes} nodes")
        self.edge_src = np.array([e.src for e in self.graph.edges], dtype=np.int64)
        self.edge_dst = np.array([e.dst for e in self.graph.edges], dtype=np.int64)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def label(self) -> int | None:
        return self.graph.label

    def oriented_edges(self, undirected: bool) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) arrays; undirected mode appends the mirrored edges."""
        if not undirected:
            return self.edge_src, self.edge_dst
        src = np.concatenate([self.edge_src, self.edge_dst])
        dst = np.concatenate([self.edge_dst, self.edge_src])
        return src, dst

    def mean_adjacency(self, undirected: bool = False) -> np.ndarray:
        """Row v averages v's in-neighbors (its responders); zero row if none."""
        key = ("mean_adj", undirected)
        if key not in self._cache:
            n = self.graph.n_nodes
            a = np.zeros((n, n))
            src, dst = self.oriented_edges(undirected)
            np.add.at(a, (dst, src), 1.0)
            deg = a.sum(axis=1, keepdims=True)
            np.divide(a, deg, out=a, where=deg > 0)
            self._cache[key] = a
        return self._cache[key]

    def incidence(self, undirected: bool = False) -> np.ndarray:
        """(N, E') matrix with 1 where edge e points into node v."""
        key = ("incidence", undirected)
        if key not in self._cache:
            src, dst = self.oriented_edges(undirected)
            s = np.zeros((self.graph.n_nodes, len(dst)))
            s[dst, np.arange(len(dst))] = 1.0
            self._cache[key] = s
        return self._cache[key]


def attach_features(g: StaticGraph, table: FeatureTable,
                    expected_dim: int | None = None) -> FeaturedGraph:
    """Bind feature rows to graph nodes by node id.

    Every node must have a row; the table dim must match expected_dim when
    given.
    """
    if expected_dim is not None and table.dim != expected_dim:
        raise FeatureDimError(f"feature dim {table.dim} != expected {expected_dim}")
    missing = [n.tweet_id for n in g.nodes if n.tweet_id not in table.row_of]
    if missing:
        raise FeatureCoverageError(
            f"graph {g.graph_id}: no features for nodes {missing[:5]}"
            + ("..." if len(missing) > 5 else ""))
    rows = np.array([table.row_of[n.tweet_id] for n in g.nodes], dtype=np.int64)
    return FeaturedGraph(graph=g, features=table.data[rows])
