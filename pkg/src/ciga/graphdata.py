"""Graph and dataset containers, GCN normalization, batching, persistence.

Graphs store each undirected edge once with u < v; self loops only appear
implicitly during adjacency normalization.  Datasets persist as UTF-8 JSONL:
a header line followed by one graph record per line, ordered train/val/test.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError, ShapeError, VersionError

DATASET_FORMAT = "ciga-ds"
DATASET_VERSION = 1


@dataclass(frozen=True)
class GraphMeta:
    """Generation provenance: latent proxies and the ground-truth edge set."""

    motif_id: int
    base_id: int
    attr_id: int
    gt_invariant_edges: tuple[int, ...]
    flipped: bool = False


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray
    label: int
    meta: GraphMeta | None = None

    def __post_init__(self):
        if self.num_nodes < 1:
            raise DomainError("graph needs at least one node")
        seen = set()
        for u, v in self.edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise DomainError(f"edge ({u},{v}) endpoint out of range")
            if u == v:
                raise DomainError(f"self loop ({u},{v}) in stored edge list")
            if u > v:
                raise DomainError(f"edge ({u},{v}) must be stored with u < v")
            if (u, v) in seen:
                raise DomainError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise ShapeError(
                f"features must be ({self.num_nodes}, d), got {feats.shape}"
            )
        if not np.all(np.isfinite(feats)):
            raise DomainError("graph features contain NaN or Inf")
        object.__setattr__(self, "features", feats)
        if self.meta is not None:
            m = len(self.edges)
            if any(not (0 <= e < m) for e in self.meta.gt_invariant_edges):
                raise DomainError("gt_invariant_edges references a missing edge")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_array(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2), dtype=np.intp)
        return np.asarray(self.edges, dtype=np.intp)

    def permuted(self, perm) -> "Graph":
        """Relabel nodes by ``perm`` (node i becomes perm[i]); edge order kept."""
        perm = np.asarray(perm, dtype=np.intp)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.num_nodes)
        edges = tuple(
            (min(int(perm[u]), int(perm[v])), max(int(perm[u]), int(perm[v])))
            for u, v in self.edges
        )
        return Graph(self.num_nodes, edges, self.features[inv], self.label, self.meta)


def normalize_adjacency(g: Graph) -> np.ndarray:
    """Symmetric GCN normalization with self loops: D^-1/2 (A + I) D^-1/2."""
    n = g.num_nodes
    a = np.eye(n)
    for u, v in g.edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a * np.outer(inv_sqrt, inv_sqrt)


@dataclass(eq=False)
class Batch:
    """Block-diagonal merge of graphs; node/edge ids offset per member."""

    num_nodes: int
    num_graphs: int
    edges: np.ndarray          # (m, 2) global node ids, u < v within a graph
    features: np.ndarray       # (num_nodes, d)
    graph_index: np.ndarray    # (num_nodes,) node -> member graph
    labels: np.ndarray         # (num_graphs,)
    node_offsets: np.ndarray   # (num_graphs + 1,)
    edge_offsets: np.ndarray   # (num_graphs + 1,)
    metas: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def node_range(self, i: int) -> tuple[int, int]:
        return int(self.node_offsets[i]), int(self.node_offsets[i + 1])

    def edge_range(self, i: int) -> tuple[int, int]:
        return int(self.edge_offsets[i]), int(self.edge_offsets[i + 1])


def batch(graphs) -> Batch:
    graphs = list(graphs)
    if not graphs:
        raise DomainError("cannot batch an empty graph list")
    d = graphs[0].feature_dim
    for g in graphs:
        if g.feature_dim != d:
            raise ShapeError(
                f"feature dimension mismatch: {g.feature_dim} vs {d}"
            )
    node_offsets = np.zeros(len(graphs) + 1, dtype=np.intp)
    edge_offsets = np.zeros(len(graphs) + 1, dtype=np.intp)
    for i, g in enumerate(graphs):
        node_offsets[i + 1] = node_offsets[i] + g.num_nodes
        edge_offsets[i + 1] = edge_offsets[i] + g.num_edges
    edges = np.zeros((int(edge_offsets[-1]), 2), dtype=np.intp)
    graph_index = np.zeros(int(node_offsets[-1]), dtype=np.intp)
    features = np.zeros((int(node_offsets[-1]), d))
    for i, g in enumerate(graphs):
        n0, n1 = node_offsets[i], node_offsets[i + 1]
        e0, e1 = edge_offsets[i], edge_offsets[i + 1]
        graph_index[n0:n1] = i
        features[n0:n1] = g.features
        if g.num_edges:
            edges[e0:e1] = g.edge_array() + n0
    return Batch(
        num_nodes=int(node_offsets[-1]),
        num_graphs=len(graphs),
        edges=edges,
        features=features,
        graph_index=graph_index,
        labels=np.asarray([g.label for g in graphs], dtype=np.intp),
        node_offsets=node_offsets,
        edge_offsets=edge_offsets,
        metas=tuple(g.meta for g in graphs),
    )


def unbatch(b: Batch) -> list[Graph]:
    """Reconstruct the member graphs from the merged arrays."""
    out = []
    for i in range(b.num_graphs):
        n0, n1 = b.node_range(i)
        e0, e1 = b.edge_range(i)
        edges = tuple(
            (int(u - n0), int(v - n0)) for u, v in b.edges[e0:e1]
        )
        out.append(
            Graph(
                num_nodes=int(n1 - n0),
                edges=edges,
                features=b.features[n0:n1].copy(),
                label=int(b.labels[i]),
                meta=b.metas[i] if b.metas else None,
            )
        )
    return out


@dataclass(eq=False)
class DatasetSplits:
    train: list
    val: list
    test: list
    gen_config: object = None  # scmgen.GenConfig provenance

    def all_graphs(self):
        return list(self.train) + list(self.val) + list(self.test)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _graph_record(g: Graph) -> dict:
    meta = g.meta or GraphMeta(-1, -1, -1, ())
    return {
        "n": g.num_nodes,
        "edges": [[int(u), int(v)] for u, v in g.edges],
        "x": [[float(x) for x in row] for row in g.features],
        "y": int(g.label),
        "meta": {
            "motif": int(meta.motif_id),
            "base": int(meta.base_id),
            "attr": int(meta.attr_id),
            "gt_edges": [int(e) for e in meta.gt_invariant_edges],
            "flipped": bool(meta.flipped),
        },
    }


def _graph_from_record(rec: dict, line: int) -> Graph:
    try:
        meta = rec["meta"]
        return Graph(
            num_nodes=int(rec["n"]),
            edges=tuple((int(u), int(v)) for u, v in rec["edges"]),
            features=np.asarray(rec["x"], dtype=np.float64).reshape(int(rec["n"]), -1),
            label=int(rec["y"]),
            meta=GraphMeta(
                motif_id=int(meta["motif"]),
                base_id=int(meta["base"]),
                attr_id=int(meta["attr"]),
                gt_invariant_edges=tuple(int(e) for e in meta["gt_edges"]),
                flipped=bool(meta["flipped"]),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad graph record: {exc}", line=line) from exc


def save_dataset(splits: DatasetSplits, path) -> None:
    """Write header + graph records (train, then val, then test)."""
    cfg = splits.gen_config
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "gen_config": dataclasses.asdict(cfg) if cfg is not None else None,
        "counts": {
            "train": len(splits.train),
            "val": len(splits.val),
            "test": len(splits.test),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for g in splits.train + splits.val + splits.test:
            fh.write(json.dumps(_graph_record(g), sort_keys=True) + "\n")


def load_dataset(path) -> DatasetSplits:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty dataset file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header: {exc.msg}", line=1) from exc
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise ParseError("not a dataset file (missing format marker)", line=1)
    if header.get("version") != DATASET_VERSION:
        raise VersionError(
            f"unsupported dataset version {header.get('version')!r}, "
            f"expected {DATASET_VERSION}"
        )
    counts = header.get("counts")
    if not isinstance(counts, dict):
        raise ParseError("header is missing split counts", line=1)
    expected = int(counts["train"]) + int(counts["val"]) + int(counts["test"])
    records = lines[1:]
    if len(records) != expected:
        raise ParseError(
            f"expected {expected} graph records, found {len(records)}",
            line=len(lines),
        )
    graphs = []
    for i, raw in enumerate(records):
        lineno = i + 2
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad record: {exc.msg}", line=lineno) from exc
        graphs.append(_graph_from_record(rec, lineno))
    n_train, n_val = int(counts["train"]), int(counts["val"])
    gen_config = None
    if header.get("gen_config") is not None:
        from .scmgen import GenConfig  # late import to avoid a module cycle

        gen_config = GenConfig.from_dict(header["gen_config"])
    return DatasetSplits(
        train=graphs[:n_train],
        val=graphs[n_train : n_train + n_val],
        test=graphs[n_train + n_val :],
        gen_config=gen_config,
    )
