"""Synthetic motif benchmark generator with controllable spurious correlation.

Each graph is a label-defining motif (house / cycle / crane) attached by a
single random connector edge to a base graph (tree / ladder / wheel).  The
training split pairs motif y with base y with probability ``bias`` (the two
other bases get (1-bias)/2 each); attribute modes additionally correlate node
features with the label, either directly (mixed_fiif) or through a noisy
flipped label (mixed_piif).  Validation and test splits are always drawn at
bias 1/3 with uninformative features; label flips are likewise train-only.

Randomness comes from numpy's Philox4x64 counter-based bit generator.  Every
consumer owns a substream keyed as key = (seed, purpose << 56 | a << 28 | b),
so regenerating any single graph or epoch is independent of all others.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError
from .graphdata import DatasetSplits, Graph, GraphMeta

MOTIF_KINDS = ("house", "cycle", "crane")
BASE_KINDS = ("tree", "ladder", "wheel")
SHIFT_MODES = ("struc", "mixed_fiif", "mixed_piif")

_MASK64 = (1 << 64) - 1

# Substream purpose codes (documented contract for reproducibility).
STREAM_GRAPH = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_PARTITION = 4


def substream(seed: int, purpose: int, a: int = 0, b: int = 0) -> np.random.Generator:
    """Philox substream for (seed, purpose, a, b); independent per tuple."""
    stream = ((purpose & 0xFF) << 56) | ((a & 0xFFFFFFF) << 28) | (b & 0xFFFFFFF)
    key = np.array([seed & _MASK64, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class GenConfig:
    bias: float
    train_per_class: int
    val_per_class: int
    test_per_class: int
    shift_mode: str = "struc"
    piif_flip_prob: float = 0.05
    base_size_range: tuple[int, int] = (8, 20)
    eval_base_size_range: tuple[int, int] | None = None
    feature_dim: int = 4
    seed: int = 0
    num_classes: int = 3

    def __post_init__(self):
        if self.num_classes != 3:
            raise ConfigError("generator is fixed at 3 classes")
        if not (1.0 / 3.0 - 1e-12 <= self.bias <= 1.0):
            raise ConfigError(f"bias must lie in [1/3, 1], got {self.bias}")
        for name in ("train_per_class", "val_per_class", "test_per_class"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 <= self.piif_flip_prob < 0.5):
            raise ConfigError("piif_flip_prob must lie in [0, 0.5)")
        if self.shift_mode not in SHIFT_MODES:
            raise ConfigError(f"shift_mode must be one of {SHIFT_MODES}")
        for rng_name in ("base_size_range", "eval_base_size_range"):
            r = getattr(self, rng_name)
            if r is None:
                continue
            object.__setattr__(self, rng_name, (int(r[0]), int(r[1])))
            lo, hi = getattr(self, rng_name)
            if lo < 4 or hi < lo:
                raise ConfigError(f"{rng_name} must satisfy 4 <= lo <= hi")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be positive")
        if self.shift_mode != "struc" and self.feature_dim < self.num_classes:
            raise ConfigError("attribute modes need feature_dim >= num_classes")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        for key in ("base_size_range", "eval_base_size_range"):
            if d.get(key) is not None:
                d[key] = tuple(int(x) for x in d[key])
        return cls(**d)


class Fragment(NamedTuple):
    """A motif or base building block before attachment."""

    kind: int
    num_nodes: int
    edges: tuple[tuple[int, int], ...]


def _kind_index(kind, names) -> int:
    if isinstance(kind, str):
        if kind not in names:
            raise DomainError(f"unknown kind {kind!r}, expected one of {names}")
        return names.index(kind)
    idx = int(kind)
    if not 0 <= idx < len(names):
        raise DomainError(f"kind index {idx} out of range for {names}")
    return idx


def gen_motif(kind) -> Fragment:
    """Fixed motif topologies; every edge is ground-truth invariant.

    house: 4-cycle with an apex joined to two adjacent cycle nodes (5n/6e).
    cycle: C5 (5n/5e).
    crane: 4-cycle body, 3-node boom path off the body, pendant hook at the
    boom tip (8n/8e).
    """
    idx = _kind_index(kind, MOTIF_KINDS)
    if idx == 0:  # house
        edges = ((0, 1), (1, 2), (2, 3), (0, 3), (2, 4), (3, 4))
        return Fragment(idx, 5, edges)
    if idx == 1:  # cycle
        edges = ((0, 1), (1, 2), (2, 3), (3, 4), (0, 4))
        return Fragment(idx, 5, edges)
    # crane
    edges = ((0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (4, 5), (5, 6), (6, 7))
    return Fragment(idx, 8, edges)


def gen_base(kind, size_param: int) -> Fragment:
    """Connected base graph of roughly ``size_param`` nodes.

    tree: balanced binary tree truncated to n nodes (heap layout, node i
    hangs off (i-1)//2); ladder: two rails of length L = n//2 plus rungs;
    wheel: hub plus an (n-1)-cycle with spokes.
    """
    idx = _kind_index(kind, BASE_KINDS)
    n = int(size_param)
    if idx == 0:  # tree
        if n < 2:
            raise DomainError("tree base needs at least 2 nodes")
        edges = tuple((int((i - 1) // 2), i) for i in range(1, n))
        return Fragment(idx, n, edges)
    if idx == 1:  # ladder
        if n < 4:
            raise DomainError("ladder base needs at least 4 nodes")
        rail = n // 2
        edges = []
        for i in range(rail - 1):
            edges.append((i, i + 1))
            edges.append((rail + i, rail + i + 1))
        for i in range(rail):
            edges.append((i, rail + i))
        return Fragment(idx, 2 * rail, tuple(sorted(edges)))
    # wheel
    if n < 4:
        raise DomainError("wheel base needs at least 4 nodes")
    edges = [(0, i) for i in range(1, n)]  # spokes from the hub
    for i in range(1, n - 1):
        edges.append((i, i + 1))
    edges.append((1, n - 1))
    return Fragment(idx, n, tuple(sorted(edges)))


def sample_pair(y: int, bias: float, rng: np.random.Generator) -> tuple[int, int]:
    """Motif kind equals the class; base kind is the paired one w.p. bias."""
    if not (1.0 / 3.0 - 1e-12 <= bias <= 1.0):
        raise DomainError(f"bias must lie in [1/3, 1], got {bias}")
    others = [k for k in range(len(BASE_KINDS)) if k != y]
    u = rng.random()
    if u < bias:
        base = y
    else:
        base = others[0] if u < bias + (1.0 - bias) / 2.0 else others[1]
    return y, base


def attach(base: Fragment, motif: Fragment, rng: np.random.Generator,
           feature_dim: int = 1) -> Graph:
    """Join base and motif with one uniformly random connector edge.

    Nodes: base first, then motif.  Edge order: base edges, motif edges,
    connector; ground-truth invariant edges are exactly the motif block.
    Features are a zero placeholder until an attribute shift is applied.
    """
    if base.num_nodes == 0 or motif.num_nodes == 0:
        raise DomainError("cannot attach empty fragments")
    nb = base.num_nodes
    edges = list(base.edges)
    edges += [(u + nb, v + nb) for u, v in motif.edges]
    anchor_base = int(rng.integers(nb))
    anchor_motif = nb + int(rng.integers(motif.num_nodes))
    edges.append((anchor_base, anchor_motif))
    gt = tuple(range(len(base.edges), len(base.edges) + len(motif.edges)))
    n = nb + motif.num_nodes
    meta = GraphMeta(
        motif_id=motif.kind, base_id=base.kind, attr_id=-1,
        gt_invariant_edges=gt, flipped=False,
    )
    return Graph(n, tuple(edges), np.zeros((n, feature_dim)), motif.kind, meta)


def _draw_class(label: int, bias: float, num_classes: int,
                rng: np.random.Generator) -> int:
    others = [k for k in range(num_classes) if k != label]
    u = rng.random()
    if u < bias:
        return label
    return others[0] if u < bias + (1.0 - bias) / 2.0 else others[1]


def apply_attr_shift(g: Graph, y: int, mode: str, bias: float,
                     rng: np.random.Generator,
                     flip_prob: float = 0.05) -> Graph:
    """Fill node features (and in PIIF mode possibly flip the label).

    struc: i.i.d. standard-normal features.  mixed_fiif: every node feature
    is one-hot of a class drawn at probability ``bias`` for the true label.
    mixed_piif: the label first flips to a uniform other class w.p.
    ``flip_prob``, then features correlate with the (possibly flipped) label
    exactly as in mixed_fiif.  With flip_prob = 0 the PIIF path consumes the
    same random draws as FIIF and is bitwise identical to it.
    """
    if mode not in SHIFT_MODES:
        raise DomainError(f"unknown shift mode {mode!r}")
    n, d = g.num_nodes, g.feature_dim
    meta = g.meta or GraphMeta(-1, -1, -1, ())
    if mode == "struc":
        feats = rng.standard_normal((n, d))
        new_meta = GraphMeta(meta.motif_id, meta.base_id, -1,
                             meta.gt_invariant_edges, False)
        return Graph(n, g.edges, feats, y, new_meta)
    num_classes = 3
    if d < num_classes:
        raise DomainError("attribute modes need feature_dim >= 3")
    label = int(y)
    flipped = False
    if mode == "mixed_piif" and flip_prob > 0.0:
        if rng.random() < flip_prob:
            flipped = True
            label = int((label + 1 + rng.integers(num_classes - 1)) % num_classes)
    attr = _draw_class(label, bias, num_classes, rng)
    feats = np.zeros((n, d))
    feats[:, attr] = 1.0
    new_meta = GraphMeta(meta.motif_id, meta.base_id, attr,
                         meta.gt_invariant_edges, flipped)
    return Graph(n, g.edges, feats, label, new_meta)


def _gen_one(cfg: GenConfig, split_code: int, index: int, y: int,
             bias: float, flip_prob: float,
             size_range: tuple[int, int]) -> Graph:
    rng = substream(cfg.seed, STREAM_GRAPH, split_code, index)
    size = int(rng.integers(size_range[0], size_range[1] + 1))
    _, base_kind = sample_pair(y, bias, rng)
    base = gen_base(base_kind, size)
    motif = gen_motif(y)
    g = attach(base, motif, rng, feature_dim=cfg.feature_dim)
    return apply_attr_shift(g, y, cfg.shift_mode, bias, rng, flip_prob)


def gen_dataset(cfg: GenConfig) -> DatasetSplits:
    """Generate train/val/test; the spurious machinery biases only train."""
    unbiased = 1.0 / 3.0
    eval_range = cfg.eval_base_size_range or cfg.base_size_range
    plans = [
        # (split_code, per-class count, bias, flip_prob, size range)
        (0, cfg.train_per_class, cfg.bias, cfg.piif_flip_prob, cfg.base_size_range),
        (1, cfg.val_per_class, unbiased, 0.0, eval_range),
        (2, cfg.test_per_class, unbiased, 0.0, eval_range),
    ]
    splits = []
    for split_code, per_class, bias, flip, size_range in plans:
        graphs = []
        for y in range(cfg.num_classes):
            for j in range(per_class):
                index = y * per_class + j
                graphs.append(
                    _gen_one(cfg, split_code, index, y, bias, flip, size_range)
                )
        splits.append(graphs)
    return DatasetSplits(train=splits[0], val=splits[1], test=splits[2],
                         gen_config=cfg)
