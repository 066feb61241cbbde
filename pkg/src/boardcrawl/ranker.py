"""PageRank over the sealed page graph and its projection onto attachments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from .model import AttachmentId, GraphError, LinkGraph, PageId


@dataclass(frozen=True)
class RankConfig:
    d: float = 0.85
    epsilon: float = 1e-8
    max_iterations: int = 200

    def __post_init__(self) -> None:
        if not 0.0 < self.d < 1.0:
            raise ValueError(f"damping factor must be in (0, 1), got {self.d}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")

    def as_dict(self) -> dict:
        return {"d": self.d, "epsilon": self.epsilon, "max_iterations": self.max_iterations}


@dataclass(frozen=True)
class RankVector:
    values: Dict[PageId, float]
    iterations_used: int = 0
    final_residual: float = 0.0
    converged: bool = True
    config: RankConfig = field(default_factory=RankConfig)

    def __getitem__(self, page: PageId) -> float:
        return self.values[page]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class AttachRankEntry:
    ar: float
    containing_pages: Tuple[PageId, ...]


AttachRankTable = Dict[AttachmentId, AttachRankEntry]


def compute_pagerank(graph: LinkGraph, config: RankConfig = RankConfig()) -> RankVector:
    """Iterate PR(A) = (1 - d) + d * sum(PR(T) / C(T)) over in-links T -> A.

    Synchronous (Jacobi) sweeps starting from PR = 1 everywhere. Pages with
    no outlinks contribute nothing. Nodes and edges are put in sorted order
    first so the floating point result does not depend on how the graph was
    enumerated.
    """
    nodes = sorted(graph.nodes)
    n = len(nodes)
    if n == 0:
        return RankVector({}, 0, 0.0, True, config)
    index = {page: i for i, page in enumerate(nodes)}

    pairs = []
    for page in nodes:
        targets = graph.edges.get(page, ())
        for t in targets:
            if t not in index:
                raise GraphError(f"edge {page} -> {t} leaves the node set; seal the graph first")
            pairs.append((index[t], index[page]))
    pairs.sort()
    dst = np.fromiter((p[0] for p in pairs), dtype=np.intp, count=len(pairs))
    src = np.fromiter((p[1] for p in pairs), dtype=np.intp, count=len(pairs))
    out_degree = np.bincount(src, minlength=n).astype(float)
    weight = np.zeros(len(pairs))
    if len(pairs):
        weight = 1.0 / out_degree[src]

    d = config.d
    x = np.ones(n)
    residual = float("inf")
    iterations = 0
    while iterations < config.max_iterations:
        inflow = np.bincount(dst, weights=x[src] * weight, minlength=n)
        x_next = (1.0 - d) + d * inflow
        residual = float(np.abs(x_next - x).sum())
        x = x_next
        iterations += 1
        if residual < config.epsilon:
            break
    converged = residual < config.epsilon
    values = {page: float(x[i]) for i, page in enumerate(nodes)}
    return RankVector(values, iterations, residual, converged, config)


def compute_attachrank(graph: LinkGraph, ranks: RankVector) -> AttachRankTable:
    """Give each attachment the rank of its containing page.

    An attachment linked from several pages takes the largest of their ranks.
    """
    containers: Dict[AttachmentId, list] = {}
    for page, attachments in graph.containment.items():
        if page not in ranks.values:
            raise GraphError(f"containment from unranked page {page}")
        for att in attachments:
            containers.setdefault(att, []).append(page)
    table: AttachRankTable = {}
    for att in sorted(containers):
        pages = tuple(sorted(set(containers[att])))
        table[att] = AttachRankEntry(max(ranks.values[p] for p in pages), pages)
    return table


def normalize_ranks(ranks: RankVector | Mapping[PageId, float]) -> Dict[PageId, float]:
    """Scale rank values into a probability distribution."""
    values = ranks.values if isinstance(ranks, RankVector) else ranks
    if not values:
        raise ValueError("cannot normalize an empty rank vector")
    total = sum(values[p] for p in sorted(values))
    if total <= 0.0:
        raise GraphError("rank vector has zero total mass")
    return {p: v / total for p, v in values.items()}
