"""Dataset-to-node assignment under three heterogeneity regimes."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import PURPOSE_PARTITION, RngStream
from .problems import LinSepDataset

REGIME_EVEN = "even"
REGIME_PATHOLOGICAL = "pathological"
REGIME_WORST_CASE = "worst_case"


@dataclass(frozen=True)
class PartitionAssignment:
    shards: tuple[np.ndarray, ...]
    regime: str

    @property
    def n(self) -> int:
        return len(self.shards)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.shards]

    def validate(self, N: int) -> None:
        # shards must be disjoint and cover {0..N-1}
        merged = np.sort(np.concatenate([np.asarray(s, dtype=np.int64) for s in self.shards]))
        if merged.size != N or not np.array_equal(merged, np.arange(N)):
            raise ValueError("shards do not disjointly cover the dataset")


def partition_even(N: int, n: int, rng: RngStream) -> PartitionAssignment:
    """Random permutation dealt round-robin; shard sizes differ by at most 1."""
    if N < 1 or n < 1:
        raise ValueError("need N >= 1 and n >= 1")
    perm = rng.generator(0, 0, PURPOSE_PARTITION).permutation(N)
    shards = tuple(np.sort(perm[i::n]) for i in range(n))
    return PartitionAssignment(shards=shards, regime=REGIME_EVEN)


def partition_pathological(dataset: LinSepDataset, n: int) -> PartitionAssignment:
    """Cut the projection-onto-normal range into n equal-width slabs.

    Shard i gets the points in slab i, so all but (at most) the slab
    containing the labeling hyperplane are single-label. Empty slabs are
    kept: the induced heterogeneity is the point of this regime.
    """
    if n < 2:
        raise ValueError("pathological partition needs n >= 2")
    proj = dataset.points @ dataset.generator_normal
    lo, hi = float(np.min(proj)), float(np.max(proj))
    width = (hi - lo) / n
    if width <= 0:
        idx = np.zeros(dataset.N, dtype=np.int64)  # degenerate: constant projections
    else:
        idx = np.clip(((proj - lo) / width).astype(np.int64), 0, n - 1)
    shards = tuple(np.flatnonzero(idx == i) for i in range(n))
    return PartitionAssignment(shards=shards, regime=REGIME_PATHOLOGICAL)


def partition_worst_case(N: int, n: int) -> PartitionAssignment:
    """All points on node 0; the other n-1 shards are empty."""
    if N < 1 or n < 1:
        raise ValueError("need N >= 1 and n >= 1")
    shards = (np.arange(N, dtype=np.int64),) + tuple(
        np.empty(0, dtype=np.int64) for _ in range(n - 1)
    )
    return PartitionAssignment(shards=shards, regime=REGIME_WORST_CASE)


def save_partition_csv(assignment: PartitionAssignment, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "node_index"])
        for node, shard in enumerate(assignment.shards):
            for s in shard:
                writer.writerow([int(s), node])


def load_partition_csv(path: str, regime: str = REGIME_EVEN) -> PartitionAssignment:
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for sample, node in reader:
            pairs.append((int(sample), int(node)))
    n = max(node for _, node in pairs) + 1 if pairs else 0
    shards = [[] for _ in range(n)]
    for sample, node in pairs:
        shards[node].append(sample)
    return PartitionAssignment(
        shards=tuple(np.array(sorted(s), dtype=np.int64) for s in shards),
        regime=regime,
    )
