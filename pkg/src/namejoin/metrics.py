"""Neighborhood-based retrieval metrics shared by space characterization and evaluation.

One accumulation path serves both the raw-input-space baseline statistics and the
trained-model evaluation, so the two always agree on the definition of recall:

    recall          = sum_f |top-k(f) ^ P(f)|  /  sum_f min(|P(f)|, k)
    precision_at_1  = fraction of anchors whose rank-1 neighbor is in P(f)
    precision_all   = mean over anchors of
                      |positives ranked before the first non-positive| / min(|P(f)|, k)

Anchors with no positives are skipped entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass
class NeighborhoodTally:
    k: int
    recall_hits: int = 0
    recall_denominator: int = 0
    rank1_hits: int = 0
    precision_sum: float = 0.0
    anchors: int = 0

    def add(self, neighbor_ids: Sequence[int], positives: Iterable[int]) -> None:
        """Fold in one anchor's ranked neighbor ids against its positive set."""
        positive_set = set(positives)
        if not positive_set:
            return
        self.anchors += 1
        cap = min(len(positive_set), self.k)
        self.recall_denominator += cap
        hits = sum(1 for nid in neighbor_ids if nid in positive_set)
        self.recall_hits += hits
        if neighbor_ids and neighbor_ids[0] in positive_set:
            self.rank1_hits += 1
        prefix = 0
        for nid in neighbor_ids:
            if nid in positive_set:
                prefix += 1
            else:
                break
        self.precision_sum += prefix / cap

    @property
    def recall(self) -> float:
        return self.recall_hits / self.recall_denominator if self.recall_denominator else 0.0

    @property
    def precision_at_1(self) -> float:
        return self.rank1_hits / self.anchors if self.anchors else 0.0

    @property
    def precision_all(self) -> float:
        return self.precision_sum / self.anchors if self.anchors else 0.0
