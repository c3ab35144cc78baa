"""Similarity-based alignment and evaluation: cosine matrices, CSLS
hubness correction, greedy nearest-neighbour matching, Hit@k / MRR."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import l2_normalize_rows


class EvalInputError(ValueError):
    """Gold links reference entities outside the similarity matrix."""


def cosine_matrix(emb1: np.ndarray, emb2: np.ndarray) -> np.ndarray:
    """Dense pairwise cosine; zero rows behave as cosine 0."""
    m = l2_normalize_rows(emb1) @ l2_normalize_rows(emb2).T
    return np.clip(m, -1.0, 1.0)


def csls_adjust(cos_matrix: np.ndarray, k: int) -> np.ndarray:
    """Cross-domain similarity local scaling.

    adjusted(x, y) = 2 cos(x, y) - r_T(x) - r_S(y) where r_T(x) is the mean
    cosine of x to its k nearest targets and r_S(y) the mean cosine of y to
    its k nearest sources.
    """
    n1, n2 = cos_matrix.shape
    if not 1 <= k <= min(n1, n2):
        raise ValueError(f"csls k must lie in [1, {min(n1, n2)}], got {k}")
    r_t = np.partition(cos_matrix, n2 - k, axis=1)[:, n2 - k:].mean(axis=1)
    r_s = np.partition(cos_matrix, n1 - k, axis=0)[n1 - k:, :].mean(axis=0)
    return 2.0 * cos_matrix - r_t[:, None] - r_s[None, :]


def align(matrix: np.ndarray) -> list[tuple[int, int, float]]:
    """Greedy per-row argmax (ties to the smallest column); many-to-one allowed."""
    best = matrix.argmax(axis=1)
    return [(i, int(j), float(matrix[i, j])) for i, j in enumerate(best)]


@dataclass
class EvalReport:
    hit_at: dict[int, float]
    mrr: float
    n_eval: int

    def to_dict(self) -> dict:
        return {
            "hit": {str(k): v for k, v in sorted(self.hit_at.items())},
            "mrr": self.mrr,
            "n": self.n_eval,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(
    matrix: np.ndarray,
    gold_links: list[tuple[int, int]],
    ks: tuple[int, ...] = (1, 5, 10),
) -> EvalReport:
    """Rank-based metrics over gold source rows.

    The rank of the true counterpart is 1 plus the number of strictly
    greater entries in its row (ties rank below, the optimistic convention).
    """
    n1, n2 = matrix.shape
    bad = [(e1, e2) for e1, e2 in gold_links if not (0 <= e1 < n1 and 0 <= e2 < n2)]
    if bad:
        raise EvalInputError(f"gold links outside matrix bounds: {bad}")
    if not gold_links:
        raise EvalInputError("no gold links to evaluate")
    ranks = np.array(
        [1 + int((matrix[e1] > matrix[e1, e2]).sum()) for e1, e2 in gold_links]
    )
    hit_at = {k: float((ranks <= k).mean()) for k in ks}
    return EvalReport(hit_at=hit_at, mrr=float((1.0 / ranks).mean()), n_eval=len(gold_links))


def mapping_accuracy(
    mappings: list[tuple[int, int, float]], gold_links: list[tuple[int, int]]
) -> float:
    """Hit@1 of an emitted one-to-one mapping: gold sources without an
    emitted counterpart count as misses."""
    if not gold_links:
        raise EvalInputError("no gold links to evaluate")
    emitted = {e1: e2 for e1, e2, _ in mappings}
    correct = sum(1 for e1, e2 in gold_links if emitted.get(e1) == e2)
    return correct / len(gold_links)
