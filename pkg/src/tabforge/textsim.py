"""ROUGE-L similarity and threshold clustering over answer strings.

Similarity is the F-measure over the longest common subsequence of
normalized tokens. Clustering links any two answers whose similarity
reaches a threshold and picks the best-connected member of each cluster
as its centroid, which is what majority voting over sampled answers
runs on.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Sequence

TokenSeq = tuple[str, ...]

DEFAULT_CLUSTER_TAU = 0.9


class EmptyAnswerSet(ValueError):
    pass


def tokenize(text: str) -> TokenSeq:
    """Lowercase, split on whitespace, strip punctuation off token edges."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(string.punctuation)
        if tok:
            out.append(tok)
    return tuple(out)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # One rolling DP row kept over the shorter sequence.
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str | Sequence[str], reference: str | Sequence[str]) -> float:
    """LCS F-measure with precision and recall weighted equally.

    Accepts raw strings (tokenized here) or pre-tokenized sequences.
    Zero when either side is empty or nothing is shared.
    """
    if isinstance(candidate, str):
        candidate = tokenize(candidate)
    if isinstance(reference, str):
        reference = tokenize(reference)
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class SimilarityMatrix:
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "values", tuple(tuple(row) for row in self.values)
        )
        n = len(self.values)
        for i, row in enumerate(self.values):
            if len(row) != n:
                raise ValueError("similarity matrix must be square")
            for j, v in enumerate(row):
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"similarity [{i}][{j}]={v} outside [0, 1]")
                if j < i and abs(v - self.values[j][i]) > 1e-12:
                    raise ValueError("similarity matrix must be symmetric")

    @property
    def n(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> tuple[float, ...]:
        return self.values[i]


@dataclass(frozen=True)
class Cluster:
    member_indices: tuple[int, ...]  # sorted, no duplicates
    centroid_index: int

    def __post_init__(self) -> None:
        if self.centroid_index not in self.member_indices:
            raise ValueError(
                f"centroid {self.centroid_index} is not a member of {self.member_indices}"
            )

    @property
    def size(self) -> int:
        return len(self.member_indices)


def similarity_matrix(answers: Sequence[str]) -> SimilarityMatrix:
    """Pairwise symmetric ROUGE-L over tokenized answers.

    The diagonal is 1 for any answer with at least one token. Identical
    token sequences short-circuit to 1 without running the DP.
    """
    if not answers:
        raise EmptyAnswerSet("need at least one answer")
    toks = [tokenize(a) for a in answers]
    n = len(answers)
    values = [[0.0] * n for _ in range(n)]
    for i in range(n):
        values[i][i] = 1.0 if toks[i] else 0.0
        for j in range(i + 1, n):
            if toks[i] == toks[j]:
                s = 1.0 if toks[i] else 0.0
            else:
                s = rouge_l(toks[i], toks[j])
            values[i][j] = s
            values[j][i] = s
    return SimilarityMatrix(values=tuple(tuple(row) for row in values))


def cluster_by_threshold(m: SimilarityMatrix, tau: float = DEFAULT_CLUSTER_TAU) -> list[Cluster]:
    """Single-link clusters: connected components of the sim >= tau graph.

    Each cluster's centroid is the member with the largest summed
    similarity to its co-members, ties resolved toward the smallest
    index. Clusters come back sorted by size descending, then by their
    smallest member index.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    n = m.n
    unseen = set(range(n))
    components: list[list[int]] = []
    while unseen:
        start = min(unseen)
        unseen.discard(start)
        comp = [start]
        frontier = [start]
        while frontier:
            i = frontier.pop()
            for j in list(unseen):
                if m[i][j] >= tau:
                    unseen.discard(j)
                    comp.append(j)
                    frontier.append(j)
        components.append(sorted(comp))

    clusters = []
    for comp in components:
        best_i = comp[0]
        best_score = -1.0
        for i in comp:
            score = sum(m[i][j] for j in comp if j != i)
            if score > best_score:
                best_i, best_score = i, score
        clusters.append(Cluster(member_indices=tuple(comp), centroid_index=best_i))
    clusters.sort(key=lambda c: (-c.size, c.member_indices[0]))
    return clusters


def majority_reference(answers: Sequence[str], tau: float = DEFAULT_CLUSTER_TAU) -> tuple[str, int, float]:
    """Centroid of the largest cluster: (reference text, support, share)."""
    m = similarity_matrix(answers)
    clusters = cluster_by_threshold(m, tau)
    top = clusters[0]
    return answers[top.centroid_index], top.size, top.size / len(answers)
