"""ROUGE-L, similarity matrices, threshold clustering, majority reference."""

import itertools
import random

import pytest

from tabforge.textsim import (
    Cluster,
    EmptyAnswerSet,
    SimilarityMatrix,
    cluster_by_threshold,
    lcs_length,
    majority_reference,
    rouge_l,
    similarity_matrix,
    tokenize,
)


def lcs_by_enumeration(a, b):
    """Oracle: longest common subsequence by enumerating every
    subsequence of the shorter side. Only viable for len <= 8."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    best = 0
    for r in range(len(short), 0, -1):
        for combo in itertools.combinations(short, r):
            it = iter(long_)
            if all(tok in it for tok in combo):
                best = r
                break
        if best:
            break
    return best


def clusters_by_enumeration(values, tau):
    """Oracle: connected components of the thresholded graph by DFS,
    exhaustive medoid search with smallest-index tie-break."""
    n = len(values)
    seen = set()
    comps = []
    for start in range(n):
        if start in seen:
            continue
        stack, comp = [start], set()
        while stack:
            v = stack.pop()
            if v in comp:
                continue
            comp.add(v)
            for u in range(n):
                if u != v and values[v][u] >= tau:
                    stack.append(u)
        seen |= comp
        comps.append(sorted(comp))
    out = []
    for comp in comps:
        best, best_score = comp[0], -1.0
        for i in comp:
            score = sum(values[i][j] for j in comp if j != i)
            if score > best_score:
                best, best_score = i, score
        out.append((tuple(comp), best))
    out.sort(key=lambda c: (-len(c[0]), c[0][0]))
    return out


WORDS = ["police", "kill", "killed", "the", "gunman", "a", "man", "shot"]

# Coarse score grid so random matrices hit exact medoid ties.
SCORES = [0.0, 0.25, 0.5, 0.85, 0.9, 0.95, 1.0]


def random_matrix(rng, n):
    values = [[1.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            values[i][j] = values[j][i] = rng.choice(SCORES)
    return values


class TestTokenize:
    def test_punctuation_stripped(self):
        assert tokenize("Police killed the gunman.") == (
            "police",
            "killed",
            "the",
            "gunman",
        )

    def test_empty(self):
        assert tokenize("") == ()

    def test_whitespace_collapse(self):
        assert tokenize("  A  B ") == ("a", "b")


class TestLcs:
    def test_frozen_example(self):
        a = ("police", "kill", "the", "gunman")
        b = ("police", "killed", "the", "gunman")
        assert lcs_length(a, b) == 3

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_enumeration_oracle(self, seed):
        rng = random.Random(seed)
        for _ in range(100):
            a = tuple(rng.choice(WORDS) for _ in range(rng.randint(0, 8)))
            b = tuple(rng.choice(WORDS) for _ in range(rng.randint(0, 8)))
            assert lcs_length(a, b) == lcs_by_enumeration(a, b)

    def test_symmetry_and_bounds(self):
        rng = random.Random(42)
        for _ in range(100):
            a = tuple(rng.choice(WORDS) for _ in range(rng.randint(0, 8)))
            b = tuple(rng.choice(WORDS) for _ in range(rng.randint(0, 8)))
            l = lcs_length(a, b)
            assert l == lcs_length(b, a)
            assert 0 <= l <= min(len(a), len(b))


class TestRougeL:
    def test_frozen_pair(self):
        # P = R = 3/4 so the balanced F-measure is exactly 0.75
        cand = ("police", "killed", "the", "gunman")
        ref = ("police", "kill", "the", "gunman")
        assert rouge_l(cand, ref) == 0.75

    def test_accepts_raw_strings(self):
        assert rouge_l("Police killed the gunman.", "police kill the gunman") == 0.75

    def test_identical(self):
        assert rouge_l(("a", "b"), ("a", "b")) == 1.0

    def test_empty_sides(self):
        assert rouge_l((), ("a",)) == 0.0
        assert rouge_l(("a",), ()) == 0.0
        assert rouge_l((), ()) == 0.0

    def test_disjoint(self):
        assert rouge_l(("a", "b"), ("c", "d")) == 0.0

    def test_bounds_and_symmetry(self):
        rng = random.Random(9)
        for _ in range(200):
            a = tuple(rng.choice(WORDS) for _ in range(rng.randint(0, 8)))
            b = tuple(rng.choice(WORDS) for _ in range(rng.randint(0, 8)))
            f = rouge_l(a, b)
            assert 0.0 <= f <= 1.0
            assert f == rouge_l(b, a)


class TestSimilarityMatrix:
    def test_single_answer(self):
        m = similarity_matrix(["hello"])
        assert m.values == ((1.0,),)

    def test_identical_answers(self):
        m = similarity_matrix(["same thing", "same thing"])
        assert m.values == ((1.0, 1.0), (1.0, 1.0))

    def test_disjoint_answers(self):
        m = similarity_matrix(["alpha", "beta"])
        assert m[0][1] == 0.0

    def test_empty_set_rejected(self):
        with pytest.raises(EmptyAnswerSet):
            similarity_matrix([])

    def test_empty_answer_gets_zero_diagonal(self):
        m = similarity_matrix(["", "x"])
        assert m[0][0] == 0.0
        assert m[1][1] == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            SimilarityMatrix(values=((1.0, 0.2), (0.3, 1.0)))
        with pytest.raises(ValueError):
            SimilarityMatrix(values=((1.0, 2.0), (2.0, 1.0)))
        with pytest.raises(ValueError):
            SimilarityMatrix(values=((1.0, 0.5),))


class TestClustering:
    def test_all_similar_one_cluster(self):
        m = SimilarityMatrix(values=((1.0, 1.0), (1.0, 1.0)))
        clusters = cluster_by_threshold(m, 0.5)
        assert len(clusters) == 1
        assert clusters[0].member_indices == (0, 1)

    def test_all_dissimilar_singletons(self):
        values = tuple(
            tuple(1.0 if i == j else 0.0 for j in range(4)) for i in range(4)
        )
        clusters = cluster_by_threshold(SimilarityMatrix(values=values), 0.9)
        assert len(clusters) == 4
        assert all(c.size == 1 for c in clusters)

    def test_two_groups(self):
        # {0,1,2} and {3,4} mutually close, nothing across
        n = 5
        values = [[0.0] * n for _ in range(n)]
        for i in range(n):
            values[i][i] = 1.0
        for i, j in [(0, 1), (0, 2), (1, 2), (3, 4)]:
            values[i][j] = values[j][i] = 0.95
        clusters = cluster_by_threshold(
            SimilarityMatrix(values=tuple(map(tuple, values))), 0.9
        )
        assert [c.member_indices for c in clusters] == [(0, 1, 2), (3, 4)]

    def test_invalid_tau(self):
        m = similarity_matrix(["x"])
        with pytest.raises(ValueError):
            cluster_by_threshold(m, 0.0)
        with pytest.raises(ValueError):
            cluster_by_threshold(m, 1.1)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_enumeration_oracle(self, seed):
        rng = random.Random(300 + seed)
        for _ in range(50):
            n = rng.randint(1, 12)
            values = random_matrix(rng, n)
            tau = rng.choice([0.5, 0.85, 0.9, 0.95, 1.0])
            got = cluster_by_threshold(
                SimilarityMatrix(values=tuple(map(tuple, values))), tau
            )
            expected = clusters_by_enumeration(values, tau)
            assert [(c.member_indices, c.centroid_index) for c in got] == expected

    def test_partition_property(self):
        rng = random.Random(77)
        for _ in range(50):
            n = rng.randint(1, 10)
            m = SimilarityMatrix(values=tuple(map(tuple, random_matrix(rng, n))))
            clusters = cluster_by_threshold(m, 0.9)
            members = sorted(i for c in clusters for i in c.member_indices)
            assert members == list(range(n))
            for c in clusters:
                assert c.centroid_index in c.member_indices

    def test_raising_tau_refines(self):
        # every high-tau cluster sits inside a single low-tau cluster
        rng = random.Random(78)
        for _ in range(50):
            n = rng.randint(2, 10)
            m = SimilarityMatrix(values=tuple(map(tuple, random_matrix(rng, n))))
            low = cluster_by_threshold(m, 0.5)
            high = cluster_by_threshold(m, 0.95)
            low_sets = [set(c.member_indices) for c in low]
            for c in high:
                assert any(set(c.member_indices) <= s for s in low_sets)


class TestMajorityReference:
    def test_unanimous(self):
        text, support, share = majority_reference(["yes"] * 50)
        assert (text, support, share) == ("yes", 50, 1.0)

    def test_tied_clusters_take_smallest_index(self):
        # two size-4 groups; the one containing index 0 wins
        answers = [
            "gamma delta",  # 0 B
            "alpha beta",   # 1 A
            "alpha beta",   # 2 A
            "gamma delta",  # 3 B
            "alpha beta",   # 4 A
            "gamma delta",  # 5 B
            "gamma delta",  # 6 B
            "alpha beta",   # 7 A
            "zzz qqq",      # 8 C
            "zzz qqq",      # 9 C
        ]
        text, support, share = majority_reference(answers)
        assert text == "gamma delta"
        assert support == 4
        assert share == 0.4

    def test_share_is_over_all_answers(self):
        text, support, share = majority_reference(["a b c", "a b c", "x y z"])
        assert text == "a b c"
        assert support == 2
        assert share == pytest.approx(2 / 3)


def test_cluster_type_invariants():
    c = Cluster(member_indices=(1, 3, 5), centroid_index=3)
    assert c.size == 3
    with pytest.raises(ValueError):
        Cluster(member_indices=(1, 2), centroid_index=9)
