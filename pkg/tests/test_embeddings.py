import math
from datetime import datetime, timezone

import numpy as np
import pytest

from planted import community_cooccurrence_docs, lattice_model
from spherewatch import kernels
from spherewatch.domain import TweetRecord
from spherewatch.embeddings import (
    CooccurrenceDoc,
    EmbeddingModel,
    EmptyVocabulary,
    FewerThanTwoPairs,
    HASHTAG_PARAMS,
    MENTION_PARAMS,
    NoUsableTags,
    OutOfVocabulary,
    analogy,
    build_docs,
    load_analogy_pairs,
    load_vectors,
    precision_at_1,
    save_vectors,
    tag_affinity,
    top_tags_for_account,
    train,
)

WHEN = datetime(2019, 3, 10, 12, 0, tzinfo=timezone.utc)


def mk(id, author=1, hashtags=(), mentions=(), text="x"):
    return TweetRecord(id=id, author_id=author, created_at=WHEN,
                       full_text=text, lang="pt", hashtags=tuple(hashtags),
                       mentions=tuple(mentions))


def pair_docs(pairs, copies=1):
    """One two-token doc per pair, repeated."""
    docs = []
    tid = 1
    for _ in range(copies):
        for a, b in pairs:
            docs.append(CooccurrenceDoc(tid, "hashtags", (a, b)))
            tid += 1
    return docs


class TestBuildDocs:
    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            build_docs([], "bigrams")

    def test_hashtags_case_folded_and_deduplicated(self):
        docs = build_docs([mk(1, hashtags=("Vote", "VOTE", "urna"))],
                          "hashtags")
        assert docs == [CooccurrenceDoc(1, "hashtags", ("vote", "urna"))]

    def test_non_ascii_tags_dropped_per_token(self):
        # one ascii survivor is below the two-token floor: whole doc goes
        docs = build_docs([mk(1, hashtags=("COVID19", "covid19", "日本"))],
                          "hashtags")
        assert docs == []

    def test_non_ascii_tag_removed_but_doc_kept(self):
        docs = build_docs([mk(1, hashtags=("eleições", "vote", "urna"))],
                          "hashtags")
        assert docs[0].tokens == ("vote", "urna")

    def test_single_tag_tweet_dropped(self):
        assert build_docs([mk(1, hashtags=("vote",))], "hashtags") == []

    def test_first_seen_order_kept(self):
        docs = build_docs([mk(1, hashtags=("b", "a", "B", "c"))], "hashtags")
        assert docs[0].tokens == ("b", "a", "c")

    def test_mentions_exclude_author(self):
        docs = build_docs([mk(1, author=7, mentions=(7, 8, 9))], "mentions")
        assert docs == [CooccurrenceDoc(1, "mentions", ("8", "9"))]

    def test_mentions_below_two_dropped(self):
        assert build_docs([mk(1, author=7, mentions=(8,))], "mentions") == []
        assert build_docs([mk(1, author=7, mentions=(7, 8))],
                          "mentions") == []

    def test_mentions_deduplicated(self):
        docs = build_docs([mk(1, author=7, mentions=(9, 8, 9))], "mentions")
        assert docs[0].tokens == ("9", "8")

    def test_dict_input_accepted(self):
        raw = mk(4, hashtags=("vote", "urna")).to_doc()
        docs = build_docs([raw], "hashtags")
        assert docs[0].tokens == ("vote", "urna")


def python_sgns_epoch(flat, offsets, syn0, syn1, neg_table, alpha_start,
                      alpha_min, negative, words_done, total_words, state):
    """Plain-python restatement of the training step, for agreement tests."""
    syn0 = syn0.copy()
    syn1 = syn1.copy()
    dim = syn0.shape[1]
    for d in range(len(offsets) - 1):
        for i in range(offsets[d], offsets[d + 1]):
            lr = alpha_start * (1.0 - words_done / total_words)
            if lr < alpha_min:
                lr = alpha_min
            words_done += 1
            center = flat[i]
            for j in range(offsets[d], offsets[d + 1]):
                if j == i:
                    continue
                out = flat[j]
                work = np.zeros(dim)
                for step in range(negative + 1):
                    if step == 0:
                        target, label = int(out), 1.0
                    else:
                        state = (48271 * state) % 2147483647
                        target = int(neg_table[state % len(neg_table)])
                        if target == out:
                            continue
                        label = 0.0
                    f = 0.0
                    for c in range(dim):
                        f += syn0[center, c] * syn1[target, c]
                    g = (label - 1.0 / (1.0 + math.exp(-f))) * lr
                    work += g * syn1[target]
                    syn1[target] += g * syn0[center]
                syn0[center] += work
    return syn0, syn1, words_done, state


class TestKernelAgreement:
    def test_epoch_matches_python_reference(self):
        rng = np.random.default_rng(2)
        flat = rng.integers(0, 5, size=14).astype(np.int32)
        offsets = np.array([0, 3, 7, 9, 14], dtype=np.int64)
        syn0 = rng.normal(scale=0.1, size=(5, 4))
        syn1 = rng.normal(scale=0.1, size=(5, 4))
        neg_table = rng.integers(0, 5, size=63).astype(np.int64)
        state0 = kernels.rng_state_from_seed(11)

        want0, want1, want_done, want_state = python_sgns_epoch(
            flat, offsets, syn0, syn1, neg_table, 0.05, 0.05 * 1e-4, 3,
            0, 28, state0)
        got0, got1 = syn0.copy(), syn1.copy()
        got_done, got_state = kernels.sgns_train_epoch(
            flat, offsets, got0, got1, neg_table, 0.05, 0.05 * 1e-4, 3,
            0, 28, state0)

        assert got_done == want_done == 14
        assert got_state == want_state
        np.testing.assert_allclose(got0, want0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(got1, want1, rtol=0, atol=1e-12)

    def test_learning_rate_floor_applies(self):
        # words_done far past the plan: the floor keeps training moving
        flat = np.array([0, 1], dtype=np.int32)
        offsets = np.array([0, 2], dtype=np.int64)
        syn0 = np.full((2, 3), 0.1)
        syn1 = np.full((2, 3), 0.1)
        table = np.zeros(8, dtype=np.int64)
        before = syn0.copy()
        kernels.sgns_train_epoch(flat, offsets, syn0, syn1, table, 0.05,
                                 0.05 * 1e-4, 2, 100, 100,
                                 kernels.rng_state_from_seed(1))
        assert not np.array_equal(syn0, before)


@pytest.fixture(scope="module")
def community_model():
    docs, communities = community_cooccurrence_docs(seed=4)
    model = train(docs, dimension=16, alpha=0.025, negative=5, min_count=1,
                  epochs=5, seed=7)
    return model, communities


class TestTrain:
    def test_cooccurring_tokens_score_higher(self):
        docs = pair_docs([("x", "y"), ("z", "w")], copies=120)
        model = train(docs, dimension=12, negative=5, min_count=1, seed=3)
        assert model.cosine("x", "y") > model.cosine("x", "z")

    def test_min_count_boundary(self):
        docs = (pair_docs([("rare", "common")], copies=24)
                + pair_docs([("edge", "common")], copies=25))
        model = train(docs, dimension=8, min_count=25, seed=0)
        assert "rare" not in model.vocabulary
        assert "edge" in model.vocabulary
        assert model.frequencies["edge"] == 25

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyVocabulary):
            train([])

    def test_min_count_prunes_everything_raises(self):
        with pytest.raises(EmptyVocabulary):
            train(pair_docs([("a", "b")], copies=3), min_count=10)

    def test_no_doc_with_two_survivors_raises(self):
        docs = [CooccurrenceDoc(i, "hashtags", ("hub", f"one_{i}"))
                for i in range(30)]
        with pytest.raises(EmptyVocabulary):
            train(docs, min_count=25)

    def test_deterministic_under_seed(self):
        docs = pair_docs([("x", "y"), ("y", "z"), ("x", "z")], copies=20)
        a = train(docs, dimension=10, min_count=1, seed=5)
        b = train(docs, dimension=10, min_count=1, seed=5)
        assert np.array_equal(a.syn0, b.syn0)
        assert np.array_equal(a.syn1, b.syn1)
        assert a.tokens == b.tokens

    def test_seed_changes_vectors(self):
        docs = pair_docs([("x", "y"), ("y", "z")], copies=20)
        a = train(docs, dimension=10, min_count=1, seed=5)
        b = train(docs, dimension=10, min_count=1, seed=6)
        assert not np.array_equal(a.syn0, b.syn0)

    def test_vocabulary_ordered_by_frequency_then_token(self):
        docs = (pair_docs([("mid", "top")], copies=3)
                + pair_docs([("low", "top")], copies=1)
                + pair_docs([("aaa", "top")], copies=1))
        model = train(docs, dimension=4, min_count=1, seed=0)
        assert model.tokens == ("top", "mid", "aaa", "low")

    def test_two_communities_separate(self, community_model):
        model, communities = community_model
        rng = np.random.default_rng(99)
        wins = 0
        n_triples = 1000
        for _ in range(n_triples):
            side = int(rng.integers(0, 2))
            anchor, intra = rng.choice(communities[side], size=2,
                                       replace=False)
            inter = str(rng.choice(communities[1 - side]))
            if model.cosine(str(anchor), str(intra)) > model.cosine(
                    str(anchor), inter):
                wins += 1
        assert wins >= 0.95 * n_triples

    def test_cosine_laws(self, community_model):
        model, _ = community_model
        for token in model.tokens:
            assert model.cosine(token, token) == pytest.approx(1.0,
                                                               abs=1e-12)
        rng = np.random.default_rng(3)
        for _ in range(50):
            a, b = rng.choice(model.tokens, size=2)
            assert model.cosine(str(a), str(b)) == pytest.approx(
                model.cosine(str(b), str(a)), abs=1e-12)

    def test_mode_recorded(self):
        docs = [CooccurrenceDoc(1, "mentions", ("8", "9"))] * 30
        model = train(docs, dimension=4, min_count=1, seed=0)
        assert model.mode == "mentions"

    def test_paper_parameter_sets(self):
        assert HASHTAG_PARAMS["alpha"] == 0.0275
        assert HASHTAG_PARAMS["dimension"] == 75
        assert HASHTAG_PARAMS["negative"] == 15
        assert MENTION_PARAMS["alpha"] == 0.025
        assert MENTION_PARAMS["dimension"] == 128
        assert MENTION_PARAMS["negative"] == 5
        assert MENTION_PARAMS["min_count"] == 25


class TestAnalogy:
    def test_lattice_recovers_expected_token(self):
        model, pairs = lattice_model(n_pairs=6)
        for i, (a, b) in enumerate(pairs):
            for j, (c, d) in enumerate(pairs):
                if i == j:
                    continue
                assert analogy(model, a, b, c) == d

    def test_degenerate_a_equals_b(self):
        model, _ = lattice_model(n_pairs=4)
        result = analogy(model, "u0", "u0", "u2")
        assert result == "v2"
        assert result not in {"u0", "u2"}

    def test_result_never_an_input(self):
        model, _ = lattice_model(n_pairs=4)
        rng = np.random.default_rng(0)
        for _ in range(60):
            a, b, c = rng.choice(model.tokens, size=3)
            assert analogy(model, str(a), str(b), str(c)) not in {a, b, c}

    def test_out_of_vocabulary(self):
        model, _ = lattice_model(n_pairs=3)
        with pytest.raises(OutOfVocabulary) as err:
            analogy(model, "u0", "v0", "nope")
        assert err.value.token == "nope"


def random_model(tokens, dimension=16, seed=0):
    rng = np.random.default_rng(seed)
    syn0 = rng.normal(size=(len(tokens), dimension))
    return EmbeddingModel(
        mode="hashtags", dimension=dimension, tokens=tuple(tokens),
        vocabulary={t: i for i, t in enumerate(tokens)},
        frequencies={t: 1 for t in tokens}, syn0=syn0,
        syn1=np.zeros_like(syn0), alpha=0.025, negative=5, min_count=1)


class TestPrecisionAt1:
    def test_lattice_is_perfect(self):
        model, pairs = lattice_model(n_pairs=39)
        result = precision_at_1(model, pairs)
        assert result.queries == 741
        assert result.correct == 741
        assert result.score == 1.0
        assert result.pairs_dropped == ()

    def test_two_pairs_single_query(self):
        model, pairs = lattice_model(n_pairs=2)
        result = precision_at_1(model, pairs)
        assert result.queries == 1

    def test_query_direction_is_file_order(self):
        # forward (pair1 -> pair2) hits; the reverse query would miss
        vecs = {
            "a1": [1, 0, 0, 0, 0],
            "b1": [0, 1, 0, 0.9, 0],
            "a2": [0, 0, 1, 0, 0],
            "b2": [-1, 1, 1, 0, 0],
            "x": [0, 1, 0, 0, 0.2],
        }
        tokens = tuple(vecs)
        model = random_model(tokens)
        model.syn0 = np.array([vecs[t] for t in tokens], dtype=float)
        result = precision_at_1(model, [("a1", "b1"), ("a2", "b2")])
        assert result.queries == 1
        assert result.score == 1.0
        reversed_guess = analogy(model, "a2", "b2", "a1")
        assert reversed_guess != "b1"

    def test_bundled_pairs_drop_self_rows(self):
        pairs = load_analogy_pairs()
        assert len(pairs) == 43
        tokens = sorted({t for pair in pairs for t in pair})
        model = random_model(tokens, seed=2)
        result = precision_at_1(model, pairs)
        assert len(result.pairs_used) == 39
        assert result.queries == 741
        assert set(result.pairs_dropped) == {
            ("algeria", "algeria"), ("latvia", "latvia"),
            ("senegal", "senegal"), ("denmark", "denmark")}

    def test_oov_pair_dropped_and_reported(self):
        pairs = load_analogy_pairs()
        tokens = sorted({t for pair in pairs for t in pair} - {"tokyo"})
        model = random_model(tokens, seed=2)
        result = precision_at_1(model, pairs)
        assert ("tokyo", "japan") in result.pairs_dropped
        assert len(result.pairs_used) == 38
        assert result.queries == 38 * 37 // 2

    def test_fewer_than_two_pairs(self):
        model, pairs = lattice_model(n_pairs=2)
        with pytest.raises(FewerThanTwoPairs):
            precision_at_1(model, pairs[:1])
        with pytest.raises(FewerThanTwoPairs):
            precision_at_1(model, [("u0", "u0"), ("zz", "v1")])

    def test_duplicate_pairs_count_twice(self):
        model, pairs = lattice_model(n_pairs=3)
        result = precision_at_1(model, pairs + [pairs[0]])
        assert result.queries == 6


class TestLoadPairs:
    def test_bundled_fixture_shape(self):
        pairs = load_analogy_pairs()
        assert len(pairs) == 43
        assert pairs[0] == ("madrid", "spain")
        assert pairs.count(("maputo", "mozambique")) == 2
        assert ("egypt", "dakar") in pairs

    def test_external_file(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("lisboa\tportugal\n\nmadrid\tspain\n",
                        encoding="utf-8")
        assert load_analogy_pairs(path) == [("lisboa", "portugal"),
                                            ("madrid", "spain")]


class TestTagAffinity:
    def test_identical_single_tag(self):
        model, _ = lattice_model(n_pairs=3)
        assert tag_affinity(model, ["u0"], ["u0"]) == pytest.approx(1.0)

    def test_group_oov_tag_dropped(self):
        model, _ = lattice_model(n_pairs=3)
        base = tag_affinity(model, ["u0"], ["u1"])
        assert tag_affinity(model, ["u0"], ["u1", "missing"]) == base

    def test_no_usable_tags(self):
        model, _ = lattice_model(n_pairs=3)
        with pytest.raises(NoUsableTags):
            tag_affinity(model, ["missing"], ["u0"])
        with pytest.raises(NoUsableTags):
            tag_affinity(model, ["u0"], [])

    def test_account_side_truncated_to_top_15(self):
        # tag 16 is the only one aligned with the group; it must not count
        dim = 17
        tokens = ["g"] + [f"t{i}" for i in range(1, 17)]
        rows = [np.zeros(dim) for _ in tokens]
        rows[0][0] = 1.0
        for i in range(1, 16):
            rows[i][i] = 1.0
        rows[16][0] = 1.0
        model = random_model(tokens, dimension=dim)
        model.syn0 = np.array(rows)
        affinity = tag_affinity(model, [f"t{i}" for i in range(1, 17)],
                                ["g"])
        assert affinity == pytest.approx(0.0, abs=1e-12)

    def test_communities_have_higher_self_affinity(self, community_model):
        model, communities = community_model
        own = tag_affinity(model, communities[0][:5], communities[0][5:])
        cross = tag_affinity(model, communities[0][:5], communities[1][:5])
        assert own > cross


class TestVectorFile:
    def test_roundtrip_exact(self, tmp_path):
        docs = pair_docs([("x", "y"), ("y", "z")], copies=10)
        model = train(docs, dimension=6, min_count=1, seed=1)
        path = tmp_path / "vectors.txt"
        assert save_vectors(model, path) == model.vocab_size
        loaded = load_vectors(path, mode=model.mode)
        assert loaded.tokens == model.tokens
        assert loaded.dimension == model.dimension
        assert np.array_equal(loaded.syn0, model.syn0)

    def test_header_layout(self, tmp_path):
        docs = pair_docs([("x", "y")], copies=5)
        model = train(docs, dimension=3, min_count=1, seed=0)
        path = tmp_path / "vectors.txt"
        save_vectors(model, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "2 3"
        assert len(lines) == 3
        assert len(lines[1].split(" ")) == 4

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("banana\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_vectors(path)

    def test_truncated_row(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("1 4\ntok 0.5 0.5\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_vectors(path)


class TestTopTags:
    def test_counts_and_order(self):
        tweets = [mk(1, author=5, hashtags=("b", "a")),
                  mk(2, author=5, hashtags=("a",)),
                  mk(3, author=6, hashtags=("c", "c", "c"))]
        assert top_tags_for_account(tweets, 5) == ["a", "b"]

    def test_tie_breaks_lexicographic(self):
        tweets = [mk(1, author=5, hashtags=("b",)),
                  mk(2, author=5, hashtags=("a",))]
        assert top_tags_for_account(tweets, 5) == ["a", "b"]

    def test_truncates_to_n(self):
        tweets = [mk(i, author=5, hashtags=(f"t{i:02d}",))
                  for i in range(20)]
        assert len(top_tags_for_account(tweets, 5, n=15)) == 15
