import numpy as np
import pytest

from vldistill.analytics import (
    CollapsedGibbsLda,
    DegenerateInput,
    EmptyCorpus,
    LdaConfig,
    PcaProjector2D,
    TopicOutOfRange,
    domain_stats,
    lda_fit,
    load_stopwords,
    name_topics,
    project_2d,
    tokenize_corpus,
)
from vldistill.distill import MockLvlmClient
from vldistill.records import ImageMeta


def img(url, i=0):
    return ImageMeta(f"i{i}", url, 600, 600, "c")


class TestDomainStats:
    def test_basic_aggregation(self):
        images = [img("https://a.cnn.com/x", 0), img("https://cnn.com/y", 1),
                  img("https://www.shopify.com/z", 2)]
        unique, stats, bad = domain_stats(images)
        assert unique == 2 and not bad
        assert [(s.domain, s.count) for s in stats] == [("cnn.com", 2),
                                                        ("shopify.com", 1)]
        assert stats[0].pct == pytest.approx(66.6667, abs=1e-3)
        assert stats[1].cumulative_pct == pytest.approx(100.0)

    def test_empty_input(self):
        unique, stats, bad = domain_stats([])
        assert unique == 0 and stats == [] and bad == []

    def test_malformed_url_excluded(self):
        images = [img("https://a.example/x", 0), img("not a url", 1),
                  img("https://a.example/y", 2)]
        unique, stats, bad = domain_stats(images)
        assert len(bad) == 1 and bad[0].index == 1
        assert stats[0].count == 2
        assert stats[0].pct == pytest.approx(100.0)

    def test_tie_break_lexicographic(self):
        images = [img("https://bbb.example2.net/x", 0),
                  img("https://aaa.example1.net/y", 1)]
        _, stats, _ = domain_stats(images)
        assert [s.domain for s in stats] == ["example1.net", "example2.net"]

    def test_cumulative_nondecreasing(self):
        images = [img(f"https://d{i % 7}.example{i % 7}.com/x", i)
                  for i in range(50)]
        _, stats, _ = domain_stats(images, top_k=7)
        cums = [s.cumulative_pct for s in stats]
        assert cums == sorted(cums)
        assert cums[-1] == pytest.approx(100.0)


class TestTokenize:
    def test_rules(self):
        vocab, docs = tokenize_corpus(["The cat sat", "cat cat"],
                                      min_len=3, min_count=1,
                                      stopwords={"the"})
        assert vocab == ["cat", "sat"]
        assert docs == [[0, 1], [0, 0]]

    def test_min_count_drops_rare(self):
        vocab, docs = tokenize_corpus(["The cat sat", "cat cat"],
                                      min_len=3, min_count=3,
                                      stopwords={"the"})
        assert vocab == ["cat"]
        assert docs == [[0], [0, 0]]

    def test_numeric_text_empty_doc(self):
        vocab, docs = tokenize_corpus(["123 456 789"], min_count=1,
                                      stopwords=set())
        assert docs == [[]]

    def test_default_stopwords_loaded(self):
        stop = load_stopwords()
        assert "the" in stop and "cat" not in stop


def planted_corpus(n_topics=5, words_per_topic=10, n_docs=500, doc_len=50,
                   seed=0):
    rng = np.random.RandomState(seed)
    vocab = [f"w{i:03d}" for i in range(n_topics * words_per_topic)]
    docs, labels = [], []
    for d in range(n_docs):
        t = d % n_topics
        labels.append(t)
        lo, hi = t * words_per_topic, (t + 1) * words_per_topic
        docs.append(rng.randint(lo, hi, size=doc_len).tolist())
    planted = [set(range(t * words_per_topic, (t + 1) * words_per_topic))
               for t in range(n_topics)]
    return vocab, docs, planted


class TestLda:
    def test_single_token_single_topic(self):
        model = CollapsedGibbsLda(n_topics=1, n_iter=2, seed=0).fit([[0]], ["w"])
        assert model.assignments_.tolist() == [0]
        assert model.doc_topic_counts_.tolist() == [[1]]

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            CollapsedGibbsLda(n_topics=2, n_iter=1).fit([[], []], ["w"])

    def test_seed_determinism(self):
        _, docs, _ = planted_corpus(n_docs=50, doc_len=20)
        vocab = [f"w{i:03d}" for i in range(50)]
        a = CollapsedGibbsLda(n_topics=3, n_iter=20, seed=11).fit(docs, vocab)
        b = CollapsedGibbsLda(n_topics=3, n_iter=20, seed=11).fit(docs, vocab)
        assert np.array_equal(a.assignments_, b.assignments_)

    def test_planted_recovery(self):
        vocab, docs, planted = planted_corpus(n_topics=2, n_docs=200)
        model = CollapsedGibbsLda(n_topics=2, n_iter=200, seed=4,
                                  check_invariants=True).fit(docs, vocab)
        inferred = [set(w for w, _ in model.top_words(k, 10)) for k in range(2)]
        planted_words = [set(vocab[i] for i in s) for s in planted]
        direct = (inferred[0] == planted_words[0] and
                  inferred[1] == planted_words[1])
        swapped = (inferred[0] == planted_words[1] and
                   inferred[1] == planted_words[0])
        assert direct or swapped

    def test_count_invariants(self):
        _, docs, _ = planted_corpus(n_docs=30, doc_len=10)
        vocab = [f"w{i:03d}" for i in range(50)]
        m = CollapsedGibbsLda(n_topics=4, n_iter=5, seed=0,
                              check_invariants=True).fit(docs, vocab)
        assert m.doc_topic_counts_.sum() == sum(len(d) for d in docs)
        assert np.array_equal(m.topic_word_counts_.sum(axis=1), m.topic_totals_)

    def test_lda_fit_wrapper(self):
        cfg = LdaConfig(K=2, iterations=3, seed=1)
        assert cfg.effective_alpha == 25.0
        m = lda_fit([[0, 1], [1, 0]], cfg, ["a", "b"])
        assert m.n_topics == 2

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LdaConfig(K=0)
        with pytest.raises(ValueError):
            LdaConfig(beta=0.0)

    def test_estimator_params(self):
        params = CollapsedGibbsLda(n_topics=7).get_params()
        assert params["n_topics"] == 7
        m = CollapsedGibbsLda().set_params(seed=3)
        assert m.seed == 3


class TestTopWords:
    def fitted(self):
        m = CollapsedGibbsLda(n_topics=1, n_iter=1, seed=0)
        m.vocab_ = ["ant", "cat", "dog"]
        m.topic_word_counts_ = np.array([[3, 5, 3]])
        m.topic_totals_ = np.array([11])
        m.doc_topic_counts_ = np.array([[11]])
        m.assignments_ = np.zeros(11, dtype=np.int64)
        m.config_ = LdaConfig(K=1, iterations=1)
        return m

    def test_tie_broken_lexicographically(self):
        words = [w for w, _ in self.fitted().top_words(0, 3)]
        assert words == ["cat", "ant", "dog"]

    def test_n_larger_than_vocab(self):
        assert len(self.fitted().top_words(0, 10)) == 3

    def test_out_of_range(self):
        with pytest.raises(TopicOutOfRange):
            self.fitted().top_words(1)

    def test_ranking_scale_covariant(self):
        m = self.fitted()
        base = [w for w, _ in m.top_words(0, 3)]
        m.topic_word_counts_ = m.topic_word_counts_ * 10
        m.topic_totals_ = m.topic_totals_ * 10
        assert [w for w, _ in m.top_words(0, 3)] == base


class TestProportions:
    def test_two_topics(self):
        m = CollapsedGibbsLda(n_topics=2)
        m.topic_totals_ = np.array([30, 70])
        m.vocab_ = ["a"]
        m.topic_word_counts_ = np.array([[30], [70]])
        m.doc_topic_counts_ = np.array([[30, 70]])
        m.assignments_ = np.zeros(100, dtype=np.int64)
        m.config_ = LdaConfig(K=2, iterations=1)
        assert m.topic_proportions() == [30.0, 70.0]

    def test_single_topic(self):
        m = CollapsedGibbsLda(n_topics=1)
        m.topic_totals_ = np.array([42])
        assert m.topic_proportions() == [100.0]

    def test_sum_to_100(self):
        _, docs, _ = planted_corpus(n_docs=60, doc_len=20)
        vocab = [f"w{i:03d}" for i in range(50)]
        m = CollapsedGibbsLda(n_topics=5, n_iter=10, seed=2).fit(docs, vocab)
        assert sum(m.topic_proportions()) == pytest.approx(100.0, abs=1e-6)


class TestNameTopics:
    def test_names_from_mock(self):
        client = MockLvlmClient(default_text="Food Ingredients")
        words = [[("slice", 0.1), ("dish", 0.09), ("cake", 0.08)]]
        assert name_topics(client, words) == ["Food Ingredients"]

    def test_prompt_contains_words(self):
        captured = {}

        class Capturing(MockLvlmClient):
            def complete(self, prompt, image_ref=None):
                captured["prompt"] = prompt
                return 200, "Home Decor"

        name_topics(Capturing(), [["carpet", "lamp", "vase"]])
        assert "['carpet', 'lamp', 'vase']" in captured["prompt"]
        assert "**1~2 words**" in captured["prompt"]

    def test_failure_falls_back(self):
        client = MockLvlmClient(sequence=[(200, "First"), (500, "boom")])
        names = name_topics(client, [["a"], ["b"]])
        assert names == ["First", "topic-1"]

    def test_whitespace_trimmed(self):
        client = MockLvlmClient(default_text=" Home Decor \n")
        assert name_topics(client, [["x"]]) == ["Home Decor"]

    def test_empty_word_list_rejected(self):
        with pytest.raises(ValueError):
            name_topics(MockLvlmClient(), [[]])


class TestPca:
    def test_collinear_input_flat_second_axis(self):
        t = np.linspace(0, 1, 20)
        X = np.outer(t, [1.0, 2.0, 3.0])
        coords = project_2d(X)
        assert np.all(np.abs(coords[:, 1]) < 1e-9)

    def test_2d_rotation_preserves_variance(self):
        rng = np.random.RandomState(0)
        X = rng.standard_normal((100, 2))
        coords = project_2d(X)
        total_in = np.var(X - X.mean(axis=0), axis=0, ddof=1).sum()
        total_out = np.var(coords, axis=0, ddof=1).sum()
        assert total_out == pytest.approx(total_in, rel=1e-10)

    def test_projected_variance_matches_eigvals(self):
        rng = np.random.RandomState(3)
        X = rng.standard_normal((50, 5))
        coords = project_2d(X)
        # independent oracle: SVD of the centered matrix
        centered = X - X.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)
        eigs = sorted((svals ** 2) / (X.shape[0] - 1), reverse=True)
        projected = np.var(coords, axis=0, ddof=1).sum()
        assert projected == pytest.approx(eigs[0] + eigs[1], rel=1e-10)

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInput):
            project_2d(np.ones((5, 3)))
        with pytest.raises(DegenerateInput):
            project_2d(np.ones((1, 3)))

    def test_sign_convention_deterministic(self):
        rng = np.random.RandomState(1)
        X = rng.standard_normal((30, 4))
        p = PcaProjector2D().fit(X)
        for comp in p.components_:
            assert comp[np.argmax(np.abs(comp))] > 0
        assert np.allclose(project_2d(X), project_2d(X))
