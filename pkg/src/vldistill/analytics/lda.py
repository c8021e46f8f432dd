"""Topic modeling by collapsed Gibbs sampling.

Each sweep resamples every token's topic from
P(z=k | rest) proportional to (n_dk + alpha) * (n_kw + beta) / (n_k + V*beta)
with the token's own count removed first. The inner loop is JIT-compiled
(numba) and draws from a splitmix64 stream seeded from the config, so a
fit is fully deterministic given its seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator

log = logging.getLogger(__name__)

TOPIC_NAME_PROMPT = """I will provide you with a list of words obtained from LDA analysis.
I want you to summarize the list of words using **1~2 words**.
You should only output the summary.
```list of words
{str(key_words)}
```"""


class EmptyCorpus(Exception):
    pass


class TopicOutOfRange(Exception):
    pass


@dataclass
class LdaConfig:
    K: int = 25
    alpha: Optional[float] = None  # None -> 50/K
    beta: float = 0.01
    iterations: int = 1000
    seed: int = 0
    sample_size: Optional[int] = 100_000

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.alpha is not None else 50.0 / self.K


_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _next_f64(state):
    # splitmix64, top 53 bits as a float in [0, 1)
    state[0] = state[0] + _C1
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _C2
    z = (z ^ (z >> np.uint64(27))) * _C3
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _init_assignments(tokens, doc_ids, z, ndk, nkw, nk, state):
    K = nk.shape[0]
    for t in range(tokens.shape[0]):
        k = int(_next_f64(state) * K)
        if k == K:
            k = K - 1
        z[t] = k
        ndk[doc_ids[t], k] += 1
        nkw[k, tokens[t]] += 1
        nk[k] += 1


@njit(cache=True)
def _gibbs_sweep(tokens, doc_ids, z, ndk, nkw, nk, alpha, beta, state, probs):
    K = nk.shape[0]
    V = nkw.shape[1]
    vbeta = V * beta
    for t in range(tokens.shape[0]):
        w = tokens[t]
        d = doc_ids[t]
        k = z[t]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for kk in range(K):
            p = (ndk[d, kk] + alpha) * (nkw[kk, w] + beta) / (nk[kk] + vbeta)
            probs[kk] = p
            total += p
        u = _next_f64(state) * total
        acc = 0.0
        knew = K - 1
        for kk in range(K):
            acc += probs[kk]
            if u < acc:
                knew = kk
                break
        z[t] = knew
        ndk[d, knew] += 1
        nkw[knew, w] += 1
        nk[knew] += 1


class CollapsedGibbsLda(BaseEstimator):
    """Seeded collapsed-Gibbs LDA with a fit/get_params estimator surface.

    `fit` takes docs as lists of token ids (see tokenize_corpus) plus the
    vocabulary. With check_invariants=True the three count-conservation
    invariants are asserted after every sweep.
    """

    def __init__(self, n_topics: int = 25, alpha: Optional[float] = None,
                 beta: float = 0.01, n_iter: int = 1000, seed: int = 0,
                 check_invariants: bool = False):
        self.n_topics = n_topics
        self.alpha = alpha
        self.beta = beta
        self.n_iter = n_iter
        self.seed = seed
        self.check_invariants = check_invariants

    def fit(self, docs: list, vocab: list | None = None):
        cfg = LdaConfig(K=self.n_topics, alpha=self.alpha, beta=self.beta,
                        iterations=self.n_iter, seed=self.seed)
        tokens = np.array([w for doc in docs for w in doc], dtype=np.int64)
        doc_ids = np.array([d for d, doc in enumerate(docs) for _ in doc],
                           dtype=np.int64)
        if tokens.size == 0:
            raise EmptyCorpus("no tokens in corpus")
        V = len(vocab) if vocab is not None else int(tokens.max()) + 1
        if V < 1 or tokens.max() >= V:
            raise EmptyCorpus("vocabulary empty or inconsistent with docs")

        K = cfg.K
        z = np.zeros(tokens.size, dtype=np.int64)
        ndk = np.zeros((len(docs), K), dtype=np.int64)
        nkw = np.zeros((K, V), dtype=np.int64)
        nk = np.zeros(K, dtype=np.int64)
        state = np.array([np.uint64(cfg.seed)], dtype=np.uint64)
        probs = np.zeros(K, dtype=np.float64)

        doc_lengths = np.array([len(doc) for doc in docs], dtype=np.int64)
        _init_assignments(tokens, doc_ids, z, ndk, nkw, nk, state)
        if self.check_invariants:
            self._assert_counts(ndk, nkw, nk, doc_lengths, tokens.size)
        alpha = cfg.effective_alpha
        for _ in range(cfg.iterations):
            _gibbs_sweep(tokens, doc_ids, z, ndk, nkw, nk, alpha, cfg.beta,
                         state, probs)
            if self.check_invariants:
                self._assert_counts(ndk, nkw, nk, doc_lengths, tokens.size)

        self.vocab_ = list(vocab) if vocab is not None else [str(i) for i in range(V)]
        self.doc_topic_counts_ = ndk
        self.topic_word_counts_ = nkw
        self.topic_totals_ = nk
        self.assignments_ = z
        self.config_ = cfg
        return self

    @staticmethod
    def _assert_counts(ndk, nkw, nk, doc_lengths, n_tokens):
        assert np.array_equal(ndk.sum(axis=1), doc_lengths)
        assert np.array_equal(nkw.sum(axis=1), nk)
        assert nk.sum() == n_tokens

    def _require_fitted(self):
        if not hasattr(self, "topic_totals_"):
            raise RuntimeError("model not fitted")

    def top_words(self, topic: int, n: int = 10) -> list:
        """(word, weight) ranked by smoothed within-topic probability,
        ties broken lexicographically."""
        self._require_fitted()
        K = self.n_topics
        if not 0 <= topic < K:
            raise TopicOutOfRange(f"topic {topic} not in [0, {K})")
        V = len(self.vocab_)
        denom = self.topic_totals_[topic] + V * self.config_.beta
        weights = (self.topic_word_counts_[topic] + self.config_.beta) / denom
        order = sorted(range(V), key=lambda w: (-weights[w], self.vocab_[w]))
        return [(self.vocab_[w], float(weights[w])) for w in order[:n]]

    def topic_proportions(self) -> list:
        """Percent of corpus tokens assigned to each topic; sums to 100."""
        self._require_fitted()
        total = int(self.topic_totals_.sum())
        return [float(c) / total * 100.0 for c in self.topic_totals_]


def lda_fit(docs: list, cfg: LdaConfig, vocab: list | None = None,
            check_invariants: bool = False) -> CollapsedGibbsLda:
    model = CollapsedGibbsLda(n_topics=cfg.K, alpha=cfg.alpha, beta=cfg.beta,
                              n_iter=cfg.iterations, seed=cfg.seed,
                              check_invariants=check_invariants)
    return model.fit(docs, vocab)


def top_words(model: CollapsedGibbsLda, topic: int, n: int = 10) -> list:
    return model.top_words(topic, n)


def topic_proportions(model: CollapsedGibbsLda) -> list:
    return model.topic_proportions()


def name_topics(client, per_topic_words: list) -> list:
    """Summarize each topic's key words into a short name via a text LLM.

    Per-topic failures fall back to "topic-<k>" with a warning; the batch
    never aborts.
    """
    names = []
    for k, words in enumerate(per_topic_words):
        if not words:
            raise ValueError(f"topic {k}: empty word list")
        key_words = [w for w, _ in words] if isinstance(words[0], tuple) else list(words)
        prompt = TOPIC_NAME_PROMPT.replace("{str(key_words)}", str(key_words))
        try:
            status, text = client.complete(prompt, None)
        except Exception as exc:  # provider bug; keep the batch going
            status, text = 0, str(exc)
        if status == 200 and text and text.strip():
            names.append(text.strip())
        else:
            log.warning("topic naming failed for topic %d (status %s); using fallback",
                        k, status)
            names.append(f"topic-{k}")
    return names
