from .domains import DomainStat, UnparsableUrl, domain_stats
from .text import load_stopwords, tokenize_corpus
from .lda import (
    CollapsedGibbsLda,
    EmptyCorpus,
    LdaConfig,
    TopicOutOfRange,
    lda_fit,
    name_topics,
    top_words,
    topic_proportions,
)
from .pca import DegenerateInput, PcaProjector2D, project_2d

__all__ = [
    "DomainStat",
    "UnparsableUrl",
    "domain_stats",
    "load_stopwords",
    "tokenize_corpus",
    "CollapsedGibbsLda",
    "EmptyCorpus",
    "LdaConfig",
    "TopicOutOfRange",
    "lda_fit",
    "name_topics",
    "top_words",
    "topic_proportions",
    "DegenerateInput",
    "PcaProjector2D",
    "project_2d",
]
