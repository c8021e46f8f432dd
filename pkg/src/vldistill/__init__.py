"""Caption-then-QA synthetic data pipeline.

Curate images, distill caption/question/answer triples through a
pluggable LVLM endpoint, parse the tag-delimited responses into dataset
records, compose training mixtures, and analyze the resulting corpus.
"""

__version__ = "0.1.0"
