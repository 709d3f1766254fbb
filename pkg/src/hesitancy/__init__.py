"""County-level vaccine hesitancy analytics.

Computes a behavioral hesitancy metric from cumulative vaccination uptake,
clusters counties on it with Fisher-Jenks natural breaks, trains a random
forest over static and dynamic county features to predict cluster membership,
and explains predictions with permutation importance and exact tree Shapley
values. A text pipeline (lexicon sentiment, Gibbs LDA topics) produces the
social-signal features.
"""

__version__ = "0.1.0"
