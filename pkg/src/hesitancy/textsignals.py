"""Social-text pipeline: normalization, n-grams, lexicon sentiment, and Gibbs LDA.

Two processing tracks share one tokenizer: the sentiment track keeps stop
words (negators live there), the topic track removes them and applies a
suffix-stripping normalizer that approximates lemmatization. Sentiment follows
the familiar social-media lexicon recipe: token valences adjusted by booster
and negator context, summed, and squashed into (-1, 1) by s/sqrt(s^2 + 15).
Topic models are collapsed-Gibbs LDA chains, bit-deterministic under a seed.
"""

from __future__ import annotations

import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numba
import numpy as np

from .errors import DataError, ParameterError
from .tableio import read_csv

BOOST = 0.293          # valence bump per booster word in the preceding window
NEGATION_WINDOW = 3    # tokens scanned back for negators and boosters
SQUASH_ALPHA = 15.0    # normalization constant for the compound score

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_MENTION_RE = re.compile(r"@\w+")
_NON_WORD_RE = re.compile(r"[^a-z0-9_\s]")


@dataclass
class Document:
    id: str
    county: str
    text: str
    likes: int = 0
    retweets: int = 0
    replies: int = 0


@dataclass
class SentimentScore:
    compound: float          # in (-1, 1)
    engagement_weight: float  # 1 + ln(1 + likes + retweets)


@dataclass
class ToneRecord:
    article_id: str
    county: str
    tone: float              # [-100, 100]


@dataclass
class TopicModel:
    K: int
    vocab: list[str]
    phi: np.ndarray          # (K, V) rows sum to 1
    theta: np.ndarray        # (D, K) rows sum to 1
    alpha: np.ndarray        # per-topic document prior
    beta: float
    seed: int
    iterations: int
    assignments: np.ndarray = field(repr=False, default=None)   # token-topic draws
    doc_topic_counts: np.ndarray = field(repr=False, default=None)
    topic_word_counts: np.ndarray = field(repr=False, default=None)

    def top_words(self, topic: int, m: int = 10) -> list[str]:
        order = np.argsort(-self.phi[topic], kind="stable")[:m]
        return [self.vocab[i] for i in order]


def _load_wordfile(name: str) -> frozenset[str]:
    text = resources.files("hesitancy").joinpath(f"data/{name}").read_text()
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def default_stopwords() -> frozenset[str]:
    return _load_wordfile("stopwords.txt")


def default_negators() -> frozenset[str]:
    return _load_wordfile("negators.txt")


def default_boosters() -> frozenset[str]:
    return _load_wordfile("boosters.txt")


def default_lexicon() -> dict[str, float]:
    text = resources.files("hesitancy").joinpath("data/lexicon.tsv").read_text()
    return _parse_lexicon(text.splitlines())


def load_lexicon(path) -> dict[str, float]:
    with open(path) as fh:
        return _parse_lexicon(fh)


def _parse_lexicon(lines) -> dict[str, float]:
    lexicon = {}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        token, valence = line.split("\t")[:2]
        value = float(valence)
        if not math.isfinite(value):
            raise DataError(f"non-finite valence for {token!r}")
        lexicon[token] = value
    if not lexicon:
        raise DataError("empty lexicon")
    return lexicon


def load_wordlist(path) -> frozenset[str]:
    with open(path) as fh:
        return frozenset(line.strip() for line in fh if line.strip())


def suffix_strip(token: str) -> str:
    """Cheap suffix stripper standing in for lemmatization (studies -> study)."""
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 5 and token.endswith("ing"):
        base = token[:-3]
        if len(base) > 2 and base[-1] == base[-2]:
            base = base[:-1]
        return base
    if len(token) > 4 and token.endswith("ed"):
        base = token[:-2]
        if len(base) > 2 and base[-1] == base[-2]:
            base = base[:-1]
        return base
    if len(token) > 3 and token.endswith("es") and token[-3] in "sxz":
        return token[:-2]
    if len(token) > 3 and token.endswith("s") and not token.endswith(("ss", "us", "is")):
        return token[:-1]
    return token


def normalize(text: str, topic_mode: bool = False, stopwords=None, normalizer=None) -> list[str]:
    """Tokenize a post: lowercase, drop URLs and @-mentions, keep hashtag words.

    With ``topic_mode`` stop words are removed and each token passes through a
    pluggable normalizer (default: suffix_strip). The sentiment track must not
    set it: negators are stop words.
    """
    t = text.lower()
    t = _URL_RE.sub(" ", t)
    t = _MENTION_RE.sub(" ", t)
    t = _NON_WORD_RE.sub("", t)
    tokens = t.split()
    if not topic_mode:
        return tokens
    stop = default_stopwords() if stopwords is None else stopwords
    norm = suffix_strip if normalizer is None else normalizer
    return [norm(tok) for tok in tokens if tok not in stop]


def mine_ngrams(corpus: list[list[str]], n_max: int = 3, min_count: int = 5):
    """Join frequent adjacent pairs with underscores, repeatedly up to n_max.

    Returns (ranked list of (ngram, count), rewritten corpus). Each pass joins
    pairs whose corpus count reaches ``min_count``, scanning left to right so
    overlapping pairs never double-join; a second pass turns bigram+token
    pairs into trigrams.
    """
    if n_max < 2:
        raise ParameterError(f"n_max must be >= 2, got {n_max}")
    work = [list(doc) for doc in corpus]
    for _ in range(n_max - 1):
        pairs = Counter()
        for doc in work:
            for a, b in zip(doc, doc[1:]):
                pairs[(a, b)] += 1
        eligible = {p for p, c in pairs.items() if c >= min_count}
        if not eligible:
            break
        rewritten = []
        for doc in work:
            out, i = [], 0
            while i < len(doc):
                if i + 1 < len(doc) and (doc[i], doc[i + 1]) in eligible:
                    out.append(doc[i] + "_" + doc[i + 1])
                    i += 2
                else:
                    out.append(doc[i])
                    i += 1
            rewritten.append(out)
        work = rewritten
    counts = Counter(tok for doc in work for tok in doc if "_" in tok)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked, work


def score_sentiment(doc: Document, lexicon: dict[str, float],
                    negators=None, boosters=None) -> SentimentScore:
    """Sum context-adjusted valences of lexicon hits and squash into (-1, 1).

    A booster within the 3 preceding tokens moves the valence 0.293 further
    from zero; any negator there flips its sign. The engagement weight is an
    aggregation weight, not part of the compound, so per-post scores stay
    comparable.
    """
    if not lexicon:
        raise ParameterError("lexicon must be nonempty")
    negators = default_negators() if negators is None else negators
    boosters = default_boosters() if boosters is None else boosters
    tokens = normalize(doc.text)
    total = 0.0
    for i, token in enumerate(tokens):
        valence = lexicon.get(token)
        if valence is None:
            continue
        window = tokens[max(0, i - NEGATION_WINDOW):i]
        for prev in window:
            if prev in boosters:
                if valence > 0:
                    valence += BOOST
                elif valence < 0:
                    valence -= BOOST
        if any(prev in negators for prev in window):
            valence = -valence
        total += valence
    compound = total / math.sqrt(total * total + SQUASH_ALPHA)
    weight = 1.0 + math.log1p(doc.likes + doc.retweets)
    return SentimentScore(compound=compound, engagement_weight=weight)


@numba.njit(cache=True)
def _gibbs_sweep(token_word, token_doc, z, ndk, nkw, nk, alpha, beta, uniforms, cum):
    K, V = nkw.shape
    v_beta = V * beta
    for i in range(token_word.size):
        w = token_word[i]
        d = token_doc[i]
        old = z[i]
        ndk[d, old] -= 1.0
        nkw[old, w] -= 1.0
        nk[old] -= 1.0
        total = 0.0
        for k in range(K):
            p = (ndk[d, k] + alpha[k]) * (nkw[k, w] + beta) / (nk[k] + v_beta)
            total += p
            cum[k] = total
        u = uniforms[i] * total
        new = 0
        while new < K - 1 and cum[new] < u:
            new += 1
        z[i] = new
        ndk[d, new] += 1.0
        nkw[new, w] += 1.0
        nk[new] += 1.0


def _encode_corpus(corpus: list[list[str]]):
    vocab = sorted({tok for doc in corpus for tok in doc})
    if not vocab:
        raise DataError("empty corpus: no tokens to model")
    index = {tok: i for i, tok in enumerate(vocab)}
    token_word, token_doc = [], []
    for d, doc in enumerate(corpus):
        for tok in doc:
            token_word.append(index[tok])
            token_doc.append(d)
    return vocab, np.asarray(token_word, dtype=np.int64), np.asarray(token_doc, dtype=np.int64)


def _resolve_alpha(spec, K: int) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "symmetric" or spec == "auto":   # no online prior optimization in scope
            return np.full(K, 1.0 / K)
        if spec == "asymmetric":
            raw = 1.0 / (np.arange(K) + math.sqrt(K))
            return raw / raw.sum()
        raise ParameterError(f"unknown alpha spec {spec!r}")
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(K, float(arr))
    if arr.size != K:
        raise ParameterError(f"alpha vector length {arr.size} != K={K}")
    return arr


def _resolve_beta(spec, K: int) -> float:
    if isinstance(spec, str):
        if spec == "symmetric":
            return 1.0 / K
        raise ParameterError(f"unknown beta spec {spec!r}")
    return float(spec)


def fit_lda(corpus: list[list[str]], K: int, alpha=0.1, beta=0.01,
            iterations: int = 100, seed: int = 0) -> TopicModel:
    """Collapsed Gibbs sampling over token-topic assignments.

    phi and theta come from the final counts with prior smoothing. Runs are
    bit-identical for a fixed seed: one uniform draw per token per sweep,
    taken from a seeded generator.
    """
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    vocab, token_word, token_doc = _encode_corpus(corpus)
    alpha_vec = _resolve_alpha(alpha, K)
    beta_val = _resolve_beta(beta, K)
    D, V = len(corpus), len(vocab)

    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=token_word.size).astype(np.int64)
    ndk = np.zeros((D, K))
    nkw = np.zeros((K, V))
    nk = np.zeros(K)
    for i in range(token_word.size):
        ndk[token_doc[i], z[i]] += 1.0
        nkw[z[i], token_word[i]] += 1.0
        nk[z[i]] += 1.0

    cum = np.empty(K)
    for _ in range(iterations):
        uniforms = rng.random(token_word.size)
        _gibbs_sweep(token_word, token_doc, z, ndk, nkw, nk, alpha_vec, beta_val, uniforms, cum)

    phi = (nkw + beta_val) / (nk[:, None] + V * beta_val)
    doc_len = ndk.sum(axis=1)
    theta = (ndk + alpha_vec[None, :]) / (doc_len[:, None] + alpha_vec.sum())
    return TopicModel(K=K, vocab=vocab, phi=phi, theta=theta, alpha=alpha_vec, beta=beta_val,
                      seed=seed, iterations=iterations, assignments=z,
                      doc_topic_counts=ndk, topic_word_counts=nkw)


def coherence(model: TopicModel, corpus: list[list[str]], top_m: int = 10):
    """Document co-occurrence coherence per topic, plus the mean over topics.

    For each topic's top words ranked by probability, sums
    ln((D(w_i, w_j) + 1) / D(w_j)) over pairs where w_j ranks above w_i,
    D being the document frequency in ``corpus``. Words that never occur are
    excluded with a warning.
    """
    if top_m > len(model.vocab):
        raise ParameterError(f"top_m={top_m} exceeds vocabulary size {len(model.vocab)}")
    doc_sets = [set(doc) for doc in corpus]

    def doc_freq(word):
        return sum(1 for s in doc_sets if word in s)

    per_topic = []
    for t in range(model.K):
        words = model.top_words(t, top_m)
        kept = [w for w in words if doc_freq(w) > 0]
        if len(kept) < len(words):
            warnings.warn(f"topic {t}: {len(words) - len(kept)} top word(s) have zero "
                          "document frequency and were excluded from coherence")
        score = 0.0
        for m_i in range(1, len(kept)):
            for l_i in range(m_i):
                joint = sum(1 for s in doc_sets if kept[m_i] in s and kept[l_i] in s)
                score += math.log((joint + 1.0) / doc_freq(kept[l_i]))
        per_topic.append(score)
    mean = float(np.mean(per_topic)) if per_topic else 0.0
    return per_topic, mean


@dataclass
class GridCell:
    K: int
    alpha_spec: object
    beta_spec: object
    mean_coherence: float
    seed: int


@dataclass
class GridResult:
    best: TopicModel
    best_cell: GridCell
    table: list[GridCell]


def grid_search_lda(corpus: list[list[str]], K_range, alpha_grid, beta_grid,
                    seed: int = 0, iterations: int = 100, top_m: int = 10) -> GridResult:
    """Fit every (K, alpha, beta) cell and keep the highest mean coherence.

    Ties break toward smaller K, then earlier grid order. Each cell gets its
    own derived seed so chains are independent but reproducible.
    """
    Ks = list(K_range)
    alphas = list(alpha_grid)
    betas = list(beta_grid)
    if not Ks or not alphas or not betas:
        raise ParameterError("grids must be nonempty")
    cells = []
    order = 0
    for K in sorted(set(Ks)):
        for a in alphas:
            for b in betas:
                cells.append((K, a, b, order))
                order += 1
    best_model, best_cell, table = None, None, []
    for K, a, b, order in cells:
        cell_seed = int(np.random.SeedSequence([seed, order]).generate_state(1)[0])
        model = fit_lda(corpus, K, alpha=a, beta=b, iterations=iterations, seed=cell_seed)
        _, mean_c = coherence(model, corpus, top_m=min(top_m, len(model.vocab)))
        cell = GridCell(K=K, alpha_spec=a, beta_spec=b, mean_coherence=mean_c, seed=cell_seed)
        table.append(cell)
        if best_cell is None or mean_c > best_cell.mean_coherence:
            best_model, best_cell = model, cell
    return GridResult(best=best_model, best_cell=best_cell, table=table)


def fold_in(model: TopicModel, tokens: list[str], iterations: int = 25,
            seed: int | None = None) -> np.ndarray | None:
    """Infer a topic mixture for an out-of-corpus document with fixed phi counts."""
    index = {tok: i for i, tok in enumerate(model.vocab)}
    words = np.asarray([index[t] for t in tokens if t in index], dtype=np.int64)
    if words.size == 0:
        return None
    rng = np.random.default_rng(model.seed + 1 if seed is None else seed)
    z = rng.integers(0, model.K, size=words.size)
    local = np.zeros(model.K)
    for k in z:
        local[k] += 1.0
    V = len(model.vocab)
    v_beta = V * model.beta
    for _ in range(iterations):
        us = rng.random(words.size)
        for i in range(words.size):
            local[z[i]] -= 1.0
            p = (local + model.alpha) * (model.topic_word_counts[:, words[i]] + model.beta) \
                / (model.topic_word_counts.sum(axis=1) + v_beta)
            cum = np.cumsum(p)
            z[i] = int(np.searchsorted(cum, us[i] * cum[-1], side="right"))
            z[i] = min(z[i], model.K - 1)
            local[z[i]] += 1.0
    theta = (local + model.alpha) / (words.size + model.alpha.sum())
    return theta


def dominant_topic(model: TopicModel, doc) -> int | None:
    """Largest-share topic for a corpus index or raw token list (0-based id).

    Ties break to the lowest topic id; empty or fully out-of-vocabulary
    documents return None.
    """
    if isinstance(doc, (int, np.integer)):
        theta = model.theta[int(doc)]
        if model.doc_topic_counts is not None and model.doc_topic_counts[int(doc)].sum() == 0:
            return None
    else:
        theta = fold_in(model, list(doc))
        if theta is None:
            return None
    return int(np.argmax(theta))


@dataclass
class TopicSentimentTable:
    counties: list[str]
    n_topics: int
    values: np.ndarray       # (counties, topics) engagement-weighted mean compound
    missing: np.ndarray      # bool per county: no documents at all

    def column_names(self) -> list[str]:
        return [f"tweet_sentiment_topic{t}" for t in range(self.n_topics)]


def county_topic_sentiment(docs: list[Document], model: TopicModel, lexicon: dict[str, float],
                           counties: list[str] | None = None,
                           negators=None, boosters=None) -> TopicSentimentTable:
    """Engagement-weighted mean compound per (county, dominant topic).

    ``docs`` must align with the model's training corpus by position. Counties
    with no documents get neutral zeros and a missing flag, mirroring the
    neutral-default convention used for news tone.
    """
    if counties is None:
        counties = sorted({d.county for d in docs})
    cindex = {c: i for i, c in enumerate(counties)}
    sums = np.zeros((len(counties), model.K))
    weights = np.zeros((len(counties), model.K))
    seen = np.zeros(len(counties), dtype=bool)
    for i, doc in enumerate(docs):
        if doc.county not in cindex:
            continue
        ci = cindex[doc.county]
        seen[ci] = True
        topic = dominant_topic(model, i)
        if topic is None:
            continue
        score = score_sentiment(doc, lexicon, negators=negators, boosters=boosters)
        sums[ci, topic] += score.engagement_weight * score.compound
        weights[ci, topic] += score.engagement_weight
    values = np.divide(sums, weights, out=np.zeros_like(sums), where=weights > 0)
    return TopicSentimentTable(counties=list(counties), n_topics=model.K,
                               values=values, missing=~seen)


def county_news_tone(tones: list[ToneRecord], counties: list[str] | None = None):
    """Mean article tone per county after per-article-id deduplication.

    Returns (tone dict, rejected records). Counties without articles get the
    neutral tone of zero.
    """
    rejected = []
    seen_ids = set()
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for rec in tones:
        if not -100.0 <= rec.tone <= 100.0:
            rejected.append((rec.article_id, f"tone {rec.tone} outside [-100, 100]"))
            continue
        if rec.article_id in seen_ids:
            continue
        seen_ids.add(rec.article_id)
        sums[rec.county] = sums.get(rec.county, 0.0) + rec.tone
        counts[rec.county] = counts.get(rec.county, 0) + 1
    universe = counties if counties is not None else sorted(sums)
    result = {c: (sums[c] / counts[c] if c in counts else 0.0) for c in universe}
    return result, rejected


def read_tweets_csv(path) -> list[Document]:
    header, rows = read_csv(path)
    expected = ["id", "fips", "text", "likes", "retweets", "replies"]
    if [h.strip() for h in header[:6]] != expected:
        raise DataError(f"tweet header must be {','.join(expected)}, got {header}")
    return [Document(id=r[0], county=r[1], text=r[2],
                     likes=int(r[3] or 0), retweets=int(r[4] or 0), replies=int(r[5] or 0))
            for r in rows]


def read_tones_csv(path) -> list[ToneRecord]:
    header, rows = read_csv(path)
    expected = ["article_id", "fips", "tone"]
    if [h.strip() for h in header[:3]] != expected:
        raise DataError(f"tone header must be {','.join(expected)}, got {header}")
    return [ToneRecord(article_id=r[0], county=r[1], tone=float(r[2])) for r in rows]
