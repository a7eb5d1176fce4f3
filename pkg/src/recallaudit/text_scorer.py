"""
Text Scorer - Unigram logistic regression and keyword-filter emulation
Part of recallaudit pipeline

The scorer doubles as a binning classifier; its highest-weight unigrams make
the keyword filter that stands in for an automated moderation system.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.feature_extraction.text import CountVectorizer

from .errors import InvalidInputError
from .estimation import PooledItem
from .recall_report import ConfusionCounts

logger = logging.getLogger(__name__)

# lowercase, runs of letters/digits, presence features
TOKEN_PATTERN = r"[^\W_]+"


def _vectorizer() -> CountVectorizer:
    return CountVectorizer(lowercase=True, token_pattern=TOKEN_PATTERN, binary=True, dtype=np.float64)


_analyzer = _vectorizer().build_analyzer()


def tokenize(text: str) -> List[str]:
    return _analyzer(text)


@dataclass(frozen=True)
class ScorerHyperparams:
    """
    Training settings. ``solver`` is ``lbfgs`` (quasi-Newton on the
    gradient) or ``gd`` (fixed-step full-batch gradient descent).
    """
    l2: float = 1e-4
    solver: str = "lbfgs"
    learning_rate: float = 0.5
    epochs: int = 2000
    balance: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.solver not in ("lbfgs", "gd"):
            raise InvalidInputError(f"unknown solver {self.solver!r}")
        if self.l2 < 0 or self.learning_rate <= 0 or self.epochs < 1:
            raise InvalidInputError("invalid scorer hyperparameters")


@dataclass
class UnigramScorer:
    """Logistic regression over unigram presence"""
    vectorizer: CountVectorizer
    weights: np.ndarray
    bias: float
    vocabulary: Tuple[str, ...] = field(default=())

    def score(self, texts: Sequence[str]) -> np.ndarray:
        """Probability of the positive class for each text"""
        features = self.vectorizer.transform(texts)
        return expit(features @ self.weights + self.bias)

    def predict(self, texts: Sequence[str], threshold: float = 0.5) -> np.ndarray:
        return (self.score(texts) >= threshold).astype(np.int64)

    def top_features(self, k: int) -> List[Tuple[str, float]]:
        """The k highest-weight unigrams, ties broken alphabetically"""
        if k < 1:
            raise InvalidInputError(f"k must be >= 1, got {k}")
        if k > len(self.vocabulary):
            logger.warning(f"Requested {k} keywords but the vocabulary has {len(self.vocabulary)}")
            k = len(self.vocabulary)
        order = sorted(range(len(self.vocabulary)), key=lambda j: (-self.weights[j], self.vocabulary[j]))
        return [(self.vocabulary[j], float(self.weights[j])) for j in order[:k]]


def _balanced_indices(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Subsample the majority class down to the minority class size"""
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)
    if negatives.size > positives.size:
        negatives = np.sort(rng.choice(negatives, size=positives.size, replace=False))
    elif positives.size > negatives.size:
        positives = np.sort(rng.choice(positives, size=negatives.size, replace=False))
    return np.sort(np.concatenate([positives, negatives]))


def _loss_and_gradient(params: np.ndarray, features, labels: np.ndarray, l2: float):
    weights, bias = params[:-1], params[-1]
    logits = features @ weights + bias
    n = labels.size
    # log(1 + e^z) - y·z, stable
    loss = float(np.sum(np.logaddexp(0.0, logits) - labels * logits)) / n
    loss += 0.5 * l2 * float(weights @ weights)
    residual = (expit(logits) - labels) / n
    grad = np.empty_like(params)
    grad[:-1] = features.T @ residual + l2 * weights
    grad[-1] = residual.sum()
    return loss, grad


def train_unigram_scorer(corpus: Sequence[Tuple[str, int]],
                         hyperparams: Optional[ScorerHyperparams] = None) -> UnigramScorer:
    """
    Train a unigram logistic-regression scorer

    Args:
        corpus: (text, label) pairs with both classes present
        hyperparams: Training settings; balanced subsampling by default

    Returns:
        UnigramScorer: deterministic for a fixed seed
    """
    hyperparams = hyperparams or ScorerHyperparams()
    if not corpus:
        raise InvalidInputError("cannot train on an empty corpus")
    texts = [text for text, _ in corpus]
    labels = np.array([label for _, label in corpus], dtype=float)
    if np.any((labels != 0) & (labels != 1)):
        raise InvalidInputError("corpus labels must be binary")
    if labels.min() == labels.max():
        raise InvalidInputError("corpus must contain both classes")

    rng = np.random.default_rng(hyperparams.seed)
    if hyperparams.balance:
        keep = _balanced_indices(labels.astype(np.int64), rng)
        texts = [texts[i] for i in keep]
        labels = labels[keep]
        logger.debug(f"Balanced training set: {labels.size} texts")

    vectorizer = _vectorizer()
    features = vectorizer.fit_transform(texts).tocsr()
    vocabulary = tuple(vectorizer.get_feature_names_out())
    params = np.zeros(features.shape[1] + 1)

    if hyperparams.solver == "lbfgs":
        result = minimize(
            _loss_and_gradient, params, args=(features, labels, hyperparams.l2),
            jac=True, method="L-BFGS-B", options={"maxiter": hyperparams.epochs},
        )
        if not result.success:
            logger.warning(f"Scorer training did not converge: {result.message}")
        params = result.x
    else:
        for _ in range(hyperparams.epochs):
            _, grad = _loss_and_gradient(params, features, labels, hyperparams.l2)
            params -= hyperparams.learning_rate * grad

    return UnigramScorer(
        vectorizer=vectorizer,
        weights=params[:-1].copy(),
        bias=float(params[-1]),
        vocabulary=vocabulary,
    )


@dataclass(frozen=True)
class KeywordFilter:
    """Removes any text containing at least one keyword"""
    keywords: Tuple[str, ...]

    def removes(self, text: str) -> bool:
        keywords = set(self.keywords)
        return any(token in keywords for token in tokenize(text))

    def partition(self, texts: Sequence[str]) -> Tuple[List[int], List[int]]:
        """(removed, visible) positions"""
        keywords = set(self.keywords)
        removed, visible = [], []
        for i, text in enumerate(texts):
            (removed if keywords.intersection(tokenize(text)) else visible).append(i)
        return removed, visible

    def confusion(self, corpus: Sequence[Tuple[str, int]]) -> ConfusionCounts:
        """Exact confusion counts of the filter over a labeled corpus"""
        removed, visible = self.partition([text for text, _ in corpus])
        tp = sum(corpus[i][1] for i in removed)
        fn = sum(corpus[i][1] for i in visible)
        return ConfusionCounts(tp=tp, fp=len(removed) - tp, tn=len(visible) - fn, fn=fn)


def build_keyword_filter(scorer: UnigramScorer, k: int = 10) -> KeywordFilter:
    """Filter on the k highest-weight unigrams of the scorer"""
    keywords = tuple(token for token, _ in scorer.top_features(k))
    logger.info(f"Keyword filter: {', '.join(keywords)}")
    return KeywordFilter(keywords)


def score_pool_from_corpus(corpus: Sequence[Tuple[str, int]], scorer: UnigramScorer,
                           keyword_filter: KeywordFilter, id_prefix: str = "text") -> List[PooledItem]:
    """
    Scored pool over a labeled corpus, items flagged as filtered when the
    keyword filter removes them
    """
    texts = [text for text, _ in corpus]
    scores = np.clip(scorer.score(texts), 0.0, 1.0)
    removed, _ = keyword_filter.partition(texts)
    removed = set(removed)
    width = len(str(max(len(corpus) - 1, 0)))
    return [
        PooledItem(
            id=f"{id_prefix}-{i:0{width}d}",
            score=float(scores[i]),
            label=int(label),
            filtered=i in removed,
        )
        for i, (_, label) in enumerate(corpus)
    ]
