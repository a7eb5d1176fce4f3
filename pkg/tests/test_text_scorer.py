#!/usr/bin/env python3
"""
Test the unigram scorer, keyword filter and the filtering case study
"""

import logging

import pytest
from sklearn.metrics import roc_auc_score

from recallaudit.errors import InvalidInputError
from recallaudit.recall_report import ConfusionCounts
from recallaudit.simulation import SyntheticCorpusSpec, generate_corpus, run_case_study
from recallaudit.text_scorer import (
    KeywordFilter,
    ScorerHyperparams,
    build_keyword_filter,
    score_pool_from_corpus,
    tokenize,
    train_unigram_scorer,
)


def _toy_corpus():
    positives = [(f"toxic filler{i % 3}", 1) for i in range(12)]
    negatives = [(f"kind filler{i % 3}", 0) for i in range(12)]
    return positives + negatives


def test_tokenize():
    assert tokenize("Hello, WORLD_wide web!") == ["hello", "world", "wide", "web"]


def test_separable_corpus():
    corpus = _toy_corpus()
    scorer = train_unigram_scorer(corpus)
    predictions = scorer.predict([text for text, _ in corpus])
    assert list(predictions) == [label for _, label in corpus]
    assert scorer.top_features(1)[0][0] == "toxic"
    assert scorer.top_features(5)[-1][0] == "kind"


def test_gradient_descent_solver():
    corpus = _toy_corpus()
    scorer = train_unigram_scorer(corpus, ScorerHyperparams(solver="gd", epochs=500))
    assert scorer.score(["toxic"])[0] > 0.5 > scorer.score(["kind"])[0]


def test_keyword_filter_from_scorer(caplog):
    scorer = train_unigram_scorer(_toy_corpus())
    assert build_keyword_filter(scorer, 1).keywords == ("toxic",)
    with caplog.at_level(logging.WARNING):
        everything = build_keyword_filter(scorer, 100)
    assert len(everything.keywords) == 5
    assert "vocabulary" in caplog.text


def test_filter_ignores_unknown_tokens():
    keyword_filter = KeywordFilter(("toxic",))
    assert keyword_filter.removes("so Toxic!")
    assert not keyword_filter.removes("???")
    assert not keyword_filter.removes("toxicity")
    assert keyword_filter.partition(["toxic", "fine", "toxic fine"]) == ([0, 2], [1])


def test_training_input_checks():
    with pytest.raises(InvalidInputError):
        train_unigram_scorer([])
    with pytest.raises(InvalidInputError):
        train_unigram_scorer([("a", 1), ("b", 1)])
    with pytest.raises(InvalidInputError):
        ScorerHyperparams(solver="newton")


def test_scored_pool_flags_removals():
    corpus = _toy_corpus()
    scorer = train_unigram_scorer(corpus)
    pool = score_pool_from_corpus(corpus, scorer, KeywordFilter(("toxic",)))
    assert len(pool) == 24
    assert pool[0].id == "text-00"
    assert sum(item.filtered for item in pool) == 12
    assert all(item.label == 1 for item in pool if item.filtered)


def test_filter_confusion_matches_scored_pool():
    corpus = _toy_corpus()
    scorer = train_unigram_scorer(corpus)
    for keywords, expected in ((("toxic",), (12, 0, 12, 0)), (("filler0",), (4, 4, 8, 8))):
        keyword_filter = KeywordFilter(keywords)
        counts = keyword_filter.confusion(corpus)
        assert (counts.tp, counts.fp, counts.tn, counts.fn) == expected
        assert counts == ConfusionCounts.from_pool(score_pool_from_corpus(corpus, scorer, keyword_filter))


def test_held_out_ranking_quality():
    spec = dict(size=4000, prevalence=0.3, marker_rate_positive=0.0, marker_rate_negative=0.0,
                cue_tokens=5, cue_fidelity=0.8)
    train = generate_corpus(SyntheticCorpusSpec(seed=1, **spec))
    test = generate_corpus(SyntheticCorpusSpec(seed=2, **spec))
    scorer = train_unigram_scorer(train)
    scores = scorer.score([text for text, _ in test])
    assert roc_auc_score([label for _, label in test], scores) > 0.9


@pytest.mark.slow
def test_keyword_filter_case_study():
    corpus = generate_corpus(SyntheticCorpusSpec(seed=0))
    study = run_case_study(corpus, k=10)
    assert all(token.startswith("marker") for token in study.keyword_filter.keywords)

    keywords = set(study.keyword_filter.keywords)
    tp = fp = tn = fn = 0
    for text, label in corpus:
        removed = bool(keywords.intersection(text.split()))
        tp += removed and label == 1
        fp += removed and label == 0
        fn += not removed and label == 1
        tn += not removed and label == 0
    counts = study.counts
    assert (counts.tp, counts.fp, counts.tn, counts.fn) == (tp, fp, tn, fn)

    visible = study.visible
    assert counts.precision == pytest.approx(0.58, abs=0.02)
    assert counts.recall == pytest.approx(0.33, abs=0.02)
    assert counts.fn / len(visible) == pytest.approx(0.041, abs=0.02)
    assert counts.accuracy > 0.9
    assert len(study.removed) + len(visible) == 50_000
