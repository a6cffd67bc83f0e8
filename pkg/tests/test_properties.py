"""Property tests over the pure text/metric functions."""

from hypothesis import given, settings
from hypothesis import strategies as st

from trafficap.metrics import EvalCorpus, bleu4, cider, meteor, rouge_l
from trafficap.stemmer import stem
from trafficap.vocab import tokenize

_token = st.text(alphabet="abcdefgh", min_size=1, max_size=6)
_token_list = st.lists(_token, min_size=1, max_size=10)


@st.composite
def corpora(draw, min_items=1):
    n = draw(st.integers(min_value=min_items, max_value=5))
    items = []
    for _ in range(n):
        candidate = draw(_token_list)
        references = draw(st.lists(_token_list, min_size=1, max_size=3))
        items.append((candidate, references))
    return EvalCorpus(items)


@given(corpora())
@settings(max_examples=60, deadline=None)
def test_bounded_metrics_stay_in_range(corpus):
    assert 0.0 <= bleu4(corpus) <= 1.0
    assert 0.0 <= meteor(corpus) <= 1.0
    assert 0.0 <= rouge_l(corpus) <= 1.0


@given(corpora(min_items=2))
@settings(max_examples=40, deadline=None)
def test_cider_non_negative_and_capped(corpus):
    score, per_item = cider(corpus)
    assert score >= 0.0
    assert all(s >= -1e-12 for s in per_item)
    # Each per-item score is at most 10 (cosine 1 per order, penalty <= 1).
    assert all(s <= 10.0 + 1e-9 for s in per_item)


@given(_token_list)
@settings(max_examples=100, deadline=None)
def test_identical_candidate_scores_perfect_rouge(tokens):
    corpus = EvalCorpus([(tokens, [list(tokens)])])
    assert rouge_l(corpus) == 1.0


@given(st.text(max_size=60))
@settings(max_examples=150, deadline=None)
def test_tokenize_output_is_fixed_point(text):
    tokens = tokenize(text)
    assert tokenize(" ".join(tokens)) == tokens
    assert all(tok == tok.lower() and tok.isalnum() for tok in tokens)


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=15))
@settings(max_examples=200, deadline=None)
def test_stemmer_total_and_contracting(word):
    result = stem(word)
    assert isinstance(result, str)
    assert 0 < len(result) <= len(word) + 1  # +1: step 1b can append an 'e'
    assert stem(word) == result  # pure
