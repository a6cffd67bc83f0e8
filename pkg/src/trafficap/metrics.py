"""Corpus-level caption metrics: BLEU-4, METEOR, ROUGE-L, and CIDEr-D.

All four are implemented from scratch over pre-tokenized captions. Callers
are expected to tokenize with :func:`trafficap.vocab.tokenize` so model
output and references are scored in the same token space.

METEOR runs the exact and Porter-stem matching stages only; the synonym
stage is omitted to avoid a lexical database dependency (noted in the
report header emitted by the CLI).
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import TooFewItems
from .stemmer import stem

TokenList = list[str]

CIDER_SIGMA = 6.0
CIDER_SCALE = 10.0
ROUGE_BETA = 1.2
MAX_NGRAM_ORDER = 4


@dataclass
class EvalCorpus:
    """Candidate/reference pairs; every item needs at least one reference."""

    items: list[tuple[TokenList, list[TokenList]]]

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("corpus must contain at least one item")
        for candidate, references in self.items:
            if not references:
                raise ValueError("every item needs at least one reference")
            if not isinstance(candidate, list):
                raise TypeError("candidate must be a token list")


@dataclass
class ScoreReport:
    bleu4: float
    meteor: float
    rouge_l: float
    cider: float
    per_item: dict[str, list[float]] = field(default_factory=dict)
    notes: tuple[str, ...] = ("meteor: exact+stem stages, no synonym stage",)

    def to_dict(self) -> dict:
        return {
            "bleu4": self.bleu4,
            "meteor": self.meteor,
            "rouge_l": self.rouge_l,
            "cider": self.cider,
            "per_item": self.per_item,
            "notes": list(self.notes),
        }


def _ngram_counts(tokens: TokenList, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(corpus: EvalCorpus, smooth: bool = False) -> float:
    """Corpus BLEU with clipped n-gram precision (n=1..4) and brevity penalty.

    The reference length is the per-item closest to the candidate length
    (ties go to the shorter reference). Without smoothing, a zero clipped
    count at any order gives a score of 0; with smooth=True each precision
    gets additive-1 smoothing.
    """
    clipped = [0] * MAX_NGRAM_ORDER
    totals = [0] * MAX_NGRAM_ORDER
    cand_len = 0
    ref_len = 0
    for candidate, references in corpus.items:
        cand_len += len(candidate)
        ref_len += min(
            (abs(len(r) - len(candidate)), len(r)) for r in references
        )[1]
        for n in range(1, MAX_NGRAM_ORDER + 1):
            counts = _ngram_counts(candidate, n)
            max_ref = Counter()
            for ref in references:
                for gram, cnt in _ngram_counts(ref, n).items():
                    if cnt > max_ref[gram]:
                        max_ref[gram] = cnt
            totals[n - 1] += max(0, len(candidate) - n + 1)
            clipped[n - 1] += sum(
                min(cnt, max_ref[gram]) for gram, cnt in counts.items()
            )
    log_precision = 0.0
    for n in range(MAX_NGRAM_ORDER):
        num, den = clipped[n], totals[n]
        if smooth:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_precision += math.log(num / den) / MAX_NGRAM_ORDER
    if cand_len == 0:
        return 0.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision)


def _meteor_align(candidate: TokenList, reference: TokenList) -> list[tuple[int, int]]:
    """Greedy two-stage unigram alignment: exact match first, then stems.

    Each stage scans candidate positions left to right and pairs each with
    the leftmost unmatched reference token.
    """
    matched_cand: set[int] = set()
    matched_ref: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for key in (lambda t: t, stem):
        ref_keys = [key(t) for t in reference]
        for ci, token in enumerate(candidate):
            if ci in matched_cand:
                continue
            want = key(token)
            for ri, have in enumerate(ref_keys):
                if ri not in matched_ref and have == want:
                    matched_cand.add(ci)
                    matched_ref.add(ri)
                    pairs.append((ci, ri))
                    break
    return sorted(pairs)


def _meteor_item(candidate: TokenList, references: list[TokenList]) -> float:
    best = 0.0
    for reference in references:
        if not candidate or not reference:
            continue
        pairs = _meteor_align(candidate, reference)
        matches = len(pairs)
        if matches == 0:
            continue
        precision = matches / len(candidate)
        recall = matches / len(reference)
        f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
        chunks = 1
        for (pc, pr), (nc, nr) in zip(pairs, pairs[1:]):
            if nc != pc + 1 or nr != pr + 1:
                chunks += 1
        penalty = 0.5 * (chunks / matches) ** 3
        best = max(best, f_mean * (1.0 - penalty))
    return best


def meteor(corpus: EvalCorpus) -> float:
    scores = [_meteor_item(c, refs) for c, refs in corpus.items]
    return sum(scores) / len(scores)


def _lcs_length(a: TokenList, b: TokenList) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ai in a:
        cur = [0]
        for j, bj in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if ai == bj else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def _rouge_item(candidate: TokenList, references: list[TokenList]) -> float:
    best = 0.0
    for reference in references:
        if not candidate or not reference:
            continue
        lcs = _lcs_length(candidate, reference)
        if lcs == 0:
            continue
        precision = lcs / len(candidate)
        recall = lcs / len(reference)
        beta_sq = ROUGE_BETA**2
        score = (1 + beta_sq) * recall * precision / (recall + beta_sq * precision)
        best = max(best, score)
    return best


def rouge_l(corpus: EvalCorpus) -> float:
    scores = [_rouge_item(c, refs) for c, refs in corpus.items]
    return sum(scores) / len(scores)


def _stemmed_counts(tokens: TokenList) -> list[Counter]:
    stems = [stem(t) for t in tokens]
    return [_ngram_counts(stems, n) for n in range(1, MAX_NGRAM_ORDER + 1)]


def _tfidf(
    counts: list[Counter], idf: list[dict], default_idf: float
) -> tuple[list[dict], list[float]]:
    """default_idf covers grams unseen in every reference (df floored at 1)."""
    vectors: list[dict] = []
    norms: list[float] = []
    for n in range(MAX_NGRAM_ORDER):
        vec = {
            gram: cnt * idf[n].get(gram, default_idf)
            for gram, cnt in counts[n].items()
        }
        vectors.append(vec)
        norms.append(math.sqrt(sum(v * v for v in vec.values())))
    return vectors, norms


def cider(corpus: EvalCorpus) -> tuple[float, list[float]]:
    """CIDEr-D: stemmed TF-IDF n-gram cosine with clipping, length penalty
    exp(-(lc-lr)^2 / (2*sigma^2)) with sigma=6, scaled by 10.

    IDF is log(|corpus| / #items whose references contain the n-gram), with
    the document frequency floored at 1, so a corpus of at least two items
    is required. Returns (corpus mean, per-item scores).
    """
    n_items = len(corpus.items)
    if n_items < 2:
        raise TooFewItems("CIDEr IDF needs at least 2 corpus items")
    doc_freq: list[defaultdict] = [defaultdict(int) for _ in range(MAX_NGRAM_ORDER)]
    cooked_refs = []
    cooked_cands = []
    for candidate, references in corpus.items:
        ref_counts = [_stemmed_counts(r) for r in references]
        cooked_refs.append(ref_counts)
        cooked_cands.append(_stemmed_counts(candidate))
        for n in range(MAX_NGRAM_ORDER):
            seen = set()
            for counts in ref_counts:
                seen.update(counts[n].keys())
            for gram in seen:
                doc_freq[n][gram] += 1
    idf = [
        {gram: math.log(n_items / max(1, df)) for gram, df in doc_freq[n].items()}
        for n in range(MAX_NGRAM_ORDER)
    ]
    default_idf = math.log(n_items)

    per_item: list[float] = []
    for (candidate, references), cand_counts, ref_counts in zip(
        corpus.items, cooked_cands, cooked_refs
    ):
        cand_vec, cand_norm = _tfidf(cand_counts, idf, default_idf)
        item_score = 0.0
        for reference, counts in zip(references, ref_counts):
            ref_vec, ref_norm = _tfidf(counts, idf, default_idf)
            delta = len(candidate) - len(reference)
            penalty = math.exp(-(delta**2) / (2.0 * CIDER_SIGMA**2))
            for n in range(MAX_NGRAM_ORDER):
                num = sum(
                    min(val, ref_vec[n].get(gram, 0.0)) * ref_vec[n].get(gram, 0.0)
                    for gram, val in cand_vec[n].items()
                )
                if cand_norm[n] > 0 and ref_norm[n] > 0:
                    item_score += (
                        penalty * num / (cand_norm[n] * ref_norm[n]) / MAX_NGRAM_ORDER
                    )
        per_item.append(CIDER_SCALE * item_score / len(references))
    return sum(per_item) / n_items, per_item


def score_corpus(corpus: EvalCorpus, metrics: tuple[str, ...] | None = None) -> ScoreReport:
    """Compute the selected metrics (all four by default) over the corpus."""
    wanted = set(metrics) if metrics else {"bleu4", "meteor", "rouge_l", "cider"}
    unknown = wanted - {"bleu4", "meteor", "rouge_l", "cider"}
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    per_item: dict[str, list[float]] = {}
    bleu_score = bleu4(corpus) if "bleu4" in wanted else float("nan")
    meteor_score = float("nan")
    rouge_score = float("nan")
    cider_score = float("nan")
    if "meteor" in wanted:
        per_item["meteor"] = [_meteor_item(c, r) for c, r in corpus.items]
        meteor_score = sum(per_item["meteor"]) / len(per_item["meteor"])
    if "rouge_l" in wanted:
        per_item["rouge_l"] = [_rouge_item(c, r) for c, r in corpus.items]
        rouge_score = sum(per_item["rouge_l"]) / len(per_item["rouge_l"])
    if "cider" in wanted:
        cider_score, per_item["cider"] = cider(corpus)
    return ScoreReport(
        bleu4=bleu_score,
        meteor=meteor_score,
        rouge_l=rouge_score,
        cider=cider_score,
        per_item=per_item,
    )
