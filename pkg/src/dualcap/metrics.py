"""Caption evaluation: corpus BLEU, ROUGE-L, CIDEr, exact-match METEOR.

All metrics tokenize with the shared caption tokenizer and score one
hypothesis per video against that video's reference list.

BLEU is corpus-level with clipped n-gram counts, closest-reference effective
length (ties to the shorter reference), and no smoothing: a zero n-gram
precision zeroes BLEU-n for that and every higher order. ROUGE-L is the
LCS F-measure (beta = 1.2), best reference per video, averaged over videos.
CIDEr is the base tf-idf cosine variant: idf treats one video's reference
set as one document, per-order similarities are averaged over references,
then videos, then orders, and scaled by ten. METEOR uses exact surface
matches only: unigram F with recall weighted nine to one, times a fragmen-
tation penalty 0.5 * (chunks / matches)^3 where chunks is minimized over
all maximum-size alignments.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ValidationError
from .text import tokenize

MAX_NGRAM_ORDER = 4
ROUGE_BETA = 1.2
METEOR_RECALL_WEIGHT = 9.0
METEOR_PENALTY_WEIGHT = 0.5
METEOR_PENALTY_POWER = 3
CIDER_SCALE = 10.0


@dataclass(frozen=True)
class BleuReport:
    """Corpus BLEU-1..4 plus the intermediate quantities tests care about."""

    scores: tuple[float, float, float, float]
    precisions: tuple[float, float, float, float]
    clipped_matches: tuple[int, int, int, int]
    candidate_counts: tuple[int, int, int, int]
    brevity_penalty: float
    hypothesis_length: int
    reference_length: int


@dataclass
class EvalReport:
    bleu: BleuReport
    rouge_l: float
    cider: float
    cider_by_order: tuple[float, float, float, float]
    meteor: float
    videos: int
    per_video: dict[str, dict[str, float]] = field(default_factory=dict)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypotheses: Mapping[str, Sequence[str]], references: Mapping[str, Sequence[Sequence[str]]]
) -> BleuReport:
    """Corpus BLEU over pre-tokenized captions keyed by video id."""
    if not hypotheses:
        raise ValidationError("evaluation corpus has no videos")
    matches = [0] * MAX_NGRAM_ORDER
    totals = [0] * MAX_NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    for video_id in hypotheses:
        hyp = list(hypotheses[video_id])
        refs = [list(r) for r in references[video_id]]
        hyp_len += len(hyp)
        # Effective reference length: closest to the hypothesis, ties shorter.
        ref_len += min((len(r) for r in refs), key=lambda L: (abs(L - len(hyp)), L))
        for n in range(1, MAX_NGRAM_ORDER + 1):
            counts = _ngram_counts(hyp, n)
            if not counts:
                continue
            ceiling: Counter = Counter()
            for ref in refs:
                for gram, count in _ngram_counts(ref, n).items():
                    if count > ceiling[gram]:
                        ceiling[gram] = count
            matches[n - 1] += sum(min(c, ceiling[g]) for g, c in counts.items())
            totals[n - 1] += sum(counts.values())

    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    scores = []
    log_sum = 0.0
    dead = False
    for n in range(1, MAX_NGRAM_ORDER + 1):
        p = precisions[n - 1]
        if p == 0.0:
            dead = True  # no smoothing: this and all higher orders score zero
        if dead:
            scores.append(0.0)
        else:
            log_sum += math.log(p)
            scores.append(bp * math.exp(log_sum / n))
    return BleuReport(
        scores=tuple(scores),
        precisions=precisions,
        clipped_matches=tuple(matches),
        candidate_counts=tuple(totals),
        brevity_penalty=bp,
        hypothesis_length=hyp_len,
        reference_length=ref_len,
    )


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, 1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[-1]


def rouge_l_pair(hyp: Sequence[str], ref: Sequence[str]) -> float:
    lcs = _lcs_len(hyp, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    beta_sq = ROUGE_BETA * ROUGE_BETA
    return (1 + beta_sq) * precision * recall / (recall + beta_sq * precision)


def rouge_l(
    hypotheses: Mapping[str, Sequence[str]], references: Mapping[str, Sequence[Sequence[str]]]
) -> tuple[float, dict[str, float]]:
    """Mean over videos of the best-reference LCS F-measure."""
    if not hypotheses:
        raise ValidationError("evaluation corpus has no videos")
    per_video = {}
    for video_id in hypotheses:
        hyp = hypotheses[video_id]
        per_video[video_id] = max(rouge_l_pair(hyp, ref) for ref in references[video_id])
    return sum(per_video.values()) / len(per_video), per_video


def cider(
    hypotheses: Mapping[str, Sequence[str]], references: Mapping[str, Sequence[Sequence[str]]]
) -> tuple[float, tuple[float, ...], dict[str, float]]:
    """Base CIDEr: mean tf-idf cosine per order, averaged and scaled by ten.

    Each video's reference set is one idf document; a gram absent from every
    reference set keeps a document frequency floor of one.
    """
    if not hypotheses:
        raise ValidationError("evaluation corpus has no videos")
    video_ids = list(hypotheses)
    n_videos = len(video_ids)
    log_videos = math.log(n_videos)

    doc_freq: list[Counter] = [Counter() for _ in range(MAX_NGRAM_ORDER)]
    ref_counts: dict[str, list[list[Counter]]] = {}
    for video_id in video_ids:
        per_ref = [
            [_ngram_counts(ref, n) for n in range(1, MAX_NGRAM_ORDER + 1)]
            for ref in references[video_id]
        ]
        ref_counts[video_id] = per_ref
        for n in range(MAX_NGRAM_ORDER):
            seen = set()
            for counts in per_ref:
                seen.update(counts[n])
            for gram in seen:
                doc_freq[n][gram] += 1

    def tf_idf(counts: Counter, n: int) -> tuple[dict, float]:
        vec = {}
        norm_sq = 0.0
        for gram, count in counts.items():
            weight = count * (log_videos - math.log(max(doc_freq[n][gram], 1)))
            vec[gram] = weight
            norm_sq += weight * weight
        return vec, math.sqrt(norm_sq)

    per_order_sums = [0.0] * MAX_NGRAM_ORDER
    per_video: dict[str, float] = {}
    for video_id in video_ids:
        hyp = hypotheses[video_id]
        video_total = 0.0
        for n in range(MAX_NGRAM_ORDER):
            hyp_vec, hyp_norm = tf_idf(_ngram_counts(hyp, n + 1), n)
            sim_sum = 0.0
            for counts in ref_counts[video_id]:
                ref_vec, ref_norm = tf_idf(counts[n], n)
                if hyp_norm == 0.0 or ref_norm == 0.0:
                    continue
                dot = sum(w * ref_vec[g] for g, w in hyp_vec.items() if g in ref_vec)
                sim_sum += dot / (hyp_norm * ref_norm)
            sim = sim_sum / len(ref_counts[video_id])
            per_order_sums[n] += sim
            video_total += sim
        per_video[video_id] = CIDER_SCALE * video_total / MAX_NGRAM_ORDER
    by_order = tuple(s / n_videos for s in per_order_sums)
    score = CIDER_SCALE * sum(by_order) / MAX_NGRAM_ORDER
    return score, by_order, per_video


def _min_chunks(hyp: Sequence[str], ref: Sequence[str], quota: Counter) -> int:
    """Fewest contiguous runs over all maximum-size exact alignments.

    A run continues only while matches are adjacent in both sentences, so a
    skipped hypothesis token always breaks it. Depth-first search over
    hypothesis positions: each position either takes a free reference slot of
    the same word or is skipped when the remaining occurrences still cover
    the word's quota. Extending the current run is tried first and branches
    at or above the best chunk count are cut.
    """
    positions: dict[str, list[int]] = {}
    for j, w in enumerate(ref):
        positions.setdefault(w, []).append(j)
    rem_hyp = Counter(hyp)
    need = Counter(quota)
    best = sum(quota.values()) + 1

    def search(i: int, used: int, prev: int, chunks: int) -> None:
        nonlocal best
        if chunks >= best:
            return
        if i == len(hyp):
            if not +need:  # all quotas spent
                best = chunks
            return
        w = hyp[i]
        if need[w] > 0:
            slots = positions.get(w, ())
            cont = prev + 1
            ordered = [j for j in slots if j == cont] + [j for j in slots if j != cont]
            for j in ordered:
                if used & (1 << j):
                    continue
                need[w] -= 1
                rem_hyp[w] -= 1
                search(i + 1, used | (1 << j), j, chunks + (0 if j == cont else 1))
                need[w] += 1
                rem_hyp[w] += 1
        if rem_hyp[w] - 1 >= need[w]:
            rem_hyp[w] -= 1
            search(i + 1, used, -2, chunks)
            rem_hyp[w] += 1

    search(0, 0, -2, 0)
    return best


def meteor_pair(hyp: Sequence[str], ref: Sequence[str]) -> float:
    hyp_counts = Counter(hyp)
    ref_counts = Counter(ref)
    quota = Counter({w: min(c, ref_counts[w]) for w, c in hyp_counts.items() if w in ref_counts})
    quota = +quota
    m = sum(quota.values())
    if m == 0:
        return 0.0
    precision = m / len(hyp)
    recall = m / len(ref)
    f_mean = (
        (1 + METEOR_RECALL_WEIGHT) * precision * recall
        / (recall + METEOR_RECALL_WEIGHT * precision)
    )
    chunks = _min_chunks(hyp, ref, quota)
    penalty = METEOR_PENALTY_WEIGHT * (chunks / m) ** METEOR_PENALTY_POWER
    return f_mean * (1.0 - penalty)


def meteor(
    hypotheses: Mapping[str, Sequence[str]], references: Mapping[str, Sequence[Sequence[str]]]
) -> tuple[float, dict[str, float]]:
    """Mean over videos of the best-reference exact-match METEOR."""
    if not hypotheses:
        raise ValidationError("evaluation corpus has no videos")
    per_video = {}
    for video_id in hypotheses:
        hyp = hypotheses[video_id]
        per_video[video_id] = max(meteor_pair(hyp, ref) for ref in references[video_id])
    return sum(per_video.values()) / len(per_video), per_video


def _validate_corpus(
    hypotheses: Mapping[str, str], references: Mapping[str, Sequence[str]]
) -> None:
    if not hypotheses:
        raise ValidationError("evaluation corpus has no videos")
    for video_id, text in hypotheses.items():
        if not isinstance(text, str):
            raise ValidationError(f"hypothesis for {video_id!r} is not a string")
    missing = sorted(v for v in hypotheses if v not in references)
    if missing:
        raise ValidationError(f"videos missing references: {', '.join(missing)}")
    for video_id in hypotheses:
        refs = references[video_id]
        if not refs:
            raise ValidationError(f"video {video_id!r} has an empty reference list")
        if any(not isinstance(r, str) for r in refs):
            raise ValidationError(f"video {video_id!r} has a non-string reference")


def evaluate(
    hypotheses: Mapping[str, str], references: Mapping[str, Sequence[str]]
) -> EvalReport:
    """Score every hypothesis against its video's references.

    Raises ValidationError on an empty corpus or hypotheses without
    references; reference entries for videos outside the hypothesis set are
    ignored.
    """
    _validate_corpus(hypotheses, references)
    order = sorted(hypotheses)
    hyp_tokens = {v: tokenize(hypotheses[v]) for v in order}
    ref_tokens = {v: [tokenize(r) for r in references[v]] for v in order}

    bleu_report = bleu(hyp_tokens, ref_tokens)
    rouge_score, rouge_per = rouge_l(hyp_tokens, ref_tokens)
    cider_score, cider_orders, cider_per = cider(hyp_tokens, ref_tokens)
    meteor_score, meteor_per = meteor(hyp_tokens, ref_tokens)
    per_video = {
        v: {"rouge_l": rouge_per[v], "cider": cider_per[v], "meteor": meteor_per[v]}
        for v in order
    }
    return EvalReport(
        bleu=bleu_report,
        rouge_l=rouge_score,
        cider=cider_score,
        cider_by_order=cider_orders,
        meteor=meteor_score,
        videos=len(order),
        per_video=per_video,
    )


def report_to_dict(report: EvalReport, verbose: bool = False) -> dict:
    """JSON-ready report: the seven headline scores rounded to four decimals,
    plus a per-video breakdown under "details" when verbose."""
    payload = {
        "bleu_1": round(report.bleu.scores[0], 4),
        "bleu_2": round(report.bleu.scores[1], 4),
        "bleu_3": round(report.bleu.scores[2], 4),
        "bleu_4": round(report.bleu.scores[3], 4),
        "meteor": round(report.meteor, 4),
        "rouge_l": round(report.rouge_l, 4),
        "cider": round(report.cider, 4),
    }
    if verbose:
        payload["details"] = {
            v: {k: round(x, 4) for k, x in stats.items()}
            for v, stats in report.per_video.items()
        }
    return payload


def write_report(path: str | Path, report: EvalReport, verbose: bool = False) -> None:
    text = json.dumps(report_to_dict(report, verbose), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")
