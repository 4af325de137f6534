"""Two-level explanations read off the forward traces.

Within a feature class, the position-attention weights rank sentences (or
tags), and the convolution's argmax windows say which positions its filters
fired on; agreement between the two is the per-record capture statistic.
Between feature classes, the unified model's leg weights split the decision
between the tag leg and the embedding leg.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .features import Record, TagVocabulary, fix_length
from .models import LegOutput, ModelConfig, UnifiedTrace


@dataclass
class ExplanationReport:
    record_id: str
    label: int
    predicted_label: int
    probability: float
    top_sentences: list[tuple[int, str, float]] | None
    top_tags: list[tuple[str, float]] | None
    captured_positions: list[tuple[int, int]]
    attention_capture_agreement: bool | None
    leg_weights: tuple[float, float] | None
    sentence_attention_entropy: float | None
    tag_attention_entropy: float | None


@dataclass
class CorpusExplanationSummary:
    n_records: int
    capture_rate: float | None
    leg_dominance: float | None
    tag_importance_histogram: dict[str, float] | None


def rank_sentences(
    trace: LegOutput, record: Record, top_n: int = 3
) -> list[tuple[int, str, float]]:
    """Top non-padding positions of the embedding leg by attention weight.

    Ties break toward the lower index; padding (empty) utterances are never
    returned while real ones exist.
    """
    fixed = fix_length(record, len(trace.position_weights))
    candidates = [
        (i, float(w))
        for i, w in enumerate(trace.position_weights)
        if fixed.utterances[i]
    ]
    candidates.sort(key=lambda item: (-item[1], item[0]))
    return [(i, fixed.utterance_text(i), w) for i, w in candidates[:top_n]]


def rank_tags(
    trace: LegOutput, vocab: TagVocabulary | None = None, top_n: int = 5
) -> list[tuple[str, float]]:
    """Top tags of the tag leg by attention weight (ties by vocabulary order)."""
    vocab = vocab or TagVocabulary()
    weights = trace.position_weights
    order = sorted(range(len(vocab)), key=lambda t: (-weights[t], t))
    return [(vocab.tags[t], float(weights[t])) for t in order[:top_n]]


def capture_agreement(trace: LegOutput) -> bool:
    """True iff the attention-top position falls inside some filter's argmax
    window [start, start + kernel_width)."""
    if trace.kernel_width is None or not trace.captures:
        return False
    top = int(np.argmax(trace.position_weights))
    width = trace.kernel_width
    return any(start <= top < start + width for _, start in trace.captures)


def attention_entropy(weights: np.ndarray) -> float:
    """Shannon entropy (nats) of an attention distribution; 0 log 0 := 0."""
    w = np.asarray(weights, dtype=np.float64)
    nonzero = w[w > 0]
    return float(-(nonzero * np.log(nonzero)).sum())


def _capture_leg(trace: LegOutput | UnifiedTrace, config: ModelConfig) -> LegOutput:
    # The sentence-level statistic when the embedding leg exists, the tag
    # leg otherwise.
    if isinstance(trace, UnifiedTrace):
        return trace.emb_leg
    return trace


def build_report(
    record: Record,
    probabilities: np.ndarray,
    trace: LegOutput | UnifiedTrace,
    config: ModelConfig,
    vocab: TagVocabulary | None = None,
    top_n: int = 3,
) -> ExplanationReport:
    unified = isinstance(trace, UnifiedTrace)
    emb_trace = trace.emb_leg if unified else (trace if config.uses_emb else None)
    pos_trace = trace.pos_leg if unified else (trace if config.uses_pos else None)
    capture = _capture_leg(trace, config)
    predicted = int(np.argmax(probabilities))
    return ExplanationReport(
        record_id=record.id,
        label=int(record.label),
        predicted_label=predicted,
        probability=float(probabilities[predicted]),
        top_sentences=(
            rank_sentences(emb_trace, record, top_n) if emb_trace is not None else None
        ),
        top_tags=rank_tags(pos_trace, vocab, top_n) if pos_trace is not None else None,
        captured_positions=list(capture.captures),
        attention_capture_agreement=(
            capture_agreement(capture) if capture.kernel_width is not None else None
        ),
        leg_weights=(float(trace.leg_weights[0]), float(trace.leg_weights[1])) if unified else None,
        sentence_attention_entropy=(
            attention_entropy(emb_trace.position_weights) if emb_trace is not None else None
        ),
        tag_attention_entropy=(
            attention_entropy(pos_trace.position_weights) if pos_trace is not None else None
        ),
    )


def summarize_explanations(
    traces: list[LegOutput | UnifiedTrace],
    config: ModelConfig,
    vocab: TagVocabulary | None = None,
) -> CorpusExplanationSummary:
    """Corpus-level aggregates: capture rate, tag-leg dominance rate, and the
    histogram of attention-top tags. Absent statistics come back as None."""
    vocab = vocab or TagVocabulary()
    if not traces:
        return CorpusExplanationSummary(
            n_records=0, capture_rate=None, leg_dominance=None, tag_importance_histogram=None
        )

    capture_votes = [
        capture_agreement(_capture_leg(t, config))
        for t in traces
        if _capture_leg(t, config).kernel_width is not None
    ]
    capture_rate = sum(capture_votes) / len(capture_votes) if capture_votes else None

    leg_dominance = None
    if all(isinstance(t, UnifiedTrace) for t in traces):
        # strict comparison: ties count toward the embedding leg
        wins = sum(t.leg_weights[0] > t.leg_weights[1] for t in traces)
        leg_dominance = wins / len(traces)

    histogram = None
    if config.uses_pos:
        counts = dict.fromkeys(vocab.tags, 0)
        total = 0
        for t in traces:
            pos_trace = t.pos_leg if isinstance(t, UnifiedTrace) else t
            top = int(np.argmax(pos_trace.position_weights))
            counts[vocab.tags[top]] += 1
            total += 1
        histogram = {tag: count / total for tag, count in counts.items()}

    return CorpusExplanationSummary(
        n_records=len(traces),
        capture_rate=capture_rate,
        leg_dominance=leg_dominance,
        tag_importance_histogram=histogram,
    )


# -- serialization --------------------------------------------------------------


def report_to_json_dict(report: ExplanationReport) -> dict:
    return {
        "record_id": report.record_id,
        "label": report.label,
        "predicted_label": report.predicted_label,
        "probability": report.probability,
        "top_sentences": (
            None
            if report.top_sentences is None
            else [[i, text, w] for i, text, w in report.top_sentences]
        ),
        "top_tags": (
            None
            if report.top_tags is None
            else [[tag, w] for tag, w in report.top_tags]
        ),
        "captured_positions": [[f, s] for f, s in report.captured_positions],
        "attention_capture_agreement": report.attention_capture_agreement,
        "leg_weights": None if report.leg_weights is None else list(report.leg_weights),
        "sentence_attention_entropy": report.sentence_attention_entropy,
        "tag_attention_entropy": report.tag_attention_entropy,
    }


def summary_to_json_dict(summary: CorpusExplanationSummary) -> dict:
    return {
        "n_records": summary.n_records,
        "capture_rate": summary.capture_rate,
        "leg_dominance": summary.leg_dominance,
        "tag_importance_histogram": summary.tag_importance_histogram,
    }


def to_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def render_report_text(report: ExplanationReport) -> str:
    lines = [
        f"record {report.record_id}    label {report.label}    "
        f"predicted {report.predicted_label} (p={report.probability:.4f})"
    ]
    if report.leg_weights is not None:
        pos_w, emb_w = report.leg_weights
        lines.append(
            f"leg weights   pos={pos_w:.3f}  emb={emb_w:.3f}  (sum={pos_w + emb_w:.3f})"
        )
    if report.top_sentences is not None:
        lines.append("important sentences:")
        if not report.top_sentences:
            lines.append("  (none: record has no utterances)")
        for rank, (index, text, weight) in enumerate(report.top_sentences, start=1):
            lines.append(f"  {rank}. [{index:2d}] ({weight:.4f}) {text}")
    if report.top_tags is not None:
        lines.append("top tags:")
        for rank, (tag, weight) in enumerate(report.top_tags, start=1):
            lines.append(f"  {rank}. {tag:5s} ({weight:.4f})")
    if report.attention_capture_agreement is not None:
        agree = "yes" if report.attention_capture_agreement else "no"
        lines.append(f"attention top captured by filters: {agree}")
    entropies = []
    if report.sentence_attention_entropy is not None:
        entropies.append(f"sentences={report.sentence_attention_entropy:.4f}")
    if report.tag_attention_entropy is not None:
        entropies.append(f"tags={report.tag_attention_entropy:.4f}")
    if entropies:
        lines.append("attention entropy: " + "  ".join(entropies))
    return "\n".join(lines)


def render_summary_text(summary: CorpusExplanationSummary) -> str:
    lines = [f"corpus summary over {summary.n_records} records"]
    if summary.capture_rate is not None:
        lines.append(f"attention-top capture rate: {summary.capture_rate:.3f}")
    if summary.leg_dominance is not None:
        lines.append(
            f"tag-leg dominance: {summary.leg_dominance:.3f} "
            f"(embedding leg: {1.0 - summary.leg_dominance:.3f})"
        )
    if summary.tag_importance_histogram:
        top = sorted(
            summary.tag_importance_histogram.items(), key=lambda kv: (-kv[1], kv[0])
        )[:8]
        lines.append("attention-top tag frequencies:")
        for tag, frequency in top:
            if frequency > 0:
                lines.append(f"  {tag:5s} {frequency:.3f}")
    if summary.n_records == 0:
        lines.append("(no records: all statistics absent)")
    return "\n".join(lines)
