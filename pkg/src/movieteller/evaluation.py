"""LLM-as-a-Judge rubric scoring and preference win-rate aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .errors import EvaluationError
from .llm import ChatClient, ChatRequest

METHODS = ("no_hint", "name_only", "full")
METHOD_LABELS = {"no_hint": "No-Hint", "name_only": "Name-Only", "full": "MovieTeller"}

DIMENSIONS = ("faithfulness", "id_consistency", "coherence", "conciseness")

JUDGE_RUBRIC = """You are an expert film critic acting as an impartial judge.
You will be given a movie title and a generated synopsis of that movie.
Using your knowledge of the film, rate the synopsis on four dimensions,
each on a scale of 1 to 5:
- Factual Faithfulness
- ID Consistency & Completeness
- Narrative Coherence & Flow
- Conciseness & Essence Capture

Reply with ONLY a JSON object with exactly these numeric fields:
{"faithfulness": x, "id_consistency": x, "coherence": x, "conciseness": x}
"""

REASK_REMINDER = (
    "Your previous reply was not valid JSON. Reply with ONLY a JSON object of "
    'the form {"faithfulness": x, "id_consistency": x, "coherence": x, '
    '"conciseness": x} with each value a number between 1 and 5.'
)


def _round2(value: float) -> float:
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _decimal_mean(values: Sequence[float]) -> float:
    """Mean in exact decimal arithmetic, rounded half-up to 2 decimals.

    Binary floats put sums like 3.15+3.55+2.35+2.41 just below the true
    decimal midpoint, which would flip the half-up rounding."""
    total = sum(Decimal(str(v)) for v in values)
    mean = total / Decimal(len(values))
    return float(mean.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class JudgeScore:
    faithfulness: float
    id_consistency: float
    coherence: float
    conciseness: float

    def __post_init__(self) -> None:
        for dim in DIMENSIONS:
            value = getattr(self, dim)
            if not 1.0 <= value <= 5.0:
                raise EvaluationError(f"{dim} score {value} outside [1, 5]")

    @property
    def final(self) -> float:
        return _decimal_mean([getattr(self, dim) for dim in DIMENSIONS])

    def to_json(self) -> dict:
        data = {dim: getattr(self, dim) for dim in DIMENSIONS}
        data["final"] = self.final
        return data


@dataclass(frozen=True)
class PreferenceRecord:
    movie_id: str
    evaluator_id: str
    chosen: str

    def __post_init__(self) -> None:
        if self.chosen not in METHODS:
            raise EvaluationError(f"invalid method tag {self.chosen!r}")


def _extract_json(text: str) -> Optional[dict]:
    text = text.strip()
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except ValueError:
        pass
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start : end + 1])
            if isinstance(obj, dict):
                return obj
        except ValueError:
            return None
    return None


def _parse_score(reply: str) -> Optional[JudgeScore]:
    obj = _extract_json(reply)
    if obj is None:
        return None
    try:
        return JudgeScore(**{dim: float(obj[dim]) for dim in DIMENSIONS})
    except (KeyError, TypeError, ValueError):
        return None


def judge_synopsis(
    title: str, synopsis: str, client: ChatClient, model: str = "mock-judge"
) -> JudgeScore:
    """Score one synopsis on the four-dimension rubric, with up to 2 re-asks
    when the judge's reply is not parseable JSON."""
    user_text = f"Movie title: {title}\n\nSynopsis:\n{synopsis}"
    for attempt in range(3):
        system = JUDGE_RUBRIC if attempt == 0 else JUDGE_RUBRIC + "\n" + REASK_REMINDER
        reply = client.chat(
            ChatRequest(model=model, user_text=user_text, system_text=system)
        ).text
        score = _parse_score(reply)
        if score is not None:
            return score
    raise EvaluationError(
        f"judge reply unparseable after 2 re-asks (last reply: {reply[:120]!r})"
    )


def aggregate_scores(scores: Sequence[JudgeScore]) -> dict:
    """Per-dimension arithmetic means plus mean final, rounded to 2 decimals."""
    if not scores:
        raise EvaluationError("no scores to aggregate")
    row = {
        dim: _decimal_mean([getattr(s, dim) for s in scores]) for dim in DIMENSIONS
    }
    row["final"] = _decimal_mean([s.final for s in scores])
    return row


def win_rates(records: Sequence[PreferenceRecord]) -> Dict[str, int]:
    """Percentage of forced-choice records selecting each method, rounded to
    the nearest integer percent."""
    if not records:
        raise EvaluationError("no preference records")
    counts = {method: 0 for method in METHODS}
    for record in records:
        counts[record.chosen] += 1
    return {
        method: int(
            (Decimal(counts[method]) * 100 / Decimal(len(records))).quantize(
                Decimal("1"), rounding=ROUND_HALF_UP
            )
        )
        for method in METHODS
    }


def load_preferences(path: Path) -> List[PreferenceRecord]:
    """Read preferences.csv with header movie_id,evaluator_id,chosen."""
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                PreferenceRecord(row["movie_id"], row["evaluator_id"], row["chosen"])
            )
    return records


def load_bertscore(path: Path) -> Dict[str, Dict[str, float]]:
    """Externally computed BERTScore F1 values: {method: {movie_id: f1}}."""
    return json.loads(Path(path).read_text())


def render_report(
    judgements: Dict[str, List[JudgeScore]],
    preferences: Optional[Sequence[PreferenceRecord]] = None,
    bertscore: Optional[Dict[str, Dict[str, float]]] = None,
) -> str:
    """Plain-text report: judge score table, optional win rates, optional
    externally computed BERTScore means."""
    if not judgements and not preferences:
        raise EvaluationError("no evaluation records")
    lines = []
    if bertscore:
        lines.append("BERTScore (F1), externally computed")
        lines.append("method       f1")
        for method in METHODS:
            values = bertscore.get(method, {})
            if values:
                mean = sum(values.values()) / len(values)
                lines.append(f"{METHOD_LABELS[method]:<12} {mean:.3f}")
        lines.append("")
    if judgements:
        lines.append("LLM-as-a-Judge (1-5 scale), averaged across movies")
        lines.append("method       faith.  id_cons  coher.  concis.  final")
        for method in METHODS:
            scores = judgements.get(method)
            if not scores:
                continue
            row = aggregate_scores(scores)
            lines.append(
                f"{METHOD_LABELS[method]:<12} "
                f"{row['faithfulness']:>6.2f} {row['id_consistency']:>8.2f} "
                f"{row['coherence']:>7.2f} {row['conciseness']:>8.2f} {row['final']:>6.2f}"
            )
        lines.append("")
    if preferences:
        rates = win_rates(list(preferences))
        lines.append("Human preference win rates (3-way forced choice)")
        for method in METHODS:
            lines.append(f"{METHOD_LABELS[method]:<12} {rates[method]}%")
        lines.append("")
    return "\n".join(lines)


def report_csv(judgements: Dict[str, List[JudgeScore]]) -> str:
    """CSV mirror of the judge score table."""
    lines = ["method,faithfulness,id_consistency,coherence,conciseness,final"]
    for method in METHODS:
        scores = judgements.get(method)
        if not scores:
            continue
        row = aggregate_scores(scores)
        lines.append(
            f"{method},{row['faithfulness']:.2f},{row['id_consistency']:.2f},"
            f"{row['coherence']:.2f},{row['conciseness']:.2f},{row['final']:.2f}"
        )
    return "\n".join(lines) + "\n"
