"""Reward components and verifier routing for hybrid-mode rollouts.

The composite reward for one response is

    total = r_acc + r_format + r_rep + 0.5 * r_rm_std

where r_acc comes from a rule verifier (short factual answers) or a
probability verifier (free-form answers), r_format enforces the
short/long response structure, r_rep penalizes degenerate repetition,
and r_rm_std is a preference score standardized within the rollout
group. The preference scorer only ever sees the final-answer part of a
long response; the thinking section is stripped before scoring.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from ..errors import InputError

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"

RM_WEIGHT = 0.5

_ANSWER_MARKER = re.compile(r"answer\s*:", re.IGNORECASE)
_OPTION_LETTER = re.compile(r"^\(?[a-eA-E]\)?\.?$")
_RULE_MAX_TOKENS = 5
_NUMERIC_REL_TOL = 1e-6


class Mode(str, Enum):
    SHORT = "short"
    LONG = "long"


class Verifier(str, Enum):
    RULE = "rule"
    PROBABILITY = "probability"


@dataclass(frozen=True)
class RewardBreakdown:
    r_acc: float
    r_format: int
    r_rep: int
    r_rm_raw: float
    r_rm_std: float
    total: float

    @classmethod
    def build(
        cls, r_acc: float, r_format: int, r_rep: int, r_rm_raw: float, r_rm_std: float
    ) -> "RewardBreakdown":
        return cls(
            r_acc=r_acc,
            r_format=r_format,
            r_rep=r_rep,
            r_rm_raw=r_rm_raw,
            r_rm_std=r_rm_std,
            total=total_reward(r_acc, r_format, r_rep, r_rm_std),
        )

    def recomputed_total(self) -> float:
        return total_reward(self.r_acc, self.r_format, self.r_rep, self.r_rm_std)


def _normalize_answer(text: str) -> str:
    cleaned = text.casefold().strip()
    cleaned = cleaned.strip(" \t\n\r.,;:!?\"'()[]{}")
    return " ".join(cleaned.split())


def _parse_number(text: str) -> float | None:
    # thousands separators are dropped ("1,536" == "1536"); internal
    # spaces are not, so "3 2" never silently becomes 32
    compact = text.replace(",", "")
    if not compact:
        return None
    try:
        return float(compact)
    except ValueError:
        pass
    try:
        return float(Fraction(compact))
    except (ValueError, ZeroDivisionError):
        return None


def _extract_final_answer(response: str) -> str | None:
    matches = list(_ANSWER_MARKER.finditer(response))
    if not matches:
        return None
    tail = response[matches[-1].end():].strip()
    return tail or None


def route_verifier(reference_answer: str) -> Verifier:
    """Rule verification for short numeric/option references, the
    probability verifier for everything else."""
    if not reference_answer.strip():
        raise InputError("empty reference answer")
    tokens = reference_answer.split()
    if len(tokens) <= _RULE_MAX_TOKENS:
        normalized = _normalize_answer(reference_answer)
        if _parse_number(normalized) is not None:
            return Verifier.RULE
        if len(tokens) == 1 and _OPTION_LETTER.match(tokens[0]):
            return Verifier.RULE
    return Verifier.PROBABILITY


def rule_reward(response: str, reference: str) -> int:
    """1 iff the extracted final answer matches the reference.

    Matching is case-insensitive after stripping surrounding
    punctuation; numeric answers compare with 1e-6 relative tolerance
    (so "0.5" matches "1/2"). An unextractable answer scores 0.
    """
    answer = _extract_final_answer(response)
    if answer is None:
        return 0
    norm_answer = _normalize_answer(answer)
    norm_reference = _normalize_answer(reference)
    a_num = _parse_number(norm_answer)
    r_num = _parse_number(norm_reference)
    if a_num is not None and r_num is not None:
        tol = _NUMERIC_REL_TOL * max(abs(a_num), abs(r_num), 1.0)
        return 1 if abs(a_num - r_num) <= tol else 0
    return 1 if norm_answer == norm_reference else 0


def prob_reward(policy, prompt: str, response_prefix: str, reference: str) -> float:
    """Mean probability the policy assigns to the reference tokens,
    conditioned on the prompt plus the response so far (reasoning kept,
    final answer replaced by the reference).

    The policy must provide tokenize(text) and
    answer_distributions(prompt, response_prefix, count), the latter
    returning one token->probability mapping per reference position.
    """
    tokens = policy.tokenize(reference)
    if not tokens:
        raise InputError(f"reference {reference!r} has no tokens in the policy vocab")
    dists = policy.answer_distributions(prompt, response_prefix, len(tokens))
    return sum(dist.get(tok, 0.0) for dist, tok in zip(dists, tokens)) / len(tokens)


def format_reward(response: str, mode: Mode) -> int:
    """Long mode wants exactly one think block followed by a non-empty
    answer; short mode wants no think delimiters at all."""
    opens = response.count(THINK_OPEN)
    closes = response.count(THINK_CLOSE)
    if mode is Mode.SHORT:
        return 1 if opens == 0 and closes == 0 else 0
    if opens != 1 or closes != 1:
        return 0
    open_at = response.index(THINK_OPEN)
    close_at = response.index(THINK_CLOSE)
    if close_at < open_at:
        return 0
    return 1 if response[close_at + len(THINK_CLOSE):].strip() else 0


def repetition_penalty(response: str, window: int = 20, trigger: int = 3) -> int:
    """-1 if any window-token phrase occurs at least trigger times."""
    tokens = response.split()
    if len(tokens) < window:
        return 0
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - window + 1):
        gram = tuple(tokens[i : i + window])
        counts[gram] = counts.get(gram, 0) + 1
        if counts[gram] >= trigger:
            return -1
    return 0


def standardize(scores: list[float]) -> list[float]:
    """(s - mean) / population std per element; all zeros when the
    scores are constant (std below 1e-12)."""
    if len(scores) < 2:
        raise InputError("standardization needs at least 2 scores")
    n = len(scores)
    mean = sum(scores) / n
    var = sum((s - mean) ** 2 for s in scores) / n
    std = math.sqrt(var)
    if std <= 1e-12:
        return [0.0] * n
    return [(s - mean) / std for s in scores]


def total_reward(r_acc: float, r_format: int, r_rep: int, rm_std: float) -> float:
    """Composite reward: r_acc + r_format + r_rep + 0.5 * rm_std."""
    if not 0.0 <= r_acc <= 1.0:
        raise InputError(f"r_acc must be in [0, 1], got {r_acc}")
    if r_format not in (0, 1):
        raise InputError(f"r_format must be 0 or 1, got {r_format}")
    if r_rep not in (-1, 0):
        raise InputError(f"r_rep must be -1 or 0, got {r_rep}")
    return r_acc + r_format + r_rep + RM_WEIGHT * rm_std


def answer_section(response: str, mode: Mode) -> str:
    """Final-answer part of a response.

    Short mode: the whole response. Long mode: everything after the
    think block; an opened-but-unclosed block means the answer section
    is missing, which maps to the empty string.
    """
    if mode is Mode.SHORT:
        return response
    if THINK_CLOSE in response:
        _, _, tail = response.rpartition(THINK_CLOSE)
        return tail.strip()
    if THINK_OPEN in response:
        return ""
    return response


def rm_score(response: str, scorer, mode: Mode) -> float:
    """Preference score of the final answer only; no byte of the
    thinking section reaches the scorer."""
    return float(scorer(answer_section(response, mode)))


def default_answer_scorer(answer: str) -> float:
    """Heuristic stand-in for a learned preference model: favors
    non-trivial length, an explicit answer marker, and concrete digits."""
    text = answer.strip()
    score = min(len(text), 40) / 40.0
    if _ANSWER_MARKER.search(text):
        score += 0.5
    if any(ch.isdigit() for ch in text):
        score += 0.25
    return score
