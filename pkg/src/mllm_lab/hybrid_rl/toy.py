"""Tabular toy policy, synthetic arithmetic task, and the hybrid-mode
GRPO training loop.

The policy is a table of logits keyed by (prompt, mode, slot) over a
digit vocabulary; responses are rendered from fixed templates with the
sampled digits filled in, so the verifiable answer is the only thing
being learned. Rollouts alternate randomly between the short mode
("answer: D") and the long mode, which must first emit its working
inside a think block.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, EvaluationError, InputError
from .grpo import RolloutGroup, grpo_advantages, sample_mode
from .rewards import (
    Mode,
    RewardBreakdown,
    Verifier,
    default_answer_scorer,
    format_reward,
    prob_reward,
    repetition_penalty,
    rm_score,
    route_verifier,
    rule_reward,
    standardize,
    THINK_CLOSE,
    THINK_OPEN,
    _ANSWER_MARKER,
)

StateKey = tuple[str, str, int]  # (prompt text, mode value, slot index)


class ToyPolicy:
    """Softmax-over-logits policy with one logit row per response slot.

    Rows are created lazily at zero (uniform). The table plus the
    learning rate is the entire learnable state.
    """

    def __init__(
        self,
        vocab: tuple[str, ...],
        think_slots: int = 1,
        answer_slots: int = 1,
        learning_rate: float = 1e-3,
    ):
        if not vocab:
            raise ConfigError("policy vocabulary is empty")
        self.vocab = tuple(vocab)
        self.think_slots = think_slots
        self.answer_slots = answer_slots
        self.learning_rate = learning_rate
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        self._table: dict[StateKey, np.ndarray] = {}

    def logits(self, state: StateKey) -> np.ndarray:
        row = self._table.get(state)
        if row is None:
            row = np.zeros(len(self.vocab))
            self._table[state] = row
        return row

    def distribution(self, state: StateKey, temperature: float = 1.0) -> np.ndarray:
        z = self.logits(state) / temperature
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def tokenize(self, text: str) -> list[str]:
        return [ch for ch in text if ch in self._index]

    def answer_distributions(
        self, prompt: str, response_prefix: str, count: int
    ) -> list[dict[str, float]]:
        """Next-token distributions for `count` answer positions given
        the response so far. Mode and position are inferred from the
        prefix: a think block marks the long mode, and any answer
        tokens already emitted shift the slot index."""
        mode = Mode.LONG if THINK_OPEN in response_prefix else Mode.SHORT
        consumed = 0
        matches = list(_ANSWER_MARKER.finditer(response_prefix))
        if matches:
            consumed = len(self.tokenize(response_prefix[matches[-1].end():]))
        base = (self.think_slots if mode is Mode.LONG else 0) + consumed
        out = []
        for i in range(count):
            probs = self.distribution((prompt, mode.value, base + i))
            out.append({tok: float(p) for tok, p in zip(self.vocab, probs)})
        return out

    def apply_gradients(self, grads: dict[StateKey, np.ndarray], lr: float):
        """Gradient-ascent step; rejects non-finite results."""
        for state, g in grads.items():
            updated = self.logits(state) + lr * g
            if not np.all(np.isfinite(updated)):
                raise EvaluationError(f"non-finite logits for state {state}")
            self._table[state] = updated

    def snapshot(self) -> dict[StateKey, np.ndarray]:
        return {k: v.copy() for k, v in self._table.items()}


@dataclass(frozen=True)
class ToyPrompt:
    prompt_id: int
    text: str
    reference: str


class ArithmeticTask:
    """Single-digit addition prompts with verifiable references.

    Long-mode responses restate the expression with a worked digit
    inside the think block; only the digit after "answer:" is graded.
    """

    vocab = tuple("0123456789")

    def __init__(self, num_prompts: int = 16, operand_max: int = 4, seed: int = 0):
        if num_prompts < 1:
            raise ConfigError("need at least one prompt")
        pairs = [(a, b) for a in range(operand_max + 1) for b in range(operand_max + 1)]
        rng = np.random.default_rng(seed)
        rng.shuffle(pairs)
        if num_prompts > len(pairs):
            raise ConfigError(
                f"only {len(pairs)} distinct prompts exist for operand_max={operand_max}"
            )
        self.prompts = [
            ToyPrompt(prompt_id=i, text=f"{a} + {b} = ?", reference=str(a + b))
            for i, (a, b) in enumerate(pairs[:num_prompts])
        ]
        self.answer_slots = len(str(2 * operand_max))
        self.think_slots = self.answer_slots

    def render_response(
        self,
        prompt: ToyPrompt,
        mode: Mode,
        think_tokens: list[str],
        answer_tokens: list[str],
    ) -> str:
        answer = "".join(answer_tokens)
        if mode is Mode.SHORT:
            return f"answer: {answer}"
        worked = f"{prompt.text.rstrip('? ').strip()} {''.join(think_tokens)}"
        return f"{THINK_OPEN} {worked} {THINK_CLOSE} answer: {answer}"


@dataclass(frozen=True)
class TrainConfig:
    prompts_per_batch: int = 16
    group_size: int = 8
    p_long: float = 0.5
    learning_rate: float = 1e-3
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.prompts_per_batch < 1:
            raise ConfigError("prompts_per_batch must be >= 1")
        if self.group_size < 2:
            raise ConfigError("group_size must be >= 2 for group advantages")
        if not 0.0 <= self.p_long <= 1.0:
            raise ConfigError(f"p_long must be in [0, 1], got {self.p_long}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")


@dataclass(frozen=True)
class TraceRow:
    step: int
    mode: str
    mean_r_acc: float
    mean_r_format: float
    mean_r_rep: float
    mean_r_rm_std: float
    mean_total: float


CSV_COLUMNS = (
    "step", "mode", "mean_r_acc", "mean_r_format", "mean_r_rep",
    "mean_r_rm_std", "mean_total",
)


@dataclass
class TrainingTrace:
    rows: list[TraceRow] = field(default_factory=list)
    rollouts: list[RolloutGroup] = field(default_factory=list)
    policy: ToyPolicy | None = None

    def rows_for_mode(self, mode: Mode) -> list[TraceRow]:
        return [r for r in self.rows if r.mode == mode.value]

    def write_csv(self, fh):
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.step, r.mode, r.mean_r_acc, r.mean_r_format, r.mean_r_rep,
                 r.mean_r_rm_std, r.mean_total]
            )


def _answer_prefix(response: str) -> str:
    matches = list(_ANSWER_MARKER.finditer(response))
    return response[: matches[-1].end()] if matches else response


def _score_group(
    policy: ToyPolicy,
    prompt: ToyPrompt,
    mode: Mode,
    responses: list[str],
    scorer,
) -> list[RewardBreakdown]:
    verifier = route_verifier(prompt.reference)
    rm_raws = [rm_score(r, scorer, mode) for r in responses]
    rm_stds = standardize(rm_raws)
    breakdowns = []
    for resp, rm_raw, rm_std in zip(responses, rm_raws, rm_stds):
        if verifier is Verifier.RULE:
            r_acc = float(rule_reward(resp, prompt.reference))
        else:
            r_acc = prob_reward(
                policy, prompt.text, _answer_prefix(resp), prompt.reference
            )
        breakdowns.append(
            RewardBreakdown.build(
                r_acc=r_acc,
                r_format=format_reward(resp, mode),
                r_rep=repetition_penalty(resp),
                r_rm_raw=rm_raw,
                r_rm_std=rm_std,
            )
        )
    return breakdowns


def train_toy(
    task,
    steps: int,
    cfg: TrainConfig | None = None,
    policy: ToyPolicy | None = None,
    scorer=None,
    record_rollouts: bool = False,
) -> TrainingTrace:
    """Hybrid-mode GRPO on a verifiable toy task.

    Each step samples prompts_per_batch prompts, draws a mode per
    prompt, rolls out group_size responses, scores them, and applies
    one policy-gradient update weighted by the group-standardized
    advantages. No KL or entropy terms. Fully deterministic per seed.
    """
    if steps < 1:
        raise InputError("steps must be >= 1")
    cfg = cfg or TrainConfig()
    if policy is None:
        policy = ToyPolicy(
            vocab=task.vocab,
            think_slots=task.think_slots,
            answer_slots=task.answer_slots,
            learning_rate=cfg.learning_rate,
        )
    scorer = scorer or default_answer_scorer
    rng = np.random.default_rng(cfg.seed)
    vocab_size = len(policy.vocab)
    trace = TrainingTrace(policy=policy)

    for step in range(1, steps + 1):
        grads: dict[StateKey, np.ndarray] = {}
        per_mode: dict[str, list[RewardBreakdown]] = {}
        for _ in range(cfg.prompts_per_batch):
            prompt = task.prompts[int(rng.integers(len(task.prompts)))]
            mode = sample_mode(int(rng.integers(2**31 - 1)), cfg.p_long)
            n_think = task.think_slots if mode is Mode.LONG else 0
            n_slots = n_think + task.answer_slots

            responses = []
            sampled: list[list[tuple[StateKey, int, np.ndarray]]] = []
            for _g in range(cfg.group_size):
                actions = []
                think_toks: list[str] = []
                answer_toks: list[str] = []
                for slot in range(n_slots):
                    state = (prompt.text, mode.value, slot)
                    probs = policy.distribution(state, cfg.temperature)
                    act = int(rng.choice(vocab_size, p=probs))
                    actions.append((state, act, probs))
                    (think_toks if slot < n_think else answer_toks).append(
                        policy.vocab[act]
                    )
                responses.append(
                    task.render_response(prompt, mode, think_toks, answer_toks)
                )
                sampled.append(actions)

            breakdowns = _score_group(policy, prompt, mode, responses, scorer)
            group = RolloutGroup(
                prompt_id=prompt.prompt_id,
                mode=mode,
                responses=responses,
                rewards=breakdowns,
            )
            advantages = grpo_advantages(group)
            # sequence-level REINFORCE: the group advantage weights the
            # log-prob gradient (onehot - probs) / temperature of every
            # sampled slot in that response
            for adv, actions in zip(advantages, sampled):
                if adv == 0.0:
                    continue
                for state, act, probs in actions:
                    gvec = grads.setdefault(state, np.zeros(vocab_size))
                    gvec -= adv / cfg.temperature * probs
                    gvec[act] += adv / cfg.temperature
            per_mode.setdefault(mode.value, []).extend(breakdowns)
            if record_rollouts:
                trace.rollouts.append(group)

        try:
            policy.apply_gradients(grads, cfg.learning_rate)
        except EvaluationError as exc:
            raise EvaluationError(f"policy diverged at step {step}: {exc}") from exc

        for mode_value in sorted(per_mode):
            rbs = per_mode[mode_value]
            n = len(rbs)
            trace.rows.append(
                TraceRow(
                    step=step,
                    mode=mode_value,
                    mean_r_acc=sum(rb.r_acc for rb in rbs) / n,
                    mean_r_format=sum(rb.r_format for rb in rbs) / n,
                    mean_r_rep=sum(rb.r_rep for rb in rbs) / n,
                    mean_r_rm_std=sum(rb.r_rm_std for rb in rbs) / n,
                    mean_total=sum(rb.total for rb in rbs) / n,
                )
            )
        if not all(
            math.isfinite(rb.total) for rbs in per_mode.values() for rb in rbs
        ):
            raise EvaluationError(f"non-finite reward at step {step}")
    return trace
