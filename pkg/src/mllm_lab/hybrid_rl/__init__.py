"""Hybrid short/long-mode GRPO: rewards, advantages, DPO, and the toy
training loop."""

from .grpo import RolloutGroup, dpo_loss, grpo_advantages, sample_mode
from .rewards import (
    Mode,
    RewardBreakdown,
    Verifier,
    answer_section,
    default_answer_scorer,
    format_reward,
    prob_reward,
    repetition_penalty,
    rm_score,
    route_verifier,
    rule_reward,
    standardize,
    total_reward,
)
from .toy import (
    ArithmeticTask,
    ToyPolicy,
    ToyPrompt,
    TraceRow,
    TrainConfig,
    TrainingTrace,
    train_toy,
)

__all__ = [
    "ArithmeticTask",
    "Mode",
    "RewardBreakdown",
    "RolloutGroup",
    "ToyPolicy",
    "ToyPrompt",
    "TraceRow",
    "TrainConfig",
    "TrainingTrace",
    "Verifier",
    "answer_section",
    "default_answer_scorer",
    "dpo_loss",
    "format_reward",
    "grpo_advantages",
    "prob_reward",
    "repetition_penalty",
    "rm_score",
    "route_verifier",
    "rule_reward",
    "sample_mode",
    "standardize",
    "total_reward",
    "train_toy",
]
