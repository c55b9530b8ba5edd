"""Group-relative advantages, mode sampling, and the DPO objective."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from ..errors import InputError
from .rewards import Mode, RewardBreakdown, standardize


@dataclass(frozen=True)
class RolloutGroup:
    """All responses sampled for one prompt in one mode."""

    prompt_id: int | str
    mode: Mode
    responses: list[str]
    rewards: list[RewardBreakdown] = field(default_factory=list)

    def __post_init__(self):
        if len(self.responses) < 2:
            raise InputError("a rollout group needs at least 2 responses")
        if self.rewards and len(self.rewards) != len(self.responses):
            raise InputError(
                f"{len(self.rewards)} rewards for {len(self.responses)} responses"
            )


def grpo_advantages(group: RolloutGroup) -> list[float]:
    """Within-group standardized totals: mean 0, population std 1, or
    all zeros for a constant group (no gradient signal)."""
    if len(group.rewards) != len(group.responses):
        raise InputError("rewards missing for some responses")
    return standardize([rb.total for rb in group.rewards])


def sample_mode(seed: int, p_long: float = 0.5) -> Mode:
    """Seeded Bernoulli draw of the response mode for one rollout."""
    if not 0.0 <= p_long <= 1.0:
        raise InputError(f"p_long must be in [0, 1], got {p_long}")
    return Mode.LONG if random.Random(seed).random() < p_long else Mode.SHORT


def dpo_loss(
    logp_w: float,
    logp_l: float,
    ref_logp_w: float,
    ref_logp_l: float,
    beta: float,
) -> float:
    """-log sigmoid(beta * ((logp_w - ref_logp_w) - (logp_l - ref_logp_l))).

    Evaluated as softplus(-beta * margin) so large margins neither
    overflow nor lose precision.
    """
    if beta <= 0:
        raise InputError(f"beta must be positive, got {beta}")
    values = (logp_w, logp_l, ref_logp_w, ref_logp_l)
    if not all(math.isfinite(v) for v in values):
        raise InputError(f"log-probabilities must be finite, got {values}")
    x = beta * ((logp_w - ref_logp_w) - (logp_l - ref_logp_l))
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))
