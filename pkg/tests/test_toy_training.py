import io

import numpy as np
import pytest

from mllm_lab.errors import EvaluationError
from mllm_lab.hybrid_rl import (
    ArithmeticTask,
    Mode,
    ToyPolicy,
    TrainConfig,
    prob_reward,
    rule_reward,
    train_toy,
)
from mllm_lab.hybrid_rl.toy import CSV_COLUMNS, ToyPrompt


class ConstantRewardTask(ArithmeticTask):
    """Every response scores the same total: no learning signal."""

    def __init__(self):
        super().__init__(num_prompts=4, seed=0)
        # a reference no digit response can match keeps r_acc pinned at 0
        self.prompts = [
            ToyPrompt(prompt_id=p.prompt_id, text=p.text, reference="99")
            for p in self.prompts
        ]


class TestArithmeticTask:
    def test_prompts_are_verifiable(self):
        task = ArithmeticTask(seed=3)
        assert len(task.prompts) == 16
        for p in task.prompts:
            a, _, b, _, _ = p.text.split()
            assert int(p.reference) == int(a) + int(b)

    def test_render_short(self):
        task = ArithmeticTask(seed=0)
        resp = task.render_response(task.prompts[0], Mode.SHORT, [], ["7"])
        assert resp == "answer: 7"

    def test_render_long_contains_single_think_block(self):
        task = ArithmeticTask(seed=0)
        p = task.prompts[0]
        resp = task.render_response(p, Mode.LONG, ["5"], ["7"])
        assert resp.count("<think>") == 1 and resp.count("</think>") == 1
        assert resp.endswith("answer: 7")
        assert p.text.rstrip("? ").strip() in resp


class TestToyPolicy:
    def test_fresh_states_are_uniform(self):
        policy = ToyPolicy(vocab=tuple("0123456789"))
        dist = policy.distribution(("1 + 1 = ?", "short", 0))
        np.testing.assert_allclose(dist, np.full(10, 0.1))

    def test_answer_distributions_follow_prefix_mode(self):
        policy = ToyPolicy(vocab=tuple("0123456789"), think_slots=1, answer_slots=1)
        short = policy.answer_distributions("p", "answer: ", 1)
        long = policy.answer_distributions("p", "<think> p 3 </think> answer: ", 1)
        assert len(short) == len(long) == 1
        # the long-mode answer slot is offset past the think slots
        assert set(short[0]) == set(long[0]) == set("0123456789")

    def test_gradient_ascent_moves_logits(self):
        policy = ToyPolicy(vocab=("a", "b"))
        state = ("p", "short", 0)
        grad = np.array([1.0, -1.0])
        policy.apply_gradients({state: grad}, lr=0.5)
        np.testing.assert_allclose(policy.logits(state), [0.5, -0.5])

    def test_non_finite_update_rejected(self):
        policy = ToyPolicy(vocab=("a", "b"))
        with pytest.raises(EvaluationError):
            policy.apply_gradients({("p", "short", 0): np.array([1.0, 1.0])},
                                   lr=float("inf"))


class TestTrainToy:
    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        task = ArithmeticTask(seed=1)
        cfg = TrainConfig(seed=5, learning_rate=0.0)
        policy = ToyPolicy(
            vocab=task.vocab,
            think_slots=task.think_slots,
            answer_slots=task.answer_slots,
        )
        train_toy(task, 5, cfg, policy=policy)
        snapshot = policy.snapshot()
        assert snapshot
        for state, logits in snapshot.items():
            np.testing.assert_array_equal(logits, np.zeros(10))

    def test_constant_reward_gives_zero_advantage_and_no_update(self):
        task = ConstantRewardTask()
        cfg = TrainConfig(seed=5, learning_rate=0.5, p_long=0.0)
        # constant scorer keeps the preference term flat too
        trace = train_toy(task, 5, cfg, scorer=lambda text: 1.0)
        snapshot = trace.policy.snapshot()
        assert snapshot
        for state, logits in snapshot.items():
            np.testing.assert_array_equal(logits, np.zeros(10))
        for row in trace.rows:
            assert row.mean_r_acc == 0.0

    def test_bit_reproducible_across_runs(self):
        task = ArithmeticTask(seed=2)
        cfg = TrainConfig(seed=9, learning_rate=0.05)
        a = train_toy(task, 10, cfg)
        b = train_toy(ArithmeticTask(seed=2), 10, cfg)
        assert a.rows == b.rows
        snap_a, snap_b = a.policy.snapshot(), b.policy.snapshot()
        assert snap_a.keys() == snap_b.keys()
        for state in snap_a:
            np.testing.assert_array_equal(snap_a[state], snap_b[state])

    def test_composite_reward_consistency_on_every_rollout(self):
        task = ArithmeticTask(seed=3)
        cfg = TrainConfig(seed=11, learning_rate=0.05)
        trace = train_toy(task, 10, cfg, record_rollouts=True)
        assert trace.rollouts
        for group in trace.rollouts:
            assert len(group.responses) == cfg.group_size
            for rb in group.rewards:
                assert rb.total == rb.recomputed_total()

    def test_trace_rows_per_mode(self):
        task = ArithmeticTask(seed=4)
        trace = train_toy(task, 8, TrainConfig(seed=13, learning_rate=0.05))
        assert {r.mode for r in trace.rows} <= {"short", "long"}
        assert all(1 <= r.step <= 8 for r in trace.rows)
        only_long = train_toy(task, 3, TrainConfig(seed=13, p_long=1.0))
        assert {r.mode for r in only_long.rows} == {"long"}

    def test_csv_columns(self):
        task = ArithmeticTask(seed=4)
        trace = train_toy(task, 2, TrainConfig(seed=13))
        buf = io.StringIO()
        trace.write_csv(buf)
        header = buf.getvalue().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)

    def test_format_reward_is_always_earned_by_templates(self):
        task = ArithmeticTask(seed=6)
        trace = train_toy(task, 5, TrainConfig(seed=21))
        for row in trace.rows:
            assert row.mean_r_format == 1.0
            assert row.mean_r_rep == 0.0


class LongReferenceTask(ArithmeticTask):
    """References too long for the rule verifier, so the trainer takes
    the probability branch."""

    def __init__(self):
        super().__init__(num_prompts=4, seed=0)
        self.prompts = [
            ToyPrompt(
                prompt_id=p.prompt_id,
                text=p.text,
                reference=" ".join(p.reference * 6),
            )
            for p in self.prompts
        ]


def test_probability_branch_end_to_end():
    from mllm_lab.hybrid_rl import Verifier, route_verifier

    task = LongReferenceTask()
    assert all(
        route_verifier(p.reference) is Verifier.PROBABILITY for p in task.prompts
    )
    cfg = TrainConfig(seed=3, learning_rate=0.01, prompts_per_batch=4, group_size=4)
    trace = train_toy(task, 4, cfg, record_rollouts=True)
    assert trace.rollouts
    for group in trace.rollouts:
        for rb in group.rewards:
            assert 0.0 <= rb.r_acc <= 1.0
            assert rb.total == rb.recomputed_total()
    # fresh policy slots are uniform over ten digits
    first_step = [r for r in trace.rows if r.step == 1]
    for row in first_step:
        assert row.mean_r_acc == pytest.approx(0.1, abs=0.02)


def test_rule_and_probability_rewards_agree_on_rule_routable_answers():
    # whenever the rule verifier separates right from wrong, a policy
    # with mass on the truth gives the correct reference a strictly
    # higher probability reward than any wrong candidate
    task = ArithmeticTask(seed=8)
    policy = ToyPolicy(vocab=task.vocab, think_slots=1, answer_slots=1)
    for p in task.prompts:
        state = (p.text, "short", 0)
        logits = np.zeros(10)
        logits[int(p.reference)] = 2.0
        policy.apply_gradients({state: logits}, lr=1.0)
    for p in task.prompts:
        correct = prob_reward(policy, p.text, "answer: ", p.reference)
        for wrong in range(10):
            if str(wrong) == p.reference:
                continue
            assert rule_reward(f"answer: {wrong}", p.reference) == 0
            assert rule_reward(f"answer: {p.reference}", p.reference) == 1
            assert correct > prob_reward(policy, p.text, "answer: ", str(wrong))
