import numpy as np
import pytest

from migrate.completion import Completion
from migrate.grpo import (Adam, ClipConfig, DegenerateGroupError, Group, NonFiniteLossError,
                          compute_advantages, freeze_logprobs, grpo_loss_and_grad,
                          make_group, update_policy)
from migrate.policy import TASK_CONTEXT, Vocabulary, init_params, logprobs

CLIP = ClipConfig()


def make_vocab(size):
    return Vocabulary(tuple(f"t{i}" for i in range(size - 1)) + ("</s>",), end_token=size - 1)


def random_params(rng, size=6, max_len=5, scale=0.6):
    base = init_params(make_vocab(size), position_buckets=3, max_len=max_len)
    return base.with_weights(rng.normal(scale=scale, size=base.W.shape))


def random_group(params, rng, n=4, max_tokens=4, old_params=None):
    """Group with rewards drawn at random; old log-probs frozen under
    old_params (defaults to params, giving ratio-1 groups)."""
    comps = []
    for i in range(n):
        length = int(rng.integers(1, max_tokens + 1))
        tokens = tuple(int(t) for t in rng.integers(0, params.vocab.size, size=length))
        comps.append(Completion(tokens=tokens, provenance="online", born_iteration=1,
                                text=str(i), score=float(rng.normal())))
    rewards = np.asarray([c.score for c in comps])
    source = params if old_params is None else old_params
    return Group(comps, rewards, compute_advantages(rewards),
                 freeze_logprobs(source, comps), iteration=1)


class TestAdvantages:
    def test_mean_subtraction(self):
        adv = compute_advantages(np.array([1.0, 0.0, 0.0, 0.0, 0.0]))
        assert np.allclose(adv, [0.8, -0.2, -0.2, -0.2, -0.2], atol=1e-15)

    def test_constant_rewards_zero(self):
        adv = compute_advantages(np.array([0.3] * 5))
        assert np.all(adv == 0.0)

    def test_no_std_normalization(self):
        # A std-normalized oracle must disagree once the spread changes.
        pattern = np.array([2.0, -1.0, -1.0])
        wide, narrow = 10.0 * pattern, 1.0 * pattern
        adv_wide = compute_advantages(wide)
        adv_narrow = compute_advantages(narrow)
        std_oracle = (wide - wide.mean()) / wide.std()
        assert np.allclose(adv_wide, 10.0 * adv_narrow)
        assert not np.allclose(adv_wide, std_oracle)

    def test_sum_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            rewards = rng.normal(size=int(rng.integers(2, 10)))
            assert abs(compute_advantages(rewards).sum()) <= 1e-12

    def test_degenerate_group(self):
        with pytest.raises(DegenerateGroupError):
            compute_advantages(np.array([1.0]))


class TestLoss:
    def test_ratio_one_equals_reinforce_baseline(self):
        # At theta == theta_old every ratio is exactly 1, so the loss is
        # -(1/total_len) * sum_i len_i * adv_i.
        rng = np.random.default_rng(1)
        for _ in range(20):
            params = random_params(rng)
            group = random_group(params, rng)
            loss, grad, diag = grpo_loss_and_grad(params, group, CLIP)
            lens = np.array([len(c.tokens) for c in group.completions])
            expected = -(lens * group.advantages).sum() / lens.sum()
            assert abs(loss - expected) <= 1e-12
            assert diag.mean_ratio == 1.0
            assert diag.clip_low_frac == 0.0 and diag.clip_high_frac == 0.0

    def test_clip_saturation_value_and_zero_gradient(self):
        # rho = 1 + eps_high + 0.5 with positive advantage: the token
        # contributes the clipped value and no gradient.
        params = init_params(make_vocab(4), max_len=3)
        comp = Completion(tokens=(1,), provenance="online", text="x", score=1.0)
        other = Completion(tokens=(2,), provenance="online", text="y", score=0.0)
        group = make_group(params, [comp, other], iteration=1)
        rho = 1 + CLIP.eps_high + 0.5
        old = [group.old_logprobs[0] - np.log(rho), group.old_logprobs[1] + np.log(rho)]
        group = Group(group.completions, group.rewards, group.advantages, old, 1)
        loss, grad, diag = grpo_loss_and_grad(params, group, CLIP)
        # token 1: adv +0.5 at ratio ~1.78 -> clipped high; token 2: adv -0.5
        # at ratio ~0.56 -> clipped low. Both gradients vanish.
        expected = -((1 + CLIP.eps_high) * 0.5 + (1 - CLIP.eps_low) * -0.5) / 2
        assert loss == pytest.approx(expected, abs=1e-12)
        assert np.all(grad == 0.0)
        assert diag.clip_high_frac == 0.5 and diag.clip_low_frac == 0.5

    def test_gradient_matches_central_differences(self):
        # Off-policy groups (old log-probs from perturbed params) exercise
        # non-unit ratios and both clip branches.
        rng = np.random.default_rng(2)
        h = 1e-6
        checked_clipped = 0
        for trial in range(30):
            size = int(rng.integers(3, 7))
            params = random_params(rng, size=size)
            old_params = params if trial % 3 == 0 else \
                params.with_weights(params.W + rng.normal(scale=0.4, size=params.W.shape))
            group = random_group(params, rng, n=int(rng.integers(2, 5)), old_params=old_params)
            loss, grad, diag = grpo_loss_and_grad(params, group, CLIP)
            checked_clipped += diag.clip_low_frac > 0 or diag.clip_high_frac > 0
            fd = np.zeros_like(grad)
            for f in range(grad.shape[0]):
                for v in range(grad.shape[1]):
                    for sign in (1.0, -1.0):
                        W = params.W.copy()
                        W[f, v] += sign * h
                        l2, _, _ = grpo_loss_and_grad(params.with_weights(W), group, CLIP)
                        fd[f, v] += sign * l2 / (2 * h)
            scale = max(1e-8, np.abs(grad).max(), np.abs(fd).max())
            assert np.abs(grad - fd).max() / scale <= 1e-6
        assert checked_clipped > 0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        params = random_params(rng)
        group = random_group(params, rng, n=5)
        loss, _, _ = grpo_loss_and_grad(params, group, CLIP)
        perm = rng.permutation(5)
        shuffled = Group([group.completions[i] for i in perm], group.rewards[perm],
                         group.advantages[perm], [group.old_logprobs[i] for i in perm], 1)
        loss_p, _, _ = grpo_loss_and_grad(params, shuffled, CLIP)
        assert loss == pytest.approx(loss_p, abs=1e-12)

    def test_non_finite_old_logprobs_rejected(self):
        rng = np.random.default_rng(4)
        params = random_params(rng)
        group = random_group(params, rng)
        group.old_logprobs[0] = group.old_logprobs[0] - np.inf  # ratio -> exp(+inf)
        with pytest.raises(NonFiniteLossError) as err:
            grpo_loss_and_grad(params, group, CLIP)
        assert err.value.diagnostics is not None


class TestUpdate:
    def test_zero_advantages_noop(self):
        rng = np.random.default_rng(5)
        params = random_params(rng)
        comps = [Completion(tokens=(0, 1), provenance="online", text="a", score=0.4),
                 Completion(tokens=(2,), provenance="online", text="b", score=0.4)]
        group = make_group(params, comps)
        new, diags = update_policy(params, group, CLIP, lr=0.5, mu=3)
        assert new.W.tobytes() == params.W.tobytes()
        assert diags[0].loss == 0.0

    def test_positive_advantage_raises_probability(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            params = random_params(rng)
            good = Completion(tokens=(1, 2), provenance="online", text="g", score=1.0)
            bad = Completion(tokens=(3,), provenance="online", text="b", score=0.0)
            group = make_group(params, [good, bad])
            before = logprobs(params, TASK_CONTEXT, good.tokens).sum()
            new, _ = update_policy(params, group, CLIP, lr=0.1, mu=1)
            after = logprobs(new, TASK_CONTEXT, good.tokens).sum()
            assert after > before

    def test_mu_two_equals_manual_replay(self):
        # mu=2 must be bit-identical to two manual steps against the same
        # frozen old log-probs (dense-gradient arithmetic).
        rng = np.random.default_rng(7)
        for _ in range(10):
            params = random_params(rng)
            group = random_group(params, rng)
            lr = 0.2
            auto, _ = update_policy(params, group, CLIP, lr=lr, mu=2)
            _, g1, _ = grpo_loss_and_grad(params, group, CLIP)
            step1 = params.with_weights(params.W - lr * g1)
            _, g2, _ = grpo_loss_and_grad(step1, group, CLIP)
            step2 = step1.with_weights(step1.W - lr * g2)
            assert auto.W.tobytes() == step2.W.tobytes()

    def test_original_params_unmodified(self):
        rng = np.random.default_rng(8)
        params = random_params(rng)
        snapshot = params.W.copy()
        group = random_group(params, rng)
        update_policy(params, group, CLIP, lr=0.3, mu=2)
        assert np.array_equal(params.W, snapshot)

    def test_adam_optimizer_path(self):
        rng = np.random.default_rng(9)
        params = random_params(rng)
        group = random_group(params, rng)
        new, diags = update_policy(params, group, CLIP, lr=0.05, mu=2,
                                   optimizer=Adam(0.05))
        assert new.W.shape == params.W.shape
        assert len(diags) == 2
        assert not np.array_equal(new.W, params.W)

    def test_mu_must_be_positive(self):
        rng = np.random.default_rng(10)
        params = random_params(rng)
        group = random_group(params, rng)
        with pytest.raises(ValueError):
            update_policy(params, group, CLIP, lr=0.1, mu=0)


class TestGroupInvariants:
    def test_requires_scored_members(self):
        params = init_params(make_vocab(4), max_len=3)
        with pytest.raises(ValueError):
            make_group(params, [Completion(tokens=(0,), provenance="online")] * 2)

    def test_old_logprob_shapes_checked(self):
        params = init_params(make_vocab(4), max_len=3)
        comps = [Completion(tokens=(0, 1), provenance="online", text="a", score=1.0),
                 Completion(tokens=(2,), provenance="online", text="b", score=0.0)]
        with pytest.raises(ValueError):
            Group(comps, np.array([1.0, 0.0]), np.array([0.5, -0.5]),
                  [np.zeros(1), np.zeros(1)], 1)
