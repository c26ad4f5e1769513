"""Group-relative clipped policy updates.

One group = N scored completions. Advantages are mean-centered rewards
(no standard-deviation scaling), applied uniformly to every token of a
completion. The loss is the clipped importance-ratio surrogate, normalized
by the total token count of the group, with no KL term; new log-probs are
always taken under the task context regardless of how a member was sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .completion import Completion
from .policy import TASK_CONTEXT, PolicyParams, logprobs


class DegenerateGroupError(ValueError):
    """Fewer than two completions: no within-group baseline exists."""


class NonFiniteLossError(RuntimeError):
    """Loss or ratios became non-finite; carries the step diagnostics."""

    def __init__(self, message: str, diagnostics: "GrpoDiagnostics | None" = None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class ClipConfig:
    """Asymmetric ratio clip; the wider high side leaves room for
    low-probability tokens to grow."""

    eps_low: float = 0.2
    eps_high: float = 0.28

    def __post_init__(self) -> None:
        if not 0 < self.eps_low < 1:
            raise ValueError("eps_low must be in (0, 1)")
        if self.eps_high <= 0:
            raise ValueError("eps_high must be positive")


@dataclass(frozen=True)
class GrpoDiagnostics:
    loss: float
    mean_ratio: float
    clip_low_frac: float
    clip_high_frac: float


@dataclass
class Group:
    """Completions of one update step plus frozen pre-step log-probs."""

    completions: list[Completion]
    rewards: np.ndarray
    advantages: np.ndarray
    old_logprobs: list[np.ndarray]
    iteration: int = 0

    def __post_init__(self) -> None:
        n = len(self.completions)
        if not (n == len(self.rewards) == len(self.advantages) == len(self.old_logprobs)):
            raise ValueError("group fields must all have length N")
        for c, lp in zip(self.completions, self.old_logprobs):
            if len(c.tokens) != len(lp):
                raise ValueError("old_logprobs shape must match token sequence")

    @property
    def size(self) -> int:
        return len(self.completions)


def compute_advantages(rewards: np.ndarray) -> np.ndarray:
    """Mean-centered rewards, deliberately not divided by the std.

    An all-equal group returns exact zeros so the downstream update is a
    bit-exact no-op.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise DegenerateGroupError(f"group of {r.size} has no relative baseline")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    return r - r.mean()


def freeze_logprobs(params: PolicyParams, completions: list[Completion]) -> list[np.ndarray]:
    """Task-context log-probs under the current (pre-step) policy."""
    return [logprobs(params, TASK_CONTEXT, c.tokens) for c in completions]


def make_group(params: PolicyParams, completions: list[Completion], iteration: int = 0) -> Group:
    """Assemble a group from scored completions, freezing old log-probs now."""
    scores = []
    for c in completions:
        if c.score is None:
            raise ValueError("all group members must be scored")
        scores.append(c.score)
    rewards = np.asarray(scores, dtype=np.float64)
    return Group(list(completions), rewards, compute_advantages(rewards),
                 freeze_logprobs(params, completions), iteration)


def _flatten(group: Group) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = [len(c.tokens) for c in group.completions]
    offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    tokens_flat = np.concatenate(
        [np.asarray(c.tokens, dtype=np.int64) for c in group.completions]
    ) if offsets[-1] else np.zeros(0, dtype=np.int64)
    old_flat = np.concatenate(group.old_logprobs) if offsets[-1] else np.zeros(0)
    return tokens_flat, offsets, old_flat


def _terms(W: np.ndarray, params: PolicyParams, group: Group, clip: ClipConfig):
    v = params.vocab
    tokens_flat, offsets, old_flat = _flatten(group)
    out = kernels.grpo_token_terms(W, v.size, params.position_buckets, params.max_len,
                                   v.end_token, tokens_flat, offsets,
                                   group.advantages, old_flat, clip.eps_low, clip.eps_high)
    return tokens_flat, out


def _diagnostics(obj_sum, ratios, low, high, total_len) -> GrpoDiagnostics:
    if total_len == 0:
        return GrpoDiagnostics(0.0, 1.0, 0.0, 0.0)
    return GrpoDiagnostics(loss=-obj_sum / total_len,
                           mean_ratio=float(ratios.mean()),
                           clip_low_frac=float(low.sum()) / total_len,
                           clip_high_frac=float(high.sum()) / total_len)


def grpo_loss_and_grad(params: PolicyParams, group: Group,
                       clip: ClipConfig) -> tuple[float, np.ndarray, GrpoDiagnostics]:
    """Loss, exact dense gradient w.r.t. W, and step diagnostics."""
    tokens_flat, (obj_sum, slots, coeffs, probs, ratios, low, high) = _terms(
        params.W, params, group, clip)
    total_len = int(tokens_flat.size)
    diag = _diagnostics(obj_sum, ratios, low, high, total_len)
    if total_len == 0:
        return 0.0, np.zeros_like(params.W), diag
    if not np.isfinite(obj_sum) or not np.all(np.isfinite(ratios)):
        raise NonFiniteLossError("non-finite ratio or loss in group", diag)
    grad = kernels.grpo_dense_grad(slots, coeffs, probs, tokens_flat,
                                   params.feature_dim, params.vocab.size, float(total_len))
    return diag.loss, grad, diag


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: np.ndarray | None = field(default=None, repr=False)
    _v: np.ndarray | None = field(default=None, repr=False)
    _t: int = field(default=0, repr=False)

    def apply(self, W: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._m is None:
            self._m = np.zeros_like(W)
            self._v = np.zeros_like(W)
        self._t += 1
        self._m = self.beta1 * self._m + (1 - self.beta1) * grad
        self._v = self.beta2 * self._v + (1 - self.beta2) * grad * grad
        m_hat = self._m / (1 - self.beta1 ** self._t)
        v_hat = self._v / (1 - self.beta2 ** self._t)
        return W - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def update_policy(params: PolicyParams, group: Group, clip: ClipConfig, lr: float,
                  mu: int, optimizer: Adam | None = None) -> tuple[PolicyParams, list[GrpoDiagnostics]]:
    """Run ``mu`` gradient steps against the group's frozen old log-probs.

    The default SGD path updates only the weight rows the group touches and
    is bit-identical to materializing the dense gradient. An all-equal
    reward group returns the input params unchanged (silent no-op).
    """
    if mu < 1:
        raise ValueError("mu must be >= 1")
    if np.all(group.advantages == 0.0):
        return params, [GrpoDiagnostics(0.0, 1.0, 0.0, 0.0)]
    diags: list[GrpoDiagnostics] = []
    if optimizer is not None:
        current = params
        for _ in range(mu):
            loss, grad, diag = grpo_loss_and_grad(current, group, clip)
            diags.append(diag)
            current = current.with_weights(optimizer.apply(current.W, grad))
        return current, diags
    W = params.W.copy()
    v = params.vocab
    for _ in range(mu):
        tokens_flat, (obj_sum, slots, coeffs, probs, ratios, low, high) = _terms(
            W, params, group, clip)
        total_len = int(tokens_flat.size)
        diag = _diagnostics(obj_sum, ratios, low, high, total_len)
        diags.append(diag)
        if total_len == 0:
            break
        if not np.isfinite(obj_sum) or not np.all(np.isfinite(ratios)):
            raise NonFiniteLossError("non-finite ratio or loss in group", diag)
        kernels.grpo_apply_sgd(W, slots, coeffs, probs, tokens_flat, lr, float(total_len))
    return params.with_weights(W), diags
