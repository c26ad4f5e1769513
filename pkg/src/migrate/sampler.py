"""Mixed-policy group construction: online, greedy, and local proposals.

Each iteration draws ``alpha`` fresh on-policy samples, reuses ``beta``
archive members chosen uniformly from the top-k, and generates ``gamma``
local proposals (neighborhood mutations of high-reward exemplars, or
score-weighted trajectory recombinations for the OPRO-style variant).
Only online and local members are newly evaluated; greedy members ride
along with their stored scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .archive import Archive
from .completion import GREEDY, NS, ONLINE, OPRO, Completion
from .policy import ContextId, PolicyParams, neighborhood_context, sample_completion


@dataclass(frozen=True)
class MixSpec:
    """Group composition knobs; alpha + beta + gamma must equal group_size."""

    alpha: int
    beta: int
    gamma: int
    group_size: int
    k: int = 1
    mutation_rate: float = 0.25

    def __post_init__(self) -> None:
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("alpha, beta, gamma must be >= 0")
        if self.alpha + self.beta + self.gamma != self.group_size:
            raise ValueError("alpha + beta + gamma must equal group_size")
        if self.alpha + self.gamma < 1:
            raise ValueError("at least one new sample per iteration is required")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.mutation_rate <= 1:
            raise ValueError("mutation_rate must be in (0, 1]")


@dataclass
class GroupDraft:
    """Unscored group in fixed (online, greedy, local) order."""

    online: list[Completion]
    greedy: list[Completion]
    local: list[Completion]

    @property
    def members(self) -> list[Completion]:
        return self.online + self.greedy + self.local

    def __len__(self) -> int:
        return len(self.online) + len(self.greedy) + len(self.local)


def sample_online(params: PolicyParams, context: ContextId, alpha: int, temperature: float,
                  rng: np.random.Generator, *, born_iteration: int = 0) -> list[Completion]:
    """``alpha`` independent ancestral draws under the given context."""
    return [sample_completion(params, context, temperature, rng,
                              provenance=ONLINE, born_iteration=born_iteration)
            for _ in range(alpha)]


def select_greedy(archive: Archive, k: int, beta: int,
                  rng: np.random.Generator) -> list[Completion]:
    """Uniform draws (with replacement) from the archive's top-k.

    Selections are relabeled ``greedy`` copies of the stored entries (score
    carried over, never re-evaluated); an empty archive yields an empty list
    and the caller backfills with online samples.
    """
    if beta <= 0:
        return []
    pool = archive.topk(k)
    if not pool:
        return []
    picks = rng.integers(0, len(pool), size=beta)
    return [Completion(tokens=pool[int(i)].tokens, provenance=GREEDY,
                       born_iteration=pool[int(i)].born_iteration,
                       text=pool[int(i)].text, score=pool[int(i)].score)
            for i in picks]


def propose_neighborhood(params: PolicyParams, greedy_samples: list[Completion], gamma: int,
                         mutation_rate: float, rng: np.random.Generator, temperature: float = 1.0,
                         *, born_iteration: int = 0) -> list[Completion]:
    """Stochastic variations of exemplars under one shared neighborhood context.

    Each proposal copies a uniformly chosen exemplar and independently
    resamples every token position with probability ``mutation_rate`` from
    the policy conditioned on the neighborhood context built from all
    exemplars together.
    """
    if gamma <= 0:
        return []
    if not greedy_samples:
        raise ValueError("neighborhood proposals need at least one exemplar")
    context = neighborhood_context([c.tokens for c in greedy_samples])
    v = params.vocab
    out: list[Completion] = []
    for _ in range(gamma):
        exemplar = greedy_samples[int(rng.integers(0, len(greedy_samples)))]
        base = np.asarray(exemplar.tokens, dtype=np.int64)
        gate_u = rng.random(base.size)
        tok_u = rng.random(base.size)
        mutated = kernels.mutate_tokens(params.W, v.size, params.position_buckets,
                                        params.max_len, v.end_token, int(context.kind),
                                        temperature, base, gate_u, tok_u, mutation_rate)
        out.append(Completion(tokens=tuple(int(t) for t in mutated), provenance=NS,
                              born_iteration=born_iteration))
    return out


def _trajectory_weights(scores: np.ndarray) -> np.ndarray:
    # Shift to non-negative; the floor keeps every parent selectable and
    # degrades to uniform when all scores tie.
    lo, hi = scores.min(), scores.max()
    w = (scores - lo) + 0.05 * (hi - lo) + 1e-12
    return w / w.sum()


def propose_trajectory(top_m: list[Completion], gamma: int, mutation_rate: float,
                       rng: np.random.Generator, vocab_size: int,
                       *, born_iteration: int = 0) -> list[Completion]:
    """Positional recombination of a ranked trajectory of past solutions.

    Proposal length is drawn from the score-weighted length distribution of
    the parents; each position is drawn from the score-weighted empirical
    token distribution at that position, then mutated uniformly over the
    vocabulary with probability ``mutation_rate``.
    """
    if gamma <= 0:
        return []
    if not top_m:
        raise ValueError("trajectory proposals need a non-empty ranked list")
    scores = np.asarray([c.score if c.score is not None else 0.0 for c in top_m])
    weights = _trajectory_weights(scores)
    lengths = np.asarray([len(c.tokens) for c in top_m])
    out: list[Completion] = []
    for _ in range(gamma):
        n = int(lengths[int(rng.choice(len(top_m), p=weights))])
        tokens: list[int] = []
        for pos in range(n):
            live = [i for i in range(len(top_m)) if lengths[i] > pos]
            w = weights[live] / weights[live].sum()
            parent = top_m[live[int(rng.choice(len(live), p=w))]]
            tok = parent.tokens[pos]
            if rng.random() < mutation_rate:
                tok = int(rng.integers(0, vocab_size))
            tokens.append(int(tok))
        out.append(Completion(tokens=tuple(tokens), provenance=OPRO,
                              born_iteration=born_iteration))
    return out


def construct_group(mix: MixSpec, params: PolicyParams, archive: Archive,
                    task_context: ContextId, temperature: float, rng: np.random.Generator,
                    *, born_iteration: int = 0, local_kind: str = NS, opro_depth: int = 10,
                    islands: bool = False, island_rng: np.random.Generator | None = None,
                    mutation_temperature: float | None = None) -> GroupDraft:
    """Build one group of exactly ``group_size`` members.

    Cold start (empty archive) backfills every greedy/local slot with extra
    online samples; all of those count as new evaluations. With islands
    enabled the neighborhood exemplar comes from the archive's island cursor
    instead of the global top-k.
    """
    alpha, beta, gamma = mix.alpha, mix.beta, mix.gamma
    if len(archive) == 0:
        alpha, beta, gamma = mix.group_size, 0, 0

    online = sample_online(params, task_context, alpha, temperature, rng,
                           born_iteration=born_iteration)
    greedy = select_greedy(archive, mix.k, beta, rng)
    local: list[Completion] = []
    if gamma > 0:
        if local_kind == OPRO:
            top_m = archive.topk(opro_depth)
            local = propose_trajectory(top_m, gamma, mix.mutation_rate, rng,
                                       params.vocab.size, born_iteration=born_iteration)
        else:
            if islands:
                exemplars = [archive.island_select(island_rng if island_rng is not None else rng,
                                                   mix.k)]
            elif greedy:
                exemplars = greedy
            else:
                exemplars = select_greedy(archive, mix.k, 1, rng)
            local = propose_neighborhood(
                params, exemplars, gamma, mix.mutation_rate, rng,
                mutation_temperature if mutation_temperature is not None else temperature,
                born_iteration=born_iteration)
    return GroupDraft(online, greedy, local)
