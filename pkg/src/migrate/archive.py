"""Database of evaluated completions with budget accounting and islands.

The archive tracks every scored completion, the evaluation count (the
search budget currency), and the best entry so far. It can optionally be
partitioned into islands that are visited cyclically; a per-step selection
mixes exploitation (island members that are also globally top-k) with
exploration (island elites outside the global top-k), and elites migrate
periodically to the next island along a ring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .completion import GREEDY, Completion


class ArchiveError(ValueError):
    pass


@dataclass
class IslandConfig:
    count: int = 4
    exploit_prob: float = 0.7
    migration_interval: int = 10
    migration_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("island count must be >= 1")
        if not 0 <= self.exploit_prob <= 1:
            raise ValueError("exploit_prob must be in [0, 1]")
        if self.migration_interval < 1:
            raise ValueError("migration_interval must be >= 1")
        if not 0 <= self.migration_fraction <= 1:
            raise ValueError("migration_fraction must be in [0, 1]")


class Archive:
    """Single-writer store; reads may snapshot freely."""

    def __init__(self, islands: IslandConfig | None = None):
        self.entries: list[Completion] = []
        self.evaluated_count = 0
        self.islands = islands
        self.cursor = 0
        self._island_of: list[int] = []
        self._best_index: int | None = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def best(self) -> Completion | None:
        if self._best_index is None:
            return None
        return self.entries[self._best_index]

    @property
    def best_score(self) -> float:
        return -np.inf if self.best is None else float(self.best.score)

    def island_of(self, index: int) -> int | None:
        return self._island_of[index] if self.islands else None

    def island_members(self, island: int) -> list[int]:
        return [i for i, isl in enumerate(self._island_of) if isl == island]

    def insert(self, completions: list[Completion], *, island: int | None = None) -> None:
        """Add newly evaluated completions, charging them to the budget.

        Greedy-provenance members are reused, not new, and are rejected;
        every member must already carry a score. With islands enabled the
        batch lands on the current cursor island unless overridden.
        """
        for c in completions:
            if c.provenance == GREEDY:
                raise ArchiveError("greedy members are reused, not inserted")
            if c.score is None:
                raise ArchiveError("cannot insert an unscored completion")
        target = self.cursor if island is None else island
        for c in completions:
            self.entries.append(c)
            if self.islands:
                self._island_of.append(target)
            if self._best_index is None or c.score > self.entries[self._best_index].score:
                self._best_index = len(self.entries) - 1
        self.evaluated_count += len(completions)

    def _ranked(self, indices: list[int] | None = None) -> list[int]:
        idx = range(len(self.entries)) if indices is None else indices
        return sorted(idx, key=lambda i: (-self.entries[i].score, self.entries[i].born_iteration, i))

    def topk(self, k: int) -> list[Completion]:
        """Best k entries, score descending; ties go to the earlier
        born_iteration, then earlier insertion."""
        if k < 1:
            raise ArchiveError("k must be >= 1")
        return [self.entries[i] for i in self._ranked()[:k]]

    def island_select(self, rng: np.random.Generator, k: int) -> Completion:
        """Advance to the next non-empty island and pick an exemplar from it.

        With probability ``exploit_prob`` the pick is uniform over island
        members that are also globally top-k; otherwise (or when the island
        holds none) it is uniform over the island's top min(k, size) entries
        that are *not* globally top-k, falling back to the exploit pool when
        the island consists purely of global top-k members.
        """
        if not self.islands:
            raise ArchiveError("islands are not enabled")
        if not self.entries:
            raise ArchiveError("all islands are empty")
        n = self.islands.count
        for step in range(1, n + 1):
            candidate = (self.cursor + step) % n
            if self.island_members(candidate):
                self.cursor = candidate
                break
        members = self.island_members(self.cursor)
        global_top = set(self._ranked()[:k])
        island_top = self._ranked(members)[: min(k, len(members))]
        exploit_pool = [i for i in members if i in global_top]
        explore_pool = [i for i in island_top if i not in global_top]
        exploit = rng.random() < self.islands.exploit_prob
        if exploit:
            pool = exploit_pool or explore_pool
        else:
            pool = explore_pool or exploit_pool
        return self.entries[pool[int(rng.integers(0, len(pool)))]]

    def migrate(self) -> None:
        """Copy each island's top fraction of entries to the next island on
        the ring (island count-1 feeds island 0). Copies do not consume
        budget."""
        if not self.islands:
            raise ArchiveError("islands are not enabled")
        n = self.islands.count
        moves: list[tuple[Completion, int]] = []
        for island in range(n):
            members = self.island_members(island)
            if not members:
                continue
            take = int(np.ceil(self.islands.migration_fraction * len(members)))
            for i in self._ranked(members)[:take]:
                moves.append((replace(self.entries[i]), (island + 1) % n))
        for entry, dest in moves:
            self.entries.append(entry)
            self._island_of.append(dest)
            if entry.score > self.entries[self._best_index].score:
                self._best_index = len(self.entries) - 1

    def dump_jsonl(self, path: str | Path) -> None:
        """One record per entry: {text, score, provenance, iteration, island}."""
        with open(path, "w", encoding="utf-8") as fh:
            for i, c in enumerate(self.entries):
                record = {"text": c.text, "score": c.score, "provenance": c.provenance,
                          "iteration": c.born_iteration, "island": self.island_of(i)}
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
