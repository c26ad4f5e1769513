"""Sampled candidate solutions and their provenance."""

from __future__ import annotations

from dataclasses import dataclass, field

ONLINE = "online"
GREEDY = "greedy"
NS = "ns"
OPRO = "opro"
WARMSTART = "warmstart"

PROVENANCES = (ONLINE, GREEDY, NS, OPRO, WARMSTART)

#: Provenances whose members are newly generated (and therefore consume
#: evaluation budget); greedy members are reused from the archive.
NEW_PROVENANCES = (ONLINE, NS, OPRO, WARMSTART)


@dataclass
class Completion:
    """One candidate solution: token sequence, decoded text, score.

    ``score`` is set exactly once via :meth:`set_score`; greedy reuse shares
    the already-scored object instead of re-scoring.
    """

    tokens: tuple[int, ...]
    provenance: str
    born_iteration: int = 0
    text: str = ""
    score: float | None = field(default=None)

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        self.tokens = tuple(int(t) for t in self.tokens)

    @property
    def is_new(self) -> bool:
        return self.provenance in NEW_PROVENANCES

    def set_score(self, value: float) -> None:
        if self.score is not None:
            raise ValueError("completion score is already set")
        self.score = float(value)
