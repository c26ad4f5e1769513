"""Hidden-word search scored by embedding cosine similarity.

Completions are character sequences holding up to two space-separated
words. A guess scores its cosine to the hidden word when it appears in the
embedding table and 0 otherwise, so almost all raw strings are worthless
and progress hinges on exploiting the table's planted edit-tree structure:
one-character edits of known words tend to be nearby words with similar
scores.

New group members are generated as word batches: all fresh words of a
provenance class are scored individually, sorted by score, and re-paired
into two-word completions whose reward is the better word's score. Guessing
the hidden word scores exactly 1.0, which doubles as the optimality signal.
"""

from __future__ import annotations

import numpy as np

from ..completion import WARMSTART, Completion
from ..policy import Vocabulary
from .base import SearchTask
from .embeddings import EmbeddingTable

SEPARATOR = " "
END = "</s>"


class WordSearchTask(SearchTask):
    name = "words"

    def __init__(self, table: EmbeddingTable, hidden_word: str, warmstart_count: int = 20,
                 words_per_completion: int = 2):
        if hidden_word not in table:
            raise ValueError(f"hidden word {hidden_word!r} not in table")
        chars = sorted({ch for word in table.words for ch in word})
        if SEPARATOR in chars or any(not w for w in table.words):
            raise ValueError("table words must be non-empty and contain no spaces")
        self.table = table
        self.hidden_word = hidden_word
        self.warmstart_count = warmstart_count
        self.words_per_completion = words_per_completion
        self.word_cap = max(len(w) for w in table.words)
        self.vocab = Vocabulary(tuple(chars) + (SEPARATOR, END), end_token=len(chars) + 1)
        self.max_len = words_per_completion * (self.word_cap + 1) - 1
        self._char_index = {ch: i for i, ch in enumerate(chars)}
        self._sep_token = len(chars)
        self._hidden_vec = table.vectors[table.index(hidden_word)]

    def decode(self, tokens: tuple[int, ...]) -> str:
        return "".join(self.vocab.tokens[t] for t in self.strip_end(tokens))

    def decode_words(self, tokens: tuple[int, ...]) -> list[str]:
        """Words in a completion, each capped at the table's longest word."""
        parts = [w for w in self.decode(tokens).split(SEPARATOR) if w]
        return [w[: self.word_cap] for w in parts[: self.words_per_completion]]

    def encode_words(self, words: list[str]) -> tuple[int, ...]:
        tokens: list[int] = []
        for i, word in enumerate(words):
            if i:
                tokens.append(self._sep_token)
            tokens.extend(self._char_index[ch] for ch in word)
        return tuple(tokens)

    def warmstart(self, rng: np.random.Generator) -> list[Completion]:
        picks = rng.choice(self.table.size, size=self.warmstart_count, replace=False)
        out = []
        for idx in picks:
            word = self.table.words[int(idx)]
            out.append(Completion(tokens=self.encode_words([word]), provenance=WARMSTART,
                                  born_iteration=0, text=word, score=word_reward(self, word)))
        return out

    def score_new(self, completions: list[Completion], born_iteration: int) -> list[Completion]:
        """Re-pair each provenance class's fresh words by descending score."""
        out: list[Completion] = []
        for provenance, segment in _segments(completions):
            words = [w for c in segment for w in self.decode_words(c.tokens)]
            scores = np.asarray([word_reward(self, w) for w in words])
            order = np.argsort(-scores, kind="stable") if words else []
            ranked = [words[i] for i in order]
            for i in range(len(segment)):
                pair = ranked[2 * i: 2 * i + 2]
                if pair:
                    tokens = self.encode_words(pair)
                    score = float(scores[order[2 * i]])
                    text = SEPARATOR.join(pair)
                else:
                    tokens, score, text = (self.vocab.end_token,), 0.0, ""
                out.append(Completion(tokens=tokens, provenance=provenance,
                                      born_iteration=born_iteration, text=text, score=score))
        return out


def _segments(completions: list[Completion]):
    """Consecutive runs of equal provenance, in input order."""
    start = 0
    for i in range(1, len(completions) + 1):
        if i == len(completions) or completions[i].provenance != completions[start].provenance:
            yield completions[start].provenance, completions[start:i]
            start = i


def word_reward(task: WordSearchTask, guess: str) -> float:
    """Cosine similarity to the hidden word; 1.0 exactly on a correct guess,
    0.0 for strings outside the table."""
    if guess == task.hidden_word:
        return 1.0
    if guess not in task.table:
        return 0.0
    return float(np.clip(task.table.cosine(guess, task.hidden_word), -1.0, 1.0))
