"""Feature-linear softmax token policy with exact, cheap log-prob gradients.

The policy is first-order Markov: a step's logits are a linear function of
three one-hot features (conditioning context kind, previous token, clamped
position bucket), so a completion's log-probability and its gradient with
respect to the weight matrix are available in closed form.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .completion import ONLINE, Completion

PARAMS_MAGIC = b"MGP1"
_HEADER = struct.Struct("<4sIIII")


class PolicyIOError(Exception):
    """Base error for parameter (de)serialization."""


class ParamsVersionError(PolicyIOError):
    """Stream magic/version does not match this loader."""


class ParamsTruncatedError(PolicyIOError):
    """Stream ends before the declared payload is complete."""


class ParamsNonFiniteError(PolicyIOError):
    """Deserialized weights contain NaN or infinity."""


class ParamsFormatError(PolicyIOError):
    """Header fields are internally inconsistent."""


class ContextKind(enum.IntEnum):
    TASK = 0
    NEIGHBORHOOD = 1


@dataclass(frozen=True)
class ContextId:
    """Conditioning context: task search vs. neighborhood of exemplars.

    ``exemplar_digest`` is a fixed-width summary of the exemplars behind a
    neighborhood context (always 0 for the task context). It records what
    the context was built from; only the kind enters the feature layout.
    """

    kind: ContextKind
    exemplar_digest: int = 0

    def __post_init__(self) -> None:
        if self.kind == ContextKind.TASK and self.exemplar_digest != 0:
            raise ValueError("task context must have exemplar_digest 0")


TASK_CONTEXT = ContextId(ContextKind.TASK)


def neighborhood_context(exemplar_tokens: list[tuple[int, ...]]) -> ContextId:
    """Context keyed by a digest of the exemplar token lists."""
    h = hashlib.blake2b(digest_size=8)
    for tokens in exemplar_tokens:
        h.update(np.asarray(tokens, dtype=np.int64).tobytes())
        h.update(b"|")
    digest = int.from_bytes(h.digest(), "little") & 0x7FFF_FFFF_FFFF_FFFF
    return ContextId(ContextKind.NEIGHBORHOOD, digest)


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token alphabet with a designated terminator."""

    tokens: tuple[str, ...]
    end_token: int

    def __post_init__(self) -> None:
        if len(self.tokens) < 2:
            raise ValueError("vocabulary needs at least 2 tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be distinct")
        if not 0 <= self.end_token < len(self.tokens):
            raise ValueError("end_token out of range")

    @property
    def size(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class PolicyParams:
    """Immutable weight matrix plus the feature layout it is defined over.

    ``W`` has shape (F, V) with F = 2 + V + position_buckets; see
    :mod:`migrate.kernels` for the row layout. Updates always build a new
    instance, so params can be shared freely across readers.
    """

    W: np.ndarray
    vocab: Vocabulary
    position_buckets: int
    max_len: int
    default_temperature: float = 1.0

    def __post_init__(self) -> None:
        expected = (self.feature_dim, self.vocab.size)
        if self.W.shape != expected:
            raise ValueError(f"W shape {self.W.shape} != {expected}")
        if not np.all(np.isfinite(self.W)):
            raise ValueError("W entries must be finite")
        if self.position_buckets < 1 or self.max_len < 1:
            raise ValueError("position_buckets and max_len must be >= 1")
        if self.default_temperature <= 0:
            raise ValueError("default_temperature must be positive")
        self.W.setflags(write=False)

    @property
    def feature_dim(self) -> int:
        return 2 + self.vocab.size + self.position_buckets

    def with_weights(self, W: np.ndarray) -> "PolicyParams":
        return PolicyParams(W, self.vocab, self.position_buckets, self.max_len, self.default_temperature)


def init_params(vocab: Vocabulary, position_buckets: int = 4, max_len: int = 8,
                default_temperature: float = 1.0) -> PolicyParams:
    """Zero-weight (uniform) policy."""
    F = 2 + vocab.size + position_buckets
    return PolicyParams(np.zeros((F, vocab.size)), vocab, position_buckets, max_len, default_temperature)


def position_bucket(position: int, position_buckets: int, max_len: int) -> int:
    return min(position * position_buckets // max_len, position_buckets - 1)


def feature_slots(params: PolicyParams, context: ContextId, prev_token: int | None,
                  position: int) -> tuple[int, int, int]:
    """Indices of the three active feature rows for one step."""
    V = params.vocab.size
    if position < 0 or position >= params.max_len:
        raise ValueError(f"position {position} outside [0, {params.max_len})")
    if prev_token is None:
        prev = params.vocab.end_token
    else:
        if not 0 <= prev_token < V:
            raise ValueError(f"prev_token {prev_token} out of vocabulary")
        prev = prev_token
    bucket = position_bucket(position, params.position_buckets, params.max_len)
    return int(context.kind), 2 + prev, 2 + V + bucket


def encode_features(params: PolicyParams, context: ContextId, prev_token: int | None,
                    position: int) -> np.ndarray:
    """Explicit feature vector (length F, exactly three ones)."""
    phi = np.zeros(params.feature_dim)
    for slot in feature_slots(params, context, prev_token, position):
        phi[slot] = 1.0
    return phi


def token_distribution(params: PolicyParams, context: ContextId, prev_token: int | None,
                       position: int, temperature: float = 1.0) -> np.ndarray:
    """Softmax step distribution over the vocabulary."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    feature_slots(params, context, prev_token, position)  # validate
    v = params.vocab
    prev = v.end_token if prev_token is None else prev_token
    return kernels.step_probs(params.W, v.size, params.position_buckets, params.max_len,
                              v.end_token, int(context.kind), prev, position, temperature)


def sample_completion(params: PolicyParams, context: ContextId, temperature: float,
                      rng: np.random.Generator, *, provenance: str = ONLINE,
                      born_iteration: int = 0) -> Completion:
    """Autoregressive draw; stops at the end token or max_len.

    Consumes exactly ``max_len`` uniforms from ``rng`` regardless of where
    the sequence stops, so replays are reproducible draw-for-draw.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    v = params.vocab
    uniforms = rng.random(params.max_len)
    buf, count = kernels.sample_tokens(params.W, v.size, params.position_buckets, params.max_len,
                                       v.end_token, int(context.kind), temperature, uniforms)
    return Completion(tokens=tuple(int(t) for t in buf[:count]), provenance=provenance,
                      born_iteration=born_iteration)


def logprobs(params: PolicyParams, context: ContextId, tokens: tuple[int, ...]) -> np.ndarray:
    """Per-token log-probabilities of ``tokens`` under the given context."""
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.size > params.max_len:
        raise ValueError(f"sequence of length {arr.size} exceeds max_len {params.max_len}")
    if arr.size and (arr.min() < 0 or arr.max() >= params.vocab.size):
        raise ValueError("token out of vocabulary")
    if arr.size == 0:
        return np.zeros(0)
    v = params.vocab
    return kernels.sequence_logprobs(params.W, v.size, params.position_buckets, params.max_len,
                                     v.end_token, int(context.kind), arr)


def logprob_grad(params: PolicyParams, context: ContextId, tokens: tuple[int, ...],
                 position: int) -> np.ndarray:
    """Exact gradient of one token's log-probability w.r.t. W.

    Equals (onehot(token) - softmax) outer the step's one-hot features, i.e.
    three non-zero rows.
    """
    arr = np.asarray(tokens, dtype=np.int64)
    prev = int(arr[position - 1]) if position > 0 else None
    p = token_distribution(params, context, prev, position)
    row = -p.copy()
    row[arr[position]] += 1.0
    grad = np.zeros_like(params.W)
    for slot in feature_slots(params, context, prev, position):
        grad[slot] += row
    return grad


def save_params(params: PolicyParams) -> bytes:
    """Serialize to the little-endian "MGP1" format (header + row-major W)."""
    v = params.vocab
    header = _HEADER.pack(PARAMS_MAGIC, v.size, params.feature_dim,
                          params.position_buckets, params.max_len)
    return header + np.ascontiguousarray(params.W, dtype="<f8").tobytes()


def load_params(data: bytes, vocab: Vocabulary | None = None,
                default_temperature: float = 1.0) -> PolicyParams:
    """Inverse of :func:`save_params`; bit-exact round trip.

    A vocabulary of matching size may be supplied to attach real token
    strings; otherwise placeholder tokens are synthesized (the file format
    stores dimensions only).
    """
    if len(data) < _HEADER.size:
        raise ParamsTruncatedError(f"stream has {len(data)} bytes, header needs {_HEADER.size}")
    magic, V, F, P, max_len = _HEADER.unpack_from(data)
    if magic != PARAMS_MAGIC:
        raise ParamsVersionError(f"unsupported magic/version {magic!r}, expected {PARAMS_MAGIC!r}")
    if F != 2 + V + P or V < 2 or P < 1 or max_len < 1:
        raise ParamsFormatError(f"inconsistent header: V={V} F={F} P={P} max_len={max_len}")
    expected = _HEADER.size + F * V * 8
    if len(data) != expected:
        raise ParamsTruncatedError(f"stream has {len(data)} bytes, expected {expected}")
    W = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(F, V).copy()
    if not np.all(np.isfinite(W)):
        raise ParamsNonFiniteError("weight payload contains non-finite entries")
    if vocab is None:
        vocab = Vocabulary(tuple(f"tok{i}" for i in range(V - 1)) + ("</s>",), V - 1)
    elif vocab.size != V:
        raise ParamsFormatError(f"vocabulary size {vocab.size} != stored V={V}")
    return PolicyParams(W, vocab, P, max_len, default_temperature)
