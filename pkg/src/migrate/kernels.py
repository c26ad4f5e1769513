"""Hot numeric kernels: per-token policy math and the clipped-surrogate update.

Every kernel is compiled with numba's ``@njit`` when available. Setting the
environment variable ``MIGRATE_DISABLE_NUMBA=1`` (or a failed numba import)
selects the pure-numpy fallback, which is the exact same source executed
uncompiled. Compiled and fallback paths agree to floating-point roundoff;
summation order inside numpy reductions may differ between the two in the
last ulp, so a given install should stick to one mode for reproducible runs.

Feature layout of the policy weight matrix W (shape F x V, F = 2 + V + P):
  row 0..1        context kind (0 = task, 1 = neighborhood)
  row 2..2+V-1    previous token (the end token's row doubles as "start")
  row 2+V..F-1    position bucket, min(pos * P // max_len, P - 1)

A step's logits are the sum of the three active rows; no feature vector is
ever materialized here.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("MIGRATE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLE:
        raise ImportError("numba disabled by MIGRATE_DISABLE_NUMBA")
    from numba import njit as _njit

    USING_NUMBA = True
except ImportError:
    USING_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            fn.py_func = fn
            return fn

        if args and callable(args[0]):
            return wrap(args[0])
        return wrap


def _jit(fn):
    return _njit(cache=True)(fn)


@_jit
def step_probs(W, V, P, max_len, end_token, ctx_kind, prev_token, position, temperature):
    """Token distribution for one autoregressive step.

    ``prev_token < 0`` means start-of-sequence (aliased to the end token's
    feature row). Softmax is max-shifted before the temperature divide so
    near-zero temperatures stay finite and keep the argmax token.
    """
    prev = prev_token
    if prev < 0:
        prev = end_token
    bucket = position * P // max_len
    if bucket > P - 1:
        bucket = P - 1
    logits = W[ctx_kind] + W[2 + prev] + W[2 + V + bucket]
    shifted = (logits - logits.max()) / temperature
    p = np.exp(shifted)
    return p / p.sum()


@_jit
def sample_tokens(W, V, P, max_len, end_token, ctx_kind, temperature, uniforms):
    """Draw one completion; returns (token buffer, length).

    ``uniforms`` must hold ``max_len`` pre-drawn U[0,1) values; one is
    consumed per step whether or not the sequence stops early, so the
    caller's random stream advances identically for every draw.
    """
    out = np.empty(max_len, dtype=np.int64)
    count = max_len
    for pos in range(max_len):
        p = step_probs(W, V, P, max_len, end_token, ctx_kind, out[pos - 1] if pos > 0 else -1, pos, temperature)
        cdf = np.cumsum(p)
        tok = np.searchsorted(cdf, uniforms[pos] * cdf[V - 1], side="right")
        if tok > V - 1:
            tok = V - 1
        out[pos] = tok
        if tok == end_token:
            count = pos + 1
            break
    return out, count


@_jit
def mutate_tokens(W, V, P, max_len, end_token, ctx_kind, temperature, base, gate_u, tok_u, rate):
    """Resample each position of ``base`` with probability ``rate``.

    Replacement tokens come from the policy at that position, conditioned on
    the (possibly already mutated) previous token. Length is preserved.
    """
    n = base.shape[0]
    out = np.empty(n, dtype=np.int64)
    for pos in range(n):
        if gate_u[pos] < rate:
            p = step_probs(W, V, P, max_len, end_token, ctx_kind, out[pos - 1] if pos > 0 else -1, pos, temperature)
            cdf = np.cumsum(p)
            tok = np.searchsorted(cdf, tok_u[pos] * cdf[V - 1], side="right")
            if tok > V - 1:
                tok = V - 1
            out[pos] = tok
        else:
            out[pos] = base[pos]
    return out


@_jit
def sequence_logprobs(W, V, P, max_len, end_token, ctx_kind, tokens):
    """Per-token log-probabilities of a full sequence (temperature 1)."""
    n = tokens.shape[0]
    out = np.empty(n, dtype=np.float64)
    for pos in range(n):
        p = step_probs(W, V, P, max_len, end_token, ctx_kind, tokens[pos - 1] if pos > 0 else -1, pos, 1.0)
        out[pos] = np.log(p[tokens[pos]])
    return out


@_jit
def grpo_token_terms(W, V, P, max_len, end_token, tokens_flat, offsets, advantages, old_flat, eps_low, eps_high):
    """Per-token pieces of the clipped surrogate under the task context.

    For completion i with advantage A and token ratio rho = exp(new - old),
    the objective term is min(rho*A, clip(rho, 1-eps_low, 1+eps_high)*A); its
    gradient flows only when the unclipped branch is selected (ties included).

    Returns, for T total tokens:
      obj_sum       sum of objective terms (unnormalized, unnegated)
      slots         (T, 3) active weight rows per token
      coeffs        (T,) A * rho where the gradient is live, else 0
      probs         (T, V) step distributions (needed for gradient rows)
      ratios        (T,)
      low_clipped   (T,) 1 where the low-side clip suppressed the gradient
      high_clipped  (T,) 1 where the high-side clip suppressed the gradient
    """
    n_comp = offsets.shape[0] - 1
    total = tokens_flat.shape[0]
    slots = np.empty((total, 3), dtype=np.int64)
    coeffs = np.zeros(total, dtype=np.float64)
    probs = np.empty((total, V), dtype=np.float64)
    ratios = np.empty(total, dtype=np.float64)
    low_clipped = np.zeros(total, dtype=np.int64)
    high_clipped = np.zeros(total, dtype=np.int64)
    obj_sum = 0.0
    for i in range(n_comp):
        adv = advantages[i]
        start = offsets[i]
        stop = offsets[i + 1]
        for idx in range(start, stop):
            pos = idx - start
            tok = tokens_flat[idx]
            prev = tokens_flat[idx - 1] if pos > 0 else -1
            p = step_probs(W, V, P, max_len, end_token, 0, prev, pos, 1.0)
            probs[idx] = p
            new_lp = np.log(p[tok])
            rho = np.exp(new_lp - old_flat[idx])
            ratios[idx] = rho
            clipped = rho
            if clipped < 1.0 - eps_low:
                clipped = 1.0 - eps_low
            elif clipped > 1.0 + eps_high:
                clipped = 1.0 + eps_high
            unclipped_term = rho * adv
            clipped_term = clipped * adv
            if unclipped_term <= clipped_term:
                obj_sum += unclipped_term
                coeffs[idx] = adv * rho
            else:
                obj_sum += clipped_term
                if rho < 1.0 - eps_low:
                    low_clipped[idx] = 1
                else:
                    high_clipped[idx] = 1
            prev_slot = prev if prev >= 0 else end_token
            bucket = pos * P // max_len
            if bucket > P - 1:
                bucket = P - 1
            slots[idx, 0] = 0
            slots[idx, 1] = 2 + prev_slot
            slots[idx, 2] = 2 + V + bucket
    return obj_sum, slots, coeffs, probs, ratios, low_clipped, high_clipped


@_jit
def grpo_dense_grad(slots, coeffs, probs, tokens_flat, F, V, total_len):
    """Dense loss gradient w.r.t. W from per-token terms.

    d(loss)/dW[slot] accumulates (coeff / total_len) * (p - onehot(token))
    over tokens, token order preserved so results are bit-reproducible.
    """
    grad = np.zeros((F, V), dtype=np.float64)
    for idx in range(tokens_flat.shape[0]):
        c = coeffs[idx]
        if c == 0.0:
            continue
        scale = c / total_len
        tok = tokens_flat[idx]
        for s in range(3):
            row = slots[idx, s]
            grad[row] += scale * probs[idx]
            grad[row, tok] -= scale
    return grad


@_jit
def grpo_apply_sgd(W, slots, coeffs, probs, tokens_flat, lr, total_len):
    """In-place SGD step on ``W`` touching only the active rows.

    Accumulates each row's gradient in the same order as grpo_dense_grad and
    applies ``W[row] -= lr * row_grad``, so the result is bit-identical to
    the dense path while skipping the full F x V materialization.
    """
    F = W.shape[0]
    V = W.shape[1]
    local = np.full(F, -1, dtype=np.int64)
    order = np.empty(F, dtype=np.int64)
    n_rows = 0
    for idx in range(tokens_flat.shape[0]):
        for s in range(3):
            row = slots[idx, s]
            if local[row] < 0:
                local[row] = n_rows
                order[n_rows] = row
                n_rows += 1
    row_grad = np.zeros((n_rows, V), dtype=np.float64)
    for idx in range(tokens_flat.shape[0]):
        c = coeffs[idx]
        if c == 0.0:
            continue
        scale = c / total_len
        tok = tokens_flat[idx]
        for s in range(3):
            r = local[slots[idx, s]]
            row_grad[r] += scale * probs[idx]
            row_grad[r, tok] -= scale
    for r in range(n_rows):
        W[order[r]] -= lr * row_grad[r]
