"""Connectionist temporal classification in log space.

The blank symbol is the last index of the extended alphabet (``V`` when
there are ``V`` real tokens).  ``log_probs`` are per-frame log
distributions of shape (T, V + 1), e.g. the output of ``log_softmax``.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

INFEASIBLE_LOSS = 1e4


class CtcInfeasibleError(ValueError):
    """The target cannot be emitted in the available number of frames."""


def min_frames(target) -> int:
    """Shortest input that can emit ``target``: one frame per label plus one
    blank between each adjacent repeated pair."""
    target = list(target)
    return len(target) + sum(a == b for a, b in zip(target, target[1:]))


def _extend(target, blank):
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    # a skip from s-2 to s is allowed into a label that differs from the previous label
    skip = np.zeros(len(ext), dtype=bool)
    for s in range(3, len(ext), 2):
        skip[s] = ext[s] != ext[s - 2]
    return ext, skip


def _lse3(a, b, c):
    m = np.maximum(np.maximum(a, b), c)
    finite = np.isfinite(m)
    out = np.full_like(m, -np.inf)
    mf = m[finite]
    out[finite] = mf + np.log(np.exp(a[finite] - mf) + np.exp(b[finite] - mf)
                              + np.exp(c[finite] - mf))
    return out


def _work_array(log_probs):
    """At least double precision; wider inputs keep their own precision."""
    lp = np.asarray(log_probs)
    return lp.astype(np.result_type(lp.dtype, np.float64), copy=False)


def forward_variables(log_probs, target, blank=None):
    """Log alphas and betas over the blank-extended target, both (T, 2L+1)."""
    lp = _work_array(log_probs)
    t_len, vocab = lp.shape
    blank = vocab - 1 if blank is None else blank
    ext, skip = _extend(list(target), blank)
    s_len = len(ext)
    emit = lp[:, ext]
    neg = np.full(s_len, -np.inf, dtype=lp.dtype)

    alpha = np.full((t_len, s_len), -np.inf, dtype=lp.dtype)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    shift1, shift2 = neg.copy(), neg.copy()
    for t in range(1, t_len):
        prev = alpha[t - 1]
        shift1[1:] = prev[:-1]
        shift2[2:] = prev[:-2]
        alpha[t] = _lse3(prev, shift1, np.where(skip, shift2, neg)) + emit[t]

    # beta_t(s) includes the emission at t, so alpha*beta double counts emit[t]
    beta = np.full((t_len, s_len), -np.inf, dtype=lp.dtype)
    beta[-1, -1] = emit[-1, -1]
    if s_len > 1:
        beta[-1, -2] = emit[-1, -2]
    skip_back = np.zeros(s_len, dtype=bool)
    skip_back[:-2] = skip[2:]
    shift1, shift2 = neg.copy(), neg.copy()
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1]
        shift1[:-1] = nxt[1:]
        shift2[:-2] = nxt[2:]
        beta[t] = _lse3(nxt, shift1, np.where(skip_back, shift2, neg)) + emit[t]
    return alpha, beta, ext


def ctc_loss(log_probs, target, blank=None):
    """Negative log-likelihood of ``target`` and its gradient w.r.t. logits.

    Returns ``(loss, d_logits)`` where ``d_logits = softmax - posterior``,
    i.e. the gradient with respect to the pre-softmax scores that produced
    ``log_probs``.  Raises :class:`CtcInfeasibleError` when T is too short.
    The loss is a numpy scalar in the working precision (at least double).
    """
    lp = _work_array(log_probs)
    t_len, vocab = lp.shape
    blank = vocab - 1 if blank is None else blank
    target = [int(v) for v in target]
    if any(v == blank or not 0 <= v < vocab for v in target):
        raise ValueError(f"target ids must be in [0, {vocab}) and not the blank {blank}")
    need = min_frames(target)
    if t_len < max(need, 1):
        raise CtcInfeasibleError(f"{t_len} frames cannot emit a target needing {need}")

    alpha, beta, ext = forward_variables(lp, target, blank)
    ab = alpha + beta - lp[:, ext]
    log_p = np.logaddexp.reduce(ab[-1])
    loss = -log_p

    post = np.exp(ab - log_p)
    gamma = np.zeros_like(lp)
    for s, v in enumerate(ext):
        gamma[:, v] += post[:, s]
    return loss, np.exp(lp) - gamma


def ctc_loss_value(log_probs, target, blank=None) -> float:
    return ctc_loss(log_probs, target, blank)[0]


def collapse(path, blank):
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for v in path:
        if v != prev and v != blank:
            out.append(int(v))
        prev = v
    return tuple(out)


@lru_cache(maxsize=64)
def _path_table(t_len, vocab, blank):
    paths = np.array(list(itertools.product(range(vocab), repeat=t_len)), dtype=np.int64)
    groups: dict[tuple, list] = {}
    for i, p in enumerate(paths):
        groups.setdefault(collapse(p, blank), []).append(i)
    return paths, {k: np.array(v) for k, v in groups.items()}


def ctc_brute_force(log_probs, target, blank=None, limit=10**7) -> float:
    """Exhaustive CTC: sum over every frame path that collapses to ``target``.

    Returns ``inf`` when no path collapses to the target.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    t_len, vocab = lp.shape
    blank = vocab - 1 if blank is None else blank
    if vocab ** t_len > limit:
        raise ValueError(f"{vocab}^{t_len} paths exceed the enumeration limit {limit}")
    paths, groups = _path_table(t_len, vocab, blank)
    hits = groups.get(tuple(int(v) for v in target))
    if hits is None:
        return float("inf")
    path_lp = lp[np.arange(t_len)[None, :], paths[hits]].sum(axis=1)
    return float(-np.logaddexp.reduce(path_lp))


def ctc_greedy_decode(log_probs, blank=None) -> list[int]:
    """Best-path decoding; argmax ties resolve to the lowest id."""
    lp = np.asarray(log_probs)
    blank = lp.shape[-1] - 1 if blank is None else blank
    return list(collapse(lp.argmax(axis=-1), blank))


def batch_ctc_loss(log_probs, lengths, targets, blank=None):
    """Mean CTC loss over a batch of (N, T_max, V+1) log-probs.

    Frames at or beyond each item's length get zero gradient.  Infeasible
    items contribute ``INFEASIBLE_LOSS`` and no gradient.  Returns
    ``(mean_loss, d_logits, infeasible_item_indices)``.
    """
    n = log_probs.shape[0]
    work = np.result_type(np.asarray(log_probs).dtype, np.float64)
    grad = np.zeros(log_probs.shape, dtype=work)
    total = work.type(0)
    skipped = []
    for i in range(n):
        t_i = int(lengths[i])
        try:
            loss, g = ctc_loss(log_probs[i, :t_i], targets[i], blank)
        except CtcInfeasibleError:
            skipped.append(i)
            total += INFEASIBLE_LOSS
            continue
        total += loss
        grad[i, :t_i] = g
    return total / n, grad / n, skipped
