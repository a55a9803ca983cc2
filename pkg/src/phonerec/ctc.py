"""CTC loss, gradients, and greedy/constrained decoding.

The loss is the negative log probability of all framewise paths that collapse
(repeats removed, then blanks removed) to the target label sequence.  The
forward-backward recursion runs entirely in log space with log-sum-exp so it
stays stable for utterances thousands of frames long.

Index 0 of every logit matrix is the blank; labels are 1-based and never
blank.  The loss for one utterance is the sum over its frames (not a mean);
batch-level averaging is the trainer's job.

brute_force_ctc enumerates every framewise path and exists as an independent
check of the forward-backward implementation on tiny instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import PhonerecError


class InfeasibleAlignment(PhonerecError):
    """No CTC path can produce the labels in the given number of frames.

    Raised as an error rather than returning +inf loss so that data bugs
    (transcript longer than the audio) surface immediately during training.
    """


class IndexOutOfRange(PhonerecError):
    """Label index outside 1..V-1."""


class InstanceTooLarge(PhonerecError):
    """Brute-force enumeration asked for an instance beyond V^T limits."""


@dataclass
class CtcResult:
    """Loss (negative log-likelihood) and gradient with respect to the logits."""

    loss: float
    grad: np.ndarray  # T x V, rows sum to 0


def _check_labels(labels, width: int) -> list[int]:
    labels = [int(x) for x in labels]
    for x in labels:
        if not 1 <= x < width:
            raise IndexOutOfRange(f"label {x} outside 1..{width - 1}")
    return labels


def min_frames(labels) -> int:
    """Minimum frame count that admits a CTC alignment for these labels."""
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def ctc_loss(logits: np.ndarray, labels) -> CtcResult:
    """Exact CTC negative log-likelihood and its gradient wrt the logits.

    logits: T x V matrix, column 0 = blank.
    labels: 1-based label indices, non-empty, each < V.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise PhonerecError("logits must be a T x V matrix with T >= 1")
    T, V = logits.shape
    labels = _check_labels(labels, V)
    if not labels:
        raise InfeasibleAlignment("label sequence is empty")
    if T < min_frames(labels):
        raise InfeasibleAlignment(
            f"{len(labels)} labels (min {min_frames(labels)} frames) cannot "
            f"align in {T} frames"
        )

    lp = _log_softmax(logits)

    # Extended label sequence with blanks interleaved: length S = 2L + 1.
    ext = np.zeros(2 * len(labels) + 1, dtype=np.int64)
    ext[1::2] = labels
    S = ext.shape[0]
    # skip[s]: the s-2 -> s transition is allowed (different non-blank labels)
    skip = np.zeros(S, dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]

    neg_inf = -np.inf
    alpha = np.full((T, S), neg_inf)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev
        step = np.full(S, neg_inf)
        step[1:] = prev[:-1]
        jump = np.full(S, neg_inf)
        jump[2:] = np.where(skip[2:], prev[:-2], neg_inf)
        alpha[t] = _logsumexp3(stay, step, jump) + lp[t, ext]

    log_p = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2] if S > 1 else neg_inf)
    if not np.isfinite(log_p):
        raise InfeasibleAlignment("no feasible alignment path")

    # beta[t, s] includes the frame-t emission, like alpha.
    beta = np.full((T, S), neg_inf)
    beta[T - 1, S - 1] = lp[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = lp[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        stay = nxt
        step = np.full(S, neg_inf)
        step[:-1] = nxt[1:]
        jump = np.full(S, neg_inf)
        jump[:-2] = np.where(skip[2:], nxt[2:], neg_inf)
        beta[t] = _logsumexp3(stay, step, jump) + lp[t, ext]

    # State occupancy posterior: alpha and beta both carry the frame-t
    # emission, so divide one copy out before normalizing by log_p.
    with np.errstate(invalid="ignore"):
        occupancy = alpha + beta - lp[:, ext] - log_p
    occupancy = np.exp(np.where(np.isnan(occupancy), neg_inf, occupancy))

    grad = np.exp(lp)  # softmax term
    for s in range(S):
        grad[:, ext[s]] -= occupancy[:, s]
    return CtcResult(loss=float(-log_p), grad=grad)


def _logsumexp3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.logaddexp(np.logaddexp(a, b), c)


def collapse_path(path) -> list[int]:
    """Apply the CTC collapse: merge adjacent repeats, then drop blanks."""
    out: list[int] = []
    prev = None
    for symbol in path:
        if symbol != prev:
            out.append(int(symbol))
        prev = symbol
    return [s for s in out if s != 0]


def brute_force_ctc(logits: np.ndarray, labels) -> float:
    """CTC loss by enumerating all V^T framewise paths.

    Only viable for tiny instances (T <= 6, V <= 5); larger requests raise
    InstanceTooLarge.  Kept independent of ctc_loss so the two can check
    each other.  An empty label sequence is allowed here (its probability is
    the all-blank path).
    """
    logits = np.asarray(logits, dtype=np.float64)
    T, V = logits.shape
    if T > 6 or V > 5:
        raise InstanceTooLarge(f"brute force limited to T<=6, V<=5, got {T}x{V}")
    labels = _check_labels(labels, V)
    lp = _log_softmax(logits)
    target = list(labels)
    total = -np.inf
    for path in itertools.product(range(V), repeat=T):
        if collapse_path(path) == target:
            total = np.logaddexp(total, sum(lp[t, k] for t, k in enumerate(path)))
    if not np.isfinite(total):
        raise InfeasibleAlignment("no framewise path collapses to the labels")
    return float(-total)


def greedy_decode(logits: np.ndarray) -> list[int]:
    """Best-path decoding: framewise argmax, collapse repeats, strip blanks.

    Argmax ties break to the lowest index for cross-platform determinism.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise PhonerecError("logits must be a T x V matrix with T >= 1")
    return collapse_path(np.argmax(logits, axis=1))


def constrained_decode(logits: np.ndarray, allowed) -> list[int]:
    """Greedy decoding restricted to an allowed phone-index set.

    Columns outside allowed plus blank are masked to -inf before decoding,
    so the output is always a subset of the allowed set.  An empty allowed
    set yields an empty output.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise PhonerecError("logits must be a T x V matrix with T >= 1")
    V = logits.shape[1]
    allowed = {int(a) for a in allowed}
    if not allowed <= set(range(1, V)):
        raise IndexOutOfRange(f"allowed set {sorted(allowed)} outside 1..{V - 1}")
    keep = np.zeros(V, dtype=bool)
    keep[0] = True
    for a in allowed:
        keep[a] = True
    masked = np.where(keep[None, :], logits, -np.inf)
    return greedy_decode(masked)
