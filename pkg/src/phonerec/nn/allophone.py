"""Language-dependent allophone layer: maxpooled phone-to-phoneme mapping.

For each frame, phoneme j's logit is the maximum of w[j, k] * h[k] taken over
the phones the language's signature marks as allophones of j (the support of
row j of the signature matrix).  Restricting the pool to the signature
support makes the layer exact maxpooling over allophone logits when the
weights equal the binary signature; cells outside the support never
participate and are governed solely by the divergence penalty.

The CTC blank is not a phone and bypasses the layer: the blank column of the
incoming phone logits is copied unchanged into the phoneme logit matrix.

An L2 penalty alpha * ||W - S||^2 discourages the trainable weights from
drifting away from the signature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PhonerecError
from ..phoneset import SignatureMatrix
from .encoder import DimensionMismatch, TraceMismatch

DEFAULT_ALPHA = 10.0  # divergence penalty weight; tune per task


@dataclass
class AllophoneLayer:
    """Trainable phoneme-by-phone weight matrix tied to a binary signature."""

    weights: np.ndarray = field(repr=False)  # (Q, P)
    signature: SignatureMatrix
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.weights.shape != self.signature.entries.shape:
            raise DimensionMismatch(
                f"weights {self.weights.shape} vs signature "
                f"{self.signature.entries.shape}"
            )
        if not np.isfinite(self.weights).all():
            raise PhonerecError("allophone weights must be finite")
        if self.alpha < 0:
            raise PhonerecError("alpha must be non-negative")

    @classmethod
    def from_signature(
        cls, signature: SignatureMatrix, alpha: float = DEFAULT_ALPHA
    ) -> AllophoneLayer:
        """Initialize the weights at the binary signature itself."""
        return cls(weights=signature.entries.copy(), signature=signature, alpha=alpha)

    @property
    def num_phonemes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_phones(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> AllophoneLayer:
        return AllophoneLayer(
            weights=self.weights.copy(), signature=self.signature, alpha=self.alpha
        )


@dataclass
class AllophoneTrace:
    """Cache for the exact backward pass of one maxpool application."""

    phone_logits: np.ndarray = field(repr=False)  # (T, P+1) as given
    argmax: np.ndarray = field(repr=False)  # (T, Q) winning phone column per cell


def allophone_forward(
    phone_logits: np.ndarray, layer: AllophoneLayer
) -> tuple[np.ndarray, AllophoneTrace]:
    """Map T x (P+1) phone logits to T x (Q+1) phoneme logits.

    Column 0 (blank) passes through; phoneme column j+1 is the maxpool of
    w[j, k] * h[k] over the signature support of phoneme j.  Ties resolve to
    the lowest phone index so training is deterministic.
    """
    phone_logits = np.asarray(phone_logits, dtype=np.float64)
    if phone_logits.ndim != 2 or phone_logits.shape[1] != layer.num_phones + 1:
        raise DimensionMismatch(
            f"phone logits width {phone_logits.shape} incompatible with "
            f"{layer.num_phones} phones plus blank"
        )
    support = layer.signature.entries > 0  # (Q, P)
    products = layer.weights[None, :, :] * phone_logits[:, None, 1:]  # (T, Q, P)
    scored = np.where(support[None, :, :], products, -np.inf)
    argmax = scored.argmax(axis=2)  # first max = lowest phone index
    pooled = np.take_along_axis(scored, argmax[:, :, None], axis=2)[:, :, 0]
    out = np.empty((phone_logits.shape[0], layer.num_phonemes + 1))
    out[:, 0] = phone_logits[:, 0]
    out[:, 1:] = pooled
    return out, AllophoneTrace(phone_logits=phone_logits, argmax=argmax)


def allophone_backward(
    layer: AllophoneLayer, trace: AllophoneTrace, dphoneme_logits: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Route maxpool gradients back to the winning cells.

    Returns (gradient on the phone logits, gradient on the weights).  The
    weight gradient covers only the pooling term; add penalty_gradient for
    the full training objective.
    """
    dphoneme_logits = np.asarray(dphoneme_logits, dtype=np.float64)
    T, Q = trace.argmax.shape
    if dphoneme_logits.shape != (T, Q + 1):
        raise TraceMismatch(
            f"upstream gradient shape {dphoneme_logits.shape} does not match "
            f"{(T, Q + 1)}"
        )
    P = layer.num_phones
    dh = np.zeros((T, P + 1))
    dh[:, 0] = dphoneme_logits[:, 0]
    dw = np.zeros_like(layer.weights)
    t_idx = np.repeat(np.arange(T), Q)
    j_idx = np.tile(np.arange(Q), T)
    k_idx = trace.argmax.ravel()
    coeff = dphoneme_logits[:, 1:].ravel()
    np.add.at(dh[:, 1:], (t_idx, k_idx), coeff * layer.weights[j_idx, k_idx])
    np.add.at(dw, (j_idx, k_idx), coeff * trace.phone_logits[t_idx, 1 + k_idx])
    return dh, dw


def allophone_penalty(layer: AllophoneLayer) -> float:
    """Divergence penalty alpha * ||W - S||^2 (squared Frobenius norm)."""
    diff = layer.weights - layer.signature.entries
    return float(layer.alpha * np.sum(diff * diff))


def penalty_gradient(layer: AllophoneLayer) -> np.ndarray:
    """Gradient of the divergence penalty with respect to the weights."""
    return 2.0 * layer.alpha * (layer.weights - layer.signature.entries)
