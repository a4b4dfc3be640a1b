"""Training objective: cross-entropy plus the three-term feature penalty.

The total objective is

    total = l_cf + a1 * l_recon + a2 * l_class_specific + a3 * l_shared + wd * l_wd

where l_cf is mean cross-entropy over the batch, l_recon the squared
reconstruction error, l_class_specific the squared distance of each
discriminative code from its class center, l_shared the squared distance of
each shared code from its group center, and l_wd the squared Frobenius norm
of all weight matrices (biases excluded). The center matrices are constants
for gradient purposes; they evolve through their own update rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centers import CenterState
from .decompnet import DecompositionNet, ForwardRecord, Layer
from .errors import ConfigurationError, ParameterError
from .grouping import GroupAssignment

LOG_PROB_FLOOR = 1e-12

# Per-iteration training log columns carrying the loss breakdown.
CSV_COLUMNS = ("step", "l_cf", "l_recon", "l_cls", "l_shd", "l_wd", "total")


@dataclass
class LossWeights:
    """Nonnegative term weights; any may be exactly zero (ablation switches)."""

    alpha1: float = 0.01
    alpha2: float = 0.01
    alpha3: float = 0.01
    weight_decay: float = 0.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "weight_decay"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class LossBreakdown:
    """Unweighted component values plus the weighted total."""

    l_cf: float
    l_recon: float
    l_class_specific: float
    l_shared: float
    l_wd: float
    total: float
    eps_clamped: bool = False

    def row(self, step: int) -> dict:
        return {
            "step": step,
            "l_cf": self.l_cf,
            "l_recon": self.l_recon,
            "l_cls": self.l_class_specific,
            "l_shd": self.l_shared,
            "l_wd": self.l_wd,
            "total": self.total,
        }


@dataclass(eq=False)
class FeatureExpressionTerms:
    """Weighted scalar, per-head cotangents, and raw (unweighted) components."""

    value: float
    grad_y_hat: np.ndarray | None
    grad_y_dis: np.ndarray
    grad_y_shd: np.ndarray | None
    recon: float
    class_specific: float
    shared: float


@dataclass(eq=False)
class TotalLossGrads:
    """Cotangent bundle for decompnet.backward plus weight-decay gradients.

    Head cotangents whose weight is exactly zero are ``None`` so the
    backward pass skips those paths entirely.
    """

    grad_logits: np.ndarray
    grad_y_hat: np.ndarray | None
    grad_y_dis: np.ndarray | None
    grad_y_shd: np.ndarray | None
    decay: dict[str, list[Layer]] | None


def classification_loss(
    probs: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, bool]:
    """Mean negative log-likelihood and its fused cotangent on the logits.

    Returns (loss, (probs - onehot)/B, clamped) where ``clamped`` reports
    whether any true-class probability hit the 1e-12 floor inside the log.
    """
    labels = np.asarray(labels)
    n = probs.shape[0]
    if labels.shape != (n,):
        raise ParameterError(f"labels must have shape ({n},), got {labels.shape}")
    idx = labels - 1
    p = probs[np.arange(n), idx]
    clamped = bool((p < LOG_PROB_FLOOR).any())
    loss = float(-np.log(np.maximum(p, LOG_PROB_FLOOR)).mean())
    grad = probs.copy()
    grad[np.arange(n), idx] -= 1.0
    grad /= n
    return loss, grad, clamped


def feature_expression_loss(
    record: ForwardRecord,
    labels: np.ndarray,
    centers: CenterState,
    groups: GroupAssignment,
    weights: LossWeights,
    reduction: str = "sum",
) -> FeatureExpressionTerms:
    """The three-term feature penalty and its exact head cotangents.

    Terms are summed over the batch by default; ``reduction="mean"``
    divides every term (and cotangent) by the batch size. Centers are
    constants here: no gradient flows into them.
    """
    if reduction not in ("sum", "mean"):
        raise ParameterError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    labels = np.asarray(labels)
    scale = 1.0 / labels.shape[0] if reduction == "mean" else 1.0

    recon = 0.0
    grad_y_hat = None
    if weights.alpha1 != 0 or record.y_hat is not None:
        if record.y_hat is None:
            raise ConfigurationError(
                "reconstruction term is enabled but the network produced no reconstruction"
            )
        diff = record.y_hat - record.y
        recon = float((diff * diff).sum()) * scale
        grad_y_hat = (2.0 * weights.alpha1 * scale) * diff

    m_batch = centers.m[labels - 1]
    diff_dis = record.y_dis - m_batch
    class_specific = float((diff_dis * diff_dis).sum()) * scale
    grad_y_dis = (2.0 * weights.alpha2 * scale) * diff_dis

    shared = 0.0
    grad_y_shd = None
    if weights.alpha3 != 0 or record.y_shd is not None:
        if record.y_shd is None:
            raise ConfigurationError(
                "shared-feature term is enabled but the network produced no shared code"
            )
        try:
            group_idx = np.array([groups.group_of(int(c)) for c in labels], dtype=np.int64)
        except KeyError as exc:
            raise ConfigurationError(f"label {exc.args[0]} has no group assignment") from exc
        diff_shd = record.y_shd - centers.s[group_idx - 1]
        shared = float((diff_shd * diff_shd).sum()) * scale
        grad_y_shd = (2.0 * weights.alpha3 * scale) * diff_shd

    value = weights.alpha1 * recon + weights.alpha2 * class_specific + weights.alpha3 * shared
    return FeatureExpressionTerms(
        value, grad_y_hat, grad_y_dis, grad_y_shd, recon, class_specific, shared
    )


def weight_decay_loss(net: DecompositionNet) -> tuple[float, dict[str, list[Layer]]]:
    """Sum of squared weight-matrix entries over all present sub-networks.

    Biases are excluded. The returned cotangents are 2W per weight matrix
    (zero for biases), mirroring the network structure.
    """
    total = 0.0
    grads: dict[str, list[Layer]] = {}
    for name, mlp in net.parts().items():
        if mlp is None:
            continue
        part = []
        for w, b in mlp:
            total += float((w * w).sum())
            part.append((2.0 * w, np.zeros_like(b)))
        grads[name] = part
    return total, grads


def total_loss(
    net: DecompositionNet,
    record: ForwardRecord,
    labels: np.ndarray,
    centers: CenterState,
    groups: GroupAssignment,
    weights: LossWeights,
    reduction: str = "sum",
) -> tuple[LossBreakdown, TotalLossGrads]:
    """Compose classification, feature-expression, and weight-decay losses."""
    l_cf, grad_logits, clamped = classification_loss(record.probs, labels)
    fe = feature_expression_loss(record, labels, centers, groups, weights, reduction)
    l_wd, decay = weight_decay_loss(net)
    if weights.weight_decay == 0:
        decay = None
    total = l_cf + fe.value + weights.weight_decay * l_wd
    breakdown = LossBreakdown(
        l_cf=l_cf,
        l_recon=fe.recon,
        l_class_specific=fe.class_specific,
        l_shared=fe.shared,
        l_wd=l_wd,
        total=total,
        eps_clamped=clamped,
    )
    grads = TotalLossGrads(
        grad_logits=grad_logits,
        grad_y_hat=fe.grad_y_hat if weights.alpha1 != 0 else None,
        grad_y_dis=fe.grad_y_dis if weights.alpha2 != 0 else None,
        grad_y_shd=fe.grad_y_shd if weights.alpha3 != 0 else None,
        decay=decay,
    )
    return breakdown, grads
