"""Contrastive and classification losses for dual-modality multi-label training.

All losses are pure functions of their tensor arguments: no global state, no
RNG, safe to call concurrently. Contrastive losses expect row-wise
unit-normalized embeddings (the projection step upstream guarantees this) and
assert that precondition instead of silently renormalizing.

Every loss returns a :class:`LossValue` whose ``scalar`` is a 0-dim torch
tensor attached to the autograd graph, so composites remain differentiable
end to end.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .exceptions import InvalidBatchError, RecipeError
from .validation import (
    as_float_matrix,
    check_binary_matrix,
    check_same_cols,
    check_same_rows,
    check_temperature,
    check_unit_rows,
)

DEFAULT_TEMPERATURE = 0.1

#: Flag key used in ``LossValue.term_breakdown`` when mulsupcon finds no
#: usable positive set anywhere in the batch. Its value is kept at 0.0 so the
#: "scalar == sum of breakdown entries" invariant still holds; the key's
#: presence is the warning.
DEGENERATE_FLAG = "degenerate_no_positives"


@dataclass
class LossValue:
    """A scalar loss plus the named addends it was built from.

    Invariant: ``scalar`` equals the sum of ``term_breakdown`` values within
    1e-9 (each entry already includes its recipe weight).
    """

    scalar: torch.Tensor
    term_breakdown: dict[str, torch.Tensor] = field(default_factory=dict)

    def item(self) -> float:
        return float(self.scalar.detach())

    def __float__(self) -> float:
        return self.item()

    def breakdown_items(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.term_breakdown.items()}


@dataclass(frozen=True)
class LossRecipe:
    """Declarative weighted list of loss terms plus the training mode.

    ``terms`` is an ordered tuple of ``(term_id, weight)`` pairs; ``mode`` is
    ``"joint"`` (single composite objective) or ``"sequential"``
    (contrastive pretraining followed by a frozen-encoder linear probe).
    """

    name: str
    terms: tuple[tuple[str, float], ...]
    mode: str

    def term_ids(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.terms)


def _masked_log_denominator(sim: torch.Tensor) -> torch.Tensor:
    """logsumexp over each row of ``sim`` excluding the diagonal."""
    eye = torch.eye(sim.shape[0], dtype=torch.bool, device=sim.device)
    return torch.logsumexp(sim.masked_fill(eye, float("-inf")), dim=1)


def ntxent_intra(z_views: torch.Tensor, temperature: float = DEFAULT_TEMPERATURE) -> LossValue:
    """NT-Xent over two augmented views of the same modality.

    Args:
        z_views: (2N, k) unit-normalized projections; row i and row i+N are
            the two views of sample i.
        temperature: softmax temperature (> 0).

    Returns:
        LossValue with the mean over all 2N anchors of
        -log exp(cos(z_a, z_pos)/t) / sum_{b != a} exp(cos(z_a, z_b)/t).
    """
    tau = check_temperature(temperature)
    z = as_float_matrix(z_views, "z_views")
    if z.shape[0] < 4 or z.shape[0] % 2 != 0:
        raise InvalidBatchError(
            f"z_views needs an even row count >= 4 (two views of N >= 2 samples), "
            f"got {z.shape[0]}"
        )
    check_unit_rows(z, "z_views")

    n = z.shape[0] // 2
    sim = (z @ z.T) / tau
    log_denom = _masked_log_denominator(sim)
    pos_index = torch.cat(
        [torch.arange(n, 2 * n, device=z.device), torch.arange(0, n, device=z.device)]
    )
    pos = sim[torch.arange(2 * n, device=z.device), pos_index]
    loss = (log_denom - pos).mean()
    return LossValue(loss, {"ntxent_intra": loss})


def infonce_inter(
    z_s1: torch.Tensor,
    z_s2: torch.Tensor,
    temperature: float = DEFAULT_TEMPERATURE,
) -> LossValue:
    """Symmetric cross-modal InfoNCE over co-registered projection pairs.

    Row i of ``z_s1`` and row i of ``z_s2`` come from the same location.
    Negatives are cross-modal only: each anchor contrasts against every row
    of the *other* modality (its positive included in the denominator).
    """
    tau = check_temperature(temperature)
    z1 = as_float_matrix(z_s1, "z_s1")
    z2 = as_float_matrix(z_s2, "z_s2")
    check_same_rows(z1, z2, "z_s1", "z_s2")
    check_same_cols(z1, z2, "z_s1", "z_s2")
    if z1.shape[0] < 2:
        raise InvalidBatchError(f"inter-modal InfoNCE needs N >= 2 pairs, got {z1.shape[0]}")
    check_unit_rows(z1, "z_s1")
    check_unit_rows(z2, "z_s2")

    sim = (z1 @ z2.T) / tau
    diag = sim.diagonal()
    loss_12 = (torch.logsumexp(sim, dim=1) - diag).mean()
    loss_21 = (torch.logsumexp(sim, dim=0) - diag).mean()
    loss = 0.5 * (loss_12 + loss_21)
    return LossValue(loss, {"infonce_inter": loss})


def mulsupcon(
    z: torch.Tensor,
    labels: torch.Tensor,
    temperature: float = DEFAULT_TEMPERATURE,
) -> LossValue:
    """Multi-label supervised contrastive loss with per-label positive sets.

    For anchor i with active label set Y_i, each label c contributes the mean
    over positives P_c(i) = {j != i : y_jc = 1} of
    -log exp(cos(z_i, z_p)/t) / sum_{a != i} exp(cos(z_i, z_a)/t),
    and the anchor's loss averages the surviving label terms (labels with an
    empty positive set drop out of both numerator and divisor). The batch
    loss averages anchors that kept at least one label term. With one label
    per sample this is exactly the single-label SupCon "L_out" estimator.

    A batch where no anchor has any positive returns zero loss and sets the
    ``degenerate_no_positives`` flag key in the breakdown.
    """
    tau = check_temperature(temperature)
    zt = as_float_matrix(z, "z")
    y = check_binary_matrix(labels, "labels").to(dtype=zt.dtype, device=zt.device)
    check_same_rows(zt, y, "z", "labels")
    if zt.shape[0] < 2:
        raise InvalidBatchError(f"mulsupcon needs N >= 2 rows, got {zt.shape[0]}")
    check_unit_rows(zt, "z")

    n = zt.shape[0]
    sim = (zt @ zt.T) / tau
    log_denom = _masked_log_denominator(sim)
    log_prob = sim - log_denom.unsqueeze(1)

    off_diag = 1.0 - torch.eye(n, dtype=zt.dtype, device=zt.device)
    pos_counts = off_diag @ y                     # (N, L): |P_c(i)|
    sum_log_prob = (log_prob * off_diag) @ y      # (N, L): sum over positives
    valid = (y > 0) & (pos_counts > 0)

    per_label = torch.where(
        valid, -sum_log_prob / pos_counts.clamp(min=1.0), torch.zeros_like(sum_log_prob)
    )
    n_valid = valid.sum(dim=1)
    anchor_has_terms = n_valid > 0
    if not bool(anchor_has_terms.any()):
        zero = zt.sum() * 0.0
        return LossValue(zero, {"mulsupcon": zero, DEGENERATE_FLAG: zero.detach().clone()})

    anchor_loss = per_label.sum(dim=1) / n_valid.clamp(min=1).to(zt.dtype)
    loss = anchor_loss[anchor_has_terms].mean()
    return LossValue(loss, {"mulsupcon": loss})


def bce_multilabel(logits: torch.Tensor, labels: torch.Tensor) -> LossValue:
    """Mean binary cross-entropy over every (sample, label) cell, from logits.

    Uses the log-sum-exp form (max(x,0) - x*y + log(1 + exp(-|x|))), so
    saturated logits stay finite.
    """
    x = as_float_matrix(logits, "logits")
    y = check_binary_matrix(labels, "labels").to(dtype=x.dtype, device=x.device)
    if x.shape != y.shape:
        raise InvalidBatchError(
            f"logits and labels must share a shape, got {tuple(x.shape)} vs {tuple(y.shape)}"
        )
    if x.numel() == 0:
        raise InvalidBatchError("logits must be non-empty")
    loss = torch.nn.functional.binary_cross_entropy_with_logits(x, y)
    return LossValue(loss, {"bce_multilabel": loss})


def compose_loss(recipe: LossRecipe, computed_terms: dict[str, LossValue]) -> LossValue:
    """Weighted sum of precomputed loss terms according to ``recipe``.

    Raises :class:`RecipeError` naming the first term the recipe requires but
    ``computed_terms`` lacks. An empty recipe composes to zero.
    """
    total: torch.Tensor | None = None
    breakdown: dict[str, torch.Tensor] = {}
    for term_id, weight in recipe.terms:
        if term_id not in computed_terms:
            raise RecipeError(
                f"recipe '{recipe.name}' requires term '{term_id}' "
                f"but it was not computed (have: {sorted(computed_terms)})"
            )
        addend = float(weight) * computed_terms[term_id].scalar
        breakdown[term_id] = addend
        # Accumulate in float64 so the stored scalar equals the sum of the
        # reported breakdown values even when terms come out of a float32
        # graph; gradients still flow to the native-dtype terms.
        wide = addend.to(torch.float64)
        total = wide if total is None else total + wide
    if total is None:
        total = torch.zeros((), dtype=torch.float64)
    return LossValue(total, breakdown)
