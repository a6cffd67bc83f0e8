"""The four training losses and their weighted combination.

All functions take batched torch tensors and return scalar tensors so they
can sit directly on the autograd path.
"""

from __future__ import annotations

import torch
from torch import Tensor

from .config import LossWeights
from .errors import LabelOutOfRange, LengthMismatch, NonFiniteLoss

LOG_CLAMP = 1e-12
NORM_EPS = 1e-8


def loss_app(p_batch: Tensor, labels: Tensor) -> Tensor:
    """Cross-entropy over the predicted app-type distributions."""
    if ((labels < 0) | (labels >= p_batch.shape[1])).any():
        raise LabelOutOfRange(f"labels must index 0..{p_batch.shape[1] - 1}")
    picked = p_batch.gather(1, labels.unsqueeze(1)).squeeze(1)
    return -torch.log(picked.clamp_min(LOG_CLAMP)).mean()


def loss_contrastive(
    f_batch: Tensor, labels: Tensor, prototypes: Tensor, tau: float
) -> Tensor:
    """Pull f toward its own type's prototypes, push from all others.

    loss = -mean log(z_pos / (z_pos + z_neg)) with z the exp-sum of scaled
    dot products. Computed as logsumexp(all) - logsumexp(pos), which applies
    the per-sample max offset (mathematically identical, numerically safe).
    """
    n_types, per_type, hidden = prototypes.shape
    flat = prototypes.reshape(n_types * per_type, hidden)
    sims = f_batch @ flat.T / tau
    col_type = torch.arange(n_types * per_type) // per_type
    pos_mask = col_type.unsqueeze(0) == labels.unsqueeze(1)
    all_lse = torch.logsumexp(sims, dim=1)
    pos_lse = torch.logsumexp(
        sims.masked_fill(~pos_mask, float("-inf")), dim=1
    )
    return (all_lse - pos_lse).mean()


def loss_caption(step_probs: Tensor, gold: Tensor, pad_id: int = 0) -> Tensor:
    """Mean over samples of summed NLL across steps; PAD positions excluded.

    step_probs is (B, T, V) next-word distributions, gold is (B, T) ids.
    """
    if step_probs.shape[:2] != gold.shape:
        raise LengthMismatch(
            f"distributions {tuple(step_probs.shape[:2])} vs gold {tuple(gold.shape)}"
        )
    picked = step_probs.gather(2, gold.clamp_min(0).unsqueeze(2)).squeeze(2)
    nll = -torch.log(picked.clamp_min(LOG_CLAMP))
    keep = (gold != pad_id).to(nll.dtype)
    return (nll * keep).sum(dim=1).mean()


def loss_sentence(s_batch: Tensor, g_batch: Tensor) -> Tensor:
    """1 - mean cosine similarity between generated and reference embeddings."""
    s_norm = s_batch.norm(dim=1).clamp_min(NORM_EPS)
    g_norm = g_batch.norm(dim=1).clamp_min(NORM_EPS)
    cosine = (s_batch * g_batch).sum(dim=1) / (s_norm * g_norm)
    return 1.0 - cosine.mean()


def loss_overall(
    app: Tensor, cont: Tensor, cap: Tensor, sent: Tensor, weights: LossWeights
) -> Tensor:
    for name, value in (("app", app), ("cont", cont), ("cap", cap), ("sent", sent)):
        if not torch.isfinite(value):
            raise NonFiniteLoss(f"loss_{name} is {float(value.detach())}")
    return (
        weights.lambda_app * app
        + weights.lambda_cont * cont
        + weights.lambda_cap * cap
        + weights.lambda_sent * sent
    )
