"""Full traffic-captioning model: encoder + decoder + sentence projections."""

from __future__ import annotations

import numpy as np
import torch
from torch import Tensor, nn

from .config import EncoderConfig, LossWeights
from .decoder import CaptionDecoder
from .encoder import FlowFeatureEncoder
from .losses import loss_app, loss_caption, loss_contrastive, loss_overall, loss_sentence
from .vocab import PAD


class TrafficCaptionModel(nn.Module):
    """Couples the flow encoder and caption decoder with the two projection
    heads used by the sentence-alignment loss: one mapping pooled decoder
    hidden states into pattern space, one mapping reference caption
    embeddings into the same space."""

    def __init__(
        self,
        config: EncoderConfig,
        vocab_size: int,
        caption_embed_dim: int,
        type_embeddings: np.ndarray | None = None,
    ):
        super().__init__()
        self.config = config
        self.caption_embed_dim = caption_embed_dim
        self.encoder = FlowFeatureEncoder(config, type_embeddings)
        self.decoder = CaptionDecoder(config, vocab_size)
        self.sent_proj = nn.Linear(config.hidden_dim, config.pattern_dim)
        self.ref_proj = nn.Linear(caption_embed_dim, config.pattern_dim)
        for module in (self.sent_proj, self.ref_proj):
            nn.init.xavier_uniform_(module.weight)
            nn.init.zeros_(module.bias)

    def training_losses(
        self,
        features: Tensor,
        mask: Tensor,
        labels: Tensor,
        gold: Tensor,
        caption_embeds: Tensor,
        weights: LossWeights,
    ) -> dict[str, Tensor]:
        """Teacher-forced pass returning every loss component and the total.

        Conditioning uses the ground-truth labels; decoder inputs are the
        gold tokens shifted right behind BOS.
        """
        enc = self.encoder(features, mask, override_type=labels)
        qs, hs = self.decoder.teacher_forced_batch(
            enc["F"], mask, enc["b_tilde"], enc["f_global"], gold
        )
        app = loss_app(enc["p"], labels)
        if self.config.use_fppl:
            cont = loss_contrastive(
                enc["f_global"], labels, self.encoder.prototypes, weights.tau
            )
        else:
            cont = torch.zeros((), dtype=features.dtype)
        cap = loss_caption(qs, gold, pad_id=PAD)
        step_keep = (gold != PAD).to(hs.dtype).unsqueeze(-1)
        pooled = (hs * step_keep).sum(dim=1) / step_keep.sum(dim=1).clamp_min(1.0)
        generated = self.sent_proj(pooled)
        reference = self.ref_proj(caption_embeds)
        sent = loss_sentence(generated, reference)
        total = loss_overall(app, cont, cap, sent, weights)
        return {
            "app": app,
            "cont": cont,
            "cap": cap,
            "sent": sent,
            "total": total,
            "p": enc["p"],
        }

    @torch.no_grad()
    def caption_batch(
        self, features: Tensor, mask: Tensor, max_len: int = 30
    ) -> tuple[list[list[int]], Tensor]:
        """Greedy-decode a batch; returns token lists and app-type probs."""
        was_training = self.training
        self.eval()
        try:
            enc = self.encoder(features, mask, override_type=None)
            tokens = self.decoder.decode_greedy_batch(
                enc["F"], mask, enc["b_tilde"], enc["f_global"], max_len=max_len
            )
        finally:
            self.train(was_training)
        return tokens, enc["p"]
