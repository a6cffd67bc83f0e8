"""Flow feature encoder: two-stage dynamic modulation + pattern prototypes.

Stage one encodes the raw flow sequence unconditionally and predicts the app
type. Stage two re-encodes after FiLM-conditioning every flow vector on the
(predicted or teacher-forced) type embedding. A bank of learnable per-type
prototypes is attended with the pooled global vector to form the final
pattern embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .config import APP_TYPE_LABELS, EncoderConfig
from .embeddings import HashedNGramEmbedder
from .errors import IndexOutOfRange, ShapeMismatch
from .features import FlowFeatureSequence


def sinusoidal_positions(length: int, dim: int) -> Tensor:
    """Classic fixed sin/cos position table, shape (length, dim)."""
    position = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=torch.float32) * (-math.log(10000.0) / dim)
    )
    table = torch.zeros(length, dim)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: dim // 2])
    return table


def masked_mean(x: Tensor, mask: Tensor) -> Tensor:
    """Mean over the sequence dim counting only mask=True rows."""
    weights = mask.to(x.dtype).unsqueeze(-1)
    return (x * weights).sum(dim=1) / weights.sum(dim=1).clamp_min(1.0)


def build_type_embedding_matrix(
    labels=APP_TYPE_LABELS,
    embedder=None,
    out_dim: int = 64,
    seed: int = 0,
) -> np.ndarray:
    """Frozen K x L matrix: sentence-embed each label, project to out_dim.

    The projection is a fixed seeded Gaussian map since the embedder's width
    rarely equals the type-embedding width.
    """
    embedder = embedder or HashedNGramEmbedder()
    rows = np.stack([embedder.embed(label) for label in labels])
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((rows.shape[1], out_dim)) / math.sqrt(rows.shape[1])
    return (rows @ projection).astype(np.float32)


@dataclass
class EncodedTraffic:
    """Single-sample encoder output (tensors on CPU)."""

    F: Tensor
    f_global: Tensor
    p: Tensor
    k_hat: int
    b_tilde: Tensor
    alpha_weights: Tensor
    mask: Tensor


class FlowFeatureEncoder(nn.Module):
    def __init__(self, config: EncoderConfig, type_embeddings: np.ndarray | None = None):
        super().__init__()
        config.validate()
        self.config = config
        c = config
        self.input_proj = nn.Linear(c.feature_dim, c.hidden_dim)
        self.register_buffer(
            "positions",
            sinusoidal_positions(c.max_flows, c.hidden_dim),
            persistent=False,
        )
        if c.use_dfm:
            self.stage1 = self._make_transformer()
            self.type_head = nn.Linear(c.hidden_dim, c.app_type_count)
            if type_embeddings is None:
                type_embeddings = build_type_embedding_matrix(
                    labels=APP_TYPE_LABELS[: c.app_type_count],
                    out_dim=c.type_embed_dim,
                )
            if type_embeddings.shape != (c.app_type_count, c.type_embed_dim):
                raise ShapeMismatch(
                    f"type embedding matrix must be "
                    f"{(c.app_type_count, c.type_embed_dim)}, got {type_embeddings.shape}"
                )
            self.register_buffer(
                "type_embeddings", torch.from_numpy(np.ascontiguousarray(type_embeddings))
            )
            self.film_gamma = nn.Linear(c.type_embed_dim, c.hidden_dim)
            self.film_beta = nn.Linear(c.type_embed_dim, c.hidden_dim)
        self.stage2 = self._make_transformer()
        if c.use_fppl:
            bank = torch.empty(c.app_type_count * c.prototypes_per_type, c.hidden_dim)
            nn.init.xavier_uniform_(bank, gain=1.0)
            self.prototypes = nn.Parameter(
                bank.view(c.app_type_count, c.prototypes_per_type, c.hidden_dim)
            )
            self.pattern_norm = nn.LayerNorm(c.hidden_dim)
            self.blend_logit = nn.Parameter(torch.zeros(()))
        self.pattern_proj = nn.Linear(c.hidden_dim, c.pattern_dim)
        self.pattern_out_norm = nn.LayerNorm(c.pattern_dim)
        self.pattern_dropout = nn.Dropout(c.dropout)
        self._init_linear_weights()

    def _make_transformer(self) -> nn.TransformerEncoder:
        c = self.config
        layer = nn.TransformerEncoderLayer(
            d_model=c.hidden_dim,
            nhead=c.attention_heads,
            dim_feedforward=4 * c.hidden_dim,
            dropout=c.dropout,
            batch_first=True,
            norm_first=True,
        )
        return nn.TransformerEncoder(
            layer, num_layers=c.encoder_layers, enable_nested_tensor=False
        )

    def _init_linear_weights(self) -> None:
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.MultiheadAttention):
                nn.init.xavier_uniform_(module.in_proj_weight)
                nn.init.zeros_(module.in_proj_bias)

    def _check_shapes(self, features: Tensor, mask: Tensor) -> None:
        c = self.config
        if features.dim() != 3 or features.shape[2] != c.feature_dim:
            raise ShapeMismatch(
                f"expected (B, {c.max_flows}, {c.feature_dim}) features, "
                f"got {tuple(features.shape)}"
            )
        if mask.shape != features.shape[:2]:
            raise ShapeMismatch("mask must be (B, S)")

    def _check_type_index(self, type_index: Tensor) -> None:
        k = self.config.app_type_count
        if ((type_index < 0) | (type_index >= k)).any():
            raise IndexOutOfRange(f"type index outside 0..{k - 1}")

    def _encode_stage(self, x: Tensor, mask: Tensor, transformer: nn.Module) -> Tensor:
        x = x + self.positions[: x.shape[1]].to(x.dtype)
        return transformer(x, src_key_padding_mask=~mask)

    def unconditional_encode(
        self, features: Tensor, mask: Tensor
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Stage one: project, transformer-encode, pool, classify.

        Returns (T_dd (B,S,H), p (B,K), k_hat (B,))."""
        self._check_shapes(features, mask)
        projected = self.input_proj(features)
        encoded = self._encode_stage(projected, mask, self.stage1)
        logits = self.type_head(masked_mean(encoded, mask))
        p = torch.softmax(logits, dim=-1)
        return encoded, p, p.argmax(dim=-1)

    def film_modulate(self, encoded: Tensor, type_index: Tensor, mask: Tensor) -> Tensor:
        """Scale/shift each row with the type embedding's FiLM parameters."""
        self._check_type_index(type_index)
        rows = self.type_embeddings[type_index].to(encoded.dtype)
        gamma = self.film_gamma(rows).unsqueeze(1)
        beta = self.film_beta(rows).unsqueeze(1)
        out = gamma * encoded + beta
        return out * mask.to(out.dtype).unsqueeze(-1)

    def conditional_encode(self, modulated: Tensor, mask: Tensor) -> tuple[Tensor, Tensor]:
        """Stage two transformer (separate weights) and masked mean pooling."""
        encoded = self._encode_stage(modulated, mask, self.stage2)
        return encoded, masked_mean(encoded, mask)

    def prototype_attend(self, f_global: Tensor, type_index: Tensor) -> tuple[Tensor, Tensor]:
        """Scaled dot-product attention over the type's M prototypes."""
        self._check_type_index(type_index)
        protos = self.prototypes[type_index].to(f_global.dtype)
        scores = torch.einsum("bh,bmh->bm", f_global, protos)
        alpha = torch.softmax(scores / math.sqrt(self.config.hidden_dim), dim=-1)
        pattern = torch.einsum("bm,bmh->bh", alpha, protos)
        return alpha, pattern

    def fuse_pattern(self, pattern: Tensor, f_global: Tensor) -> Tensor:
        """Residual-normalize, blend with f_global, project to pattern space."""
        if self.config.use_fppl:
            residual = self.pattern_norm(pattern + f_global)
            blend = torch.sigmoid(self.blend_logit)
            mixed = blend * residual + (1.0 - blend) * f_global
        else:
            mixed = f_global
        return self.pattern_dropout(self.pattern_out_norm(self.pattern_proj(mixed)))

    def forward(
        self,
        features: Tensor,
        mask: Tensor,
        override_type: Tensor | None = None,
    ) -> dict[str, Tensor]:
        """Full batched pass; override_type teacher-forces the conditioning."""
        c = self.config
        batch = features.shape[0]
        if c.use_dfm:
            encoded, p, k_hat = self.unconditional_encode(features, mask)
            condition = override_type if override_type is not None else k_hat
            modulated = self.film_modulate(encoded, condition, mask)
        else:
            self._check_shapes(features, mask)
            p = torch.full(
                (batch, c.app_type_count), 1.0 / c.app_type_count, dtype=features.dtype
            )
            k_hat = torch.zeros(batch, dtype=torch.long)
            condition = override_type if override_type is not None else k_hat
            modulated = self.input_proj(features)
        F, f_global = self.conditional_encode(modulated, mask)
        if c.use_fppl:
            alpha, pattern = self.prototype_attend(f_global, condition)
            b_tilde = self.fuse_pattern(pattern, f_global)
        else:
            alpha = torch.full(
                (batch, c.prototypes_per_type),
                1.0 / c.prototypes_per_type,
                dtype=features.dtype,
            )
            b_tilde = self.fuse_pattern(f_global, f_global)
        return {
            "F": F,
            "f_global": f_global,
            "p": p,
            "k_hat": k_hat,
            "b_tilde": b_tilde,
            "alpha": alpha,
        }

    @torch.no_grad()
    def encode(
        self, sequence: FlowFeatureSequence, override_type: int | None = None
    ) -> EncodedTraffic:
        """Single-sample convenience wrapper used at inference time."""
        was_training = self.training
        self.eval()
        try:
            features = torch.from_numpy(np.asarray(sequence.features, dtype=np.float32))
            mask = torch.from_numpy(np.asarray(sequence.mask, dtype=bool))
            override = (
                torch.tensor([override_type], dtype=torch.long)
                if override_type is not None
                else None
            )
            out = self.forward(features.unsqueeze(0), mask.unsqueeze(0), override)
        finally:
            self.train(was_training)
        return EncodedTraffic(
            F=out["F"][0],
            f_global=out["f_global"][0],
            p=out["p"][0],
            k_hat=int(out["k_hat"][0]),
            b_tilde=out["b_tilde"][0],
            alpha_weights=out["alpha"][0],
            mask=mask,
        )
