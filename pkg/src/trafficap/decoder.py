"""Attention-based LSTM caption decoder.

At each step the previous word embedding, an attention-weighted context over
the encoded flow sequence, and the pattern embedding are concatenated and
fed through an LSTM cell; a linear head over the hidden state predicts the
next-word distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .config import EncoderConfig
from .encoder import EncodedTraffic
from .errors import AllMasked, EmptyGold, IndexOutOfRange
from .vocab import BOS, EOS, PAD, Vocabulary


@dataclass
class DecoderState:
    h: Tensor
    e: Tensor
    t: int = 0


class CaptionDecoder(nn.Module):
    def __init__(self, config: EncoderConfig, vocab_size: int):
        super().__init__()
        c = config
        self.config = config
        self.vocab_size = vocab_size
        self.word_embedding = nn.Embedding(vocab_size, c.type_embed_dim)
        self.attn_r = nn.Parameter(torch.empty(c.hidden_dim))
        self.attn_u = nn.Parameter(torch.empty(c.hidden_dim))
        self.attn_v = nn.Parameter(torch.empty(c.hidden_dim))
        self.attn_o = nn.Parameter(torch.empty(c.hidden_dim))
        self.cell = nn.LSTMCell(
            c.type_embed_dim + c.hidden_dim + c.pattern_dim, c.hidden_dim
        )
        self.out_proj = nn.Linear(c.hidden_dim, vocab_size)
        self.init_h = nn.Linear(c.hidden_dim, c.hidden_dim)
        self.init_e = nn.Linear(c.hidden_dim, c.hidden_dim)
        self._init_weights()

    def _init_weights(self) -> None:
        nn.init.xavier_uniform_(self.word_embedding.weight)
        for vec in (self.attn_r, self.attn_u, self.attn_v, self.attn_o):
            nn.init.uniform_(vec, -0.1, 0.1)
        for module in (self.out_proj, self.init_h, self.init_e):
            nn.init.xavier_uniform_(module.weight)
            nn.init.zeros_(module.bias)
        nn.init.xavier_uniform_(self.cell.weight_ih)
        nn.init.xavier_uniform_(self.cell.weight_hh)
        nn.init.zeros_(self.cell.bias_ih)
        nn.init.zeros_(self.cell.bias_hh)

    def initial_state(self, f_global: Tensor) -> DecoderState:
        """h0/e0 from the global traffic vector through learned tanh maps."""
        return DecoderState(
            h=torch.tanh(self.init_h(f_global)),
            e=torch.tanh(self.init_e(f_global)),
            t=0,
        )

    def attend(self, h_prev: Tensor, F: Tensor, mask: Tensor) -> tuple[Tensor, Tensor]:
        """Additive-style attention: phi_s = softmax(r . tanh(u*h + v*f_s + o)).

        Masked positions get -inf scores, so they carry exactly zero weight.
        Returns (phi (B,S), context (B,H))."""
        if not mask.any(dim=1).all():
            raise AllMasked("attention needs at least one unmasked position")
        pre = torch.tanh(
            self.attn_u * h_prev.unsqueeze(1) + self.attn_v * F + self.attn_o
        )
        scores = pre @ self.attn_r
        scores = scores.masked_fill(~mask, float("-inf"))
        phi = torch.softmax(scores, dim=-1)
        context = torch.einsum("bs,bsh->bh", phi, F)
        return phi, context

    def step(
        self,
        state: DecoderState,
        prev_token: Tensor,
        F: Tensor,
        mask: Tensor,
        b_tilde: Tensor,
    ) -> tuple[DecoderState, Tensor]:
        """One LSTM step; returns the new state and q over the vocabulary."""
        if ((prev_token < 0) | (prev_token >= self.vocab_size)).any():
            raise IndexOutOfRange("previous token outside the vocabulary")
        _, context = self.attend(state.h, F, mask)
        x = torch.cat([self.word_embedding(prev_token), context, b_tilde], dim=-1)
        h, e = self.cell(x, (state.h, state.e))
        q = torch.softmax(self.out_proj(h), dim=-1)
        return DecoderState(h=h, e=e, t=state.t + 1), q

    def teacher_forced_batch(
        self,
        F: Tensor,
        mask: Tensor,
        b_tilde: Tensor,
        f_global: Tensor,
        gold: Tensor,
    ) -> tuple[Tensor, Tensor]:
        """Run every step feeding gold tokens (BOS first).

        gold is (B, T) PAD-padded; returns per-step distributions (B, T, V)
        and hidden states (B, T, H). Loss masking of PAD steps is the
        caller's job."""
        batch, steps = gold.shape
        state = self.initial_state(f_global)
        prev = torch.full((batch,), BOS, dtype=torch.long)
        qs, hs = [], []
        for t in range(steps):
            state, q = self.step(state, prev, F, mask, b_tilde)
            qs.append(q)
            hs.append(state.h)
            prev = gold[:, t]
        return torch.stack(qs, dim=1), torch.stack(hs, dim=1)

    def teacher_forced_logits(self, enc: EncodedTraffic, gold: list[int]) -> Tensor:
        """Per-position distributions for one sample's gold caption ids."""
        if not gold:
            raise EmptyGold("gold token sequence must be non-empty")
        if gold[-1] != EOS:
            raise EmptyGold("gold token sequence must end with EOS")
        gold_t = torch.tensor([gold], dtype=torch.long)
        qs, _ = self.teacher_forced_batch(
            enc.F.unsqueeze(0),
            enc.mask.unsqueeze(0),
            enc.b_tilde.unsqueeze(0),
            enc.f_global.unsqueeze(0),
            gold_t,
        )
        return qs[0]

    def decode_greedy_batch(
        self,
        F: Tensor,
        mask: Tensor,
        b_tilde: Tensor,
        f_global: Tensor,
        max_len: int = 30,
    ) -> list[list[int]]:
        """Greedy argmax decoding; ties go to the lowest token index."""
        batch = F.shape[0]
        state = self.initial_state(f_global)
        prev = torch.full((batch,), BOS, dtype=torch.long)
        finished = np.zeros(batch, dtype=bool)
        outputs: list[list[int]] = [[] for _ in range(batch)]
        for _ in range(max_len):
            state, q = self.step(state, prev, F, mask, b_tilde)
            # numpy argmax guarantees the first (lowest-index) max wins
            chosen = np.argmax(q.detach().cpu().numpy(), axis=1)
            for i, token in enumerate(chosen):
                if finished[i]:
                    continue
                if token == EOS:
                    finished[i] = True
                elif token not in (PAD, BOS):
                    outputs[i].append(int(token))
            if finished.all():
                break
            prev = torch.from_numpy(chosen.astype(np.int64))
        return outputs

    @torch.no_grad()
    def decode_greedy(self, enc: EncodedTraffic, max_len: int = 30) -> list[int]:
        was_training = self.training
        self.eval()
        try:
            tokens = self.decode_greedy_batch(
                enc.F.unsqueeze(0),
                enc.mask.unsqueeze(0),
                enc.b_tilde.unsqueeze(0),
                enc.f_global.unsqueeze(0),
                max_len=max_len,
            )[0]
        finally:
            self.train(was_training)
        return tokens

    @torch.no_grad()
    def decode_beam(
        self, enc: EncodedTraffic, max_len: int = 30, beam_width: int = 3
    ) -> list[int]:
        """Beam search over log-probabilities; deterministic tie handling."""
        was_training = self.training
        self.eval()
        try:
            state = self.initial_state(enc.f_global.unsqueeze(0))
            beams: list[tuple[float, list[int], DecoderState, bool]] = [
                (0.0, [], state, False)
            ]
            F = enc.F.unsqueeze(0)
            mask = enc.mask.unsqueeze(0)
            b_tilde = enc.b_tilde.unsqueeze(0)
            for _ in range(max_len):
                candidates: list[tuple[float, list[int], DecoderState, bool]] = []
                for score, tokens, st, done in beams:
                    if done:
                        candidates.append((score, tokens, st, True))
                        continue
                    prev = torch.tensor(
                        [tokens[-1] if tokens else BOS], dtype=torch.long
                    )
                    new_state, q = self.step(st, prev, F, mask, b_tilde)
                    logq = torch.log(q[0].clamp_min(1e-12)).cpu().numpy()
                    top = np.argsort(-logq, kind="stable")[:beam_width]
                    for token in top:
                        token = int(token)
                        candidates.append(
                            (
                                score + float(logq[token]),
                                tokens + [token],
                                new_state,
                                token == EOS,
                            )
                        )
                candidates.sort(key=lambda c: (-c[0], c[1]))
                beams = candidates[:beam_width]
                if all(done for _, _, _, done in beams):
                    break
            best = beams[0][1]
            return [t for t in best if t not in (PAD, BOS, EOS)]
        finally:
            self.train(was_training)


def render_caption(tokens: list[int], vocab: Vocabulary) -> str:
    """Human-readable caption: tokens joined with single spaces."""
    return " ".join(vocab.decode(tokens))
