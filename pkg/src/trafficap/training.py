"""Mini-batch training loop with validation scoring and checkpointing."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import APP_TYPE_LABELS, RunConfig
from .dataset import DatasetRecord
from .embeddings import get_embedder
from .encoder import build_type_embedding_matrix
from .errors import EmptyDataset
from .features import FeatureScaler
from .metrics import EvalCorpus, bleu4, cider
from .model import TrafficCaptionModel
from .vocab import PAD, Vocabulary, tokenize

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    checkpoint_dir: Path
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_score: float = float("-inf")

    @property
    def final_losses(self) -> dict:
        return self.history[-1]["losses"] if self.history else {}


def records_to_tensors(
    records: list[DatasetRecord],
    scaler: FeatureScaler,
    vocab: Vocabulary,
    max_caption_len: int,
) -> dict[str, torch.Tensor]:
    features = np.stack([r.features for r in records])
    mask = np.stack([r.mask for r in records])
    scaled = scaler.transform(features, mask=mask)
    encoded = [vocab.encode_caption(r.caption, max_caption_len) for r in records]
    width = max(len(ids) for ids in encoded)
    gold = np.full((len(records), width), PAD, dtype=np.int64)
    for row, ids in enumerate(encoded):
        gold[row, : len(ids)] = ids
    return {
        "features": torch.from_numpy(scaled),
        "mask": torch.from_numpy(mask),
        "labels": torch.tensor([r.app_type for r in records], dtype=torch.long),
        "gold": torch.from_numpy(gold),
        "embeds": torch.from_numpy(
            np.stack([r.caption_embedding for r in records]).astype(np.float32)
        ),
    }


@torch.no_grad()
def predict_records(
    model: TrafficCaptionModel,
    records: list[DatasetRecord],
    vocab: Vocabulary,
    scaler: FeatureScaler,
    batch_size: int = 32,
    max_len: int = 30,
) -> tuple[list[str], np.ndarray]:
    """Greedy captions and app-type predictions for a list of records."""
    captions: list[str] = []
    app_preds: list[int] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        features = np.stack([r.features for r in chunk])
        mask = np.stack([r.mask for r in chunk])
        scaled = torch.from_numpy(scaler.transform(features, mask=mask))
        tokens, p = model.caption_batch(
            scaled, torch.from_numpy(mask), max_len=max_len
        )
        captions.extend(" ".join(vocab.decode(ids)) for ids in tokens)
        app_preds.extend(int(k) for k in p.argmax(dim=1))
    return captions, np.asarray(app_preds)


def score_predictions(
    predicted: list[str], references: list[str]
) -> dict[str, float]:
    """Corpus BLEU-4 and CIDEr of predictions against single references."""
    corpus = EvalCorpus(
        items=[(tokenize(c), [tokenize(r)]) for c, r in zip(predicted, references)]
    )
    scores = {"bleu4": bleu4(corpus)}
    if len(corpus.items) >= 2:
        scores["cider"], _ = cider(corpus)
    return scores


def train(
    train_records: list[DatasetRecord],
    val_records: list[DatasetRecord],
    run_config: RunConfig,
    out_dir: str | Path,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Optimize the combined loss with teacher forcing.

    The vocabulary comes from the training split only; the best-validation
    checkpoint (CIDEr, BLEU-4 when the val split is a single item) is what
    gets written to out_dir, together with a per-epoch JSONL metrics log.
    """
    if not train_records:
        raise EmptyDataset("training requires at least one record")
    run_config.validate()
    tc, ec = run_config.train, run_config.encoder
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)

    vocab = Vocabulary.build(
        (r.caption for r in train_records), min_freq=tc.min_token_freq
    )
    scaler = FeatureScaler().fit(
        np.stack([r.features for r in train_records]),
        mask=np.stack([r.mask for r in train_records]),
    )
    embedder = get_embedder(run_config.embedder)
    type_embeddings = build_type_embedding_matrix(
        labels=APP_TYPE_LABELS[: ec.app_type_count],
        embedder=embedder,
        out_dim=ec.type_embed_dim,
    )
    embed_dim = int(train_records[0].caption_embedding.shape[0])
    model = TrafficCaptionModel(
        ec, vocab_size=len(vocab), caption_embed_dim=embed_dim,
        type_embeddings=type_embeddings,
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=tc.learning_rate)

    tensors = records_to_tensors(train_records, scaler, vocab, tc.max_caption_len)
    n = len(train_records)
    result = TrainResult(checkpoint_dir=Path(out_dir))
    best_state = None
    stale_validations = 0

    for epoch in range(1, tc.epochs + 1):
        model.train()
        order = rng.permutation(n)
        sums = {"app": 0.0, "cont": 0.0, "cap": 0.0, "sent": 0.0, "total": 0.0}
        batches = 0
        for start in range(0, n, tc.batch_size):
            idx = torch.from_numpy(order[start : start + tc.batch_size].copy())
            optimizer.zero_grad()
            losses = model.training_losses(
                tensors["features"][idx],
                tensors["mask"][idx],
                tensors["labels"][idx],
                tensors["gold"][idx],
                tensors["embeds"][idx],
                run_config.loss,
            )
            losses["total"].backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), tc.clip_norm)
            optimizer.step()
            for key in sums:
                sums[key] += float(losses[key].detach())
            batches += 1
        epoch_losses = {key: value / batches for key, value in sums.items()}

        val_scores = None
        if val_records and epoch % tc.val_interval == 0:
            predicted, _ = predict_records(
                model, val_records, vocab, scaler,
                batch_size=tc.batch_size, max_len=tc.max_caption_len,
            )
            val_scores = score_predictions(
                predicted, [r.caption for r in val_records]
            )
            tracked = val_scores.get("cider", val_scores["bleu4"])
            if tracked > result.best_score:
                result.best_score = tracked
                result.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                stale_validations = 0
            else:
                stale_validations += 1
        result.history.append(
            {"epoch": epoch, "losses": epoch_losses, "val_scores": val_scores}
        )
        logger.info(
            "epoch %d total=%.4f cap=%.4f val=%s",
            epoch, epoch_losses["total"], epoch_losses["cap"], val_scores,
        )
        if tc.patience and stale_validations >= tc.patience:
            logger.info("early stop at epoch %d", epoch)
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        result.best_epoch = len(result.history)
    save_checkpoint(
        out_dir,
        model,
        run_config,
        vocab,
        scaler,
        embedder_id=embedder.embedder_id,
        epoch=result.best_epoch,
        metric_history=result.history,
    )
    log_file = Path(log_path) if log_path else Path(out_dir) / "metrics.jsonl"
    with open(log_file, "w", encoding="utf-8") as fh:
        for entry in result.history:
            fh.write(json.dumps(entry) + "\n")
    return result
