"""Scikit-learn style estimator wrapping the full captioning model.

`fit(X, y)` takes traffic feature sequences and (caption, app_type) targets,
`predict(X)` returns caption strings, and `score(X, y)` reports corpus CIDEr
(BLEU-4 when the corpus is a single item). Construction parameters follow
the sklearn convention so get_params/set_params/clone work unchanged.
"""

from __future__ import annotations

import tempfile

import numpy as np
from sklearn.base import BaseEstimator

from .config import EncoderConfig, LossWeights, RunConfig, TrainConfig
from .dataset import DatasetRecord
from .embeddings import get_embedder
from .training import predict_records, score_predictions, train
from .validation import as_feature_batch, check_caption_targets


class TrafficCaptioner(BaseEstimator):
    def __init__(
        self,
        hidden_dim: int = 512,
        pattern_dim: int = 256,
        type_embed_dim: int = 64,
        app_type_count: int = 5,
        prototypes_per_type: int = 5,
        max_flows: int = 50,
        feature_dim: int = 123,
        encoder_layers: int = 2,
        attention_heads: int = 4,
        dropout: float = 0.1,
        use_dfm: bool = True,
        use_fppl: bool = True,
        epochs: int = 30,
        batch_size: int = 32,
        learning_rate: float = 3e-4,
        clip_norm: float = 5.0,
        seed: int = 0,
        val_fraction: float = 0.1,
        val_interval: int = 1,
        patience: int = 0,
        min_token_freq: int = 2,
        max_caption_len: int = 30,
        lambda_app: float = 1.0,
        lambda_cont: float = 1.0,
        lambda_cap: float = 1.0,
        lambda_sent: float = 1.0,
        tau: float = 0.1,
        embedder: str = "hashed",
    ):
        self.hidden_dim = hidden_dim
        self.pattern_dim = pattern_dim
        self.type_embed_dim = type_embed_dim
        self.app_type_count = app_type_count
        self.prototypes_per_type = prototypes_per_type
        self.max_flows = max_flows
        self.feature_dim = feature_dim
        self.encoder_layers = encoder_layers
        self.attention_heads = attention_heads
        self.dropout = dropout
        self.use_dfm = use_dfm
        self.use_fppl = use_fppl
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.seed = seed
        self.val_fraction = val_fraction
        self.val_interval = val_interval
        self.patience = patience
        self.min_token_freq = min_token_freq
        self.max_caption_len = max_caption_len
        self.lambda_app = lambda_app
        self.lambda_cont = lambda_cont
        self.lambda_cap = lambda_cap
        self.lambda_sent = lambda_sent
        self.tau = tau
        self.embedder = embedder

    def run_config(self) -> RunConfig:
        config = RunConfig(
            encoder=EncoderConfig(
                feature_dim=self.feature_dim,
                hidden_dim=self.hidden_dim,
                pattern_dim=self.pattern_dim,
                type_embed_dim=self.type_embed_dim,
                app_type_count=self.app_type_count,
                prototypes_per_type=self.prototypes_per_type,
                max_flows=self.max_flows,
                encoder_layers=self.encoder_layers,
                attention_heads=self.attention_heads,
                dropout=self.dropout,
                use_dfm=self.use_dfm,
                use_fppl=self.use_fppl,
            ),
            loss=LossWeights(
                lambda_app=self.lambda_app,
                lambda_cont=self.lambda_cont,
                lambda_cap=self.lambda_cap,
                lambda_sent=self.lambda_sent,
                tau=self.tau,
            ),
            train=TrainConfig(
                epochs=self.epochs,
                batch_size=self.batch_size,
                learning_rate=self.learning_rate,
                clip_norm=self.clip_norm,
                seed=self.seed,
                val_interval=self.val_interval,
                patience=self.patience,
                min_token_freq=self.min_token_freq,
                max_caption_len=self.max_caption_len,
            ),
            embedder=self.embedder,
        )
        config.validate()
        return config

    def _make_records(self, X, y, mask=None) -> list[DatasetRecord]:
        features, mask_arr = as_feature_batch(X, mask, feature_dim=self.feature_dim)
        targets = check_caption_targets(y, self.app_type_count)
        if len(targets) != features.shape[0]:
            raise ValueError(
                f"{features.shape[0]} samples but {len(targets)} targets"
            )
        embedder = get_embedder(self.embedder)
        return [
            DatasetRecord(
                segment_id=f"sample-{i:06d}",
                features=features[i],
                mask=mask_arr[i],
                caption=caption,
                app_type=app_type,
                caption_embedding=embedder.embed(caption),
                embedder_id=embedder.embedder_id,
            )
            for i, (caption, app_type) in enumerate(targets)
        ]

    def fit(self, X, y, mask=None):
        """Train on feature sequences X and (caption, app_type) targets y.

        X: list of FlowFeatureSequence, or an (n, max_flows, feature_dim)
        array with an optional (n, max_flows) boolean mask.
        """
        records = self._make_records(X, y, mask)
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(records))
        n_val = int(round(self.val_fraction * len(records)))
        n_val = min(n_val, len(records) - 1)
        val_records = [records[i] for i in order[:n_val]]
        train_records = [records[i] for i in order[n_val:]]
        with tempfile.TemporaryDirectory(prefix="trafficap-fit-") as tmp:
            result = train(train_records, val_records, self.run_config(), tmp)
            from .checkpoint import load_checkpoint

            model, _, vocab, scaler, _ = load_checkpoint(tmp)
        self.model_ = model
        self.vocab_ = vocab
        self.scaler_ = scaler
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def _inference_records(self, X, mask=None) -> list[DatasetRecord]:
        features, mask_arr = as_feature_batch(X, mask, feature_dim=self.feature_dim)
        dummy = np.zeros(1, dtype=np.float32)
        return [
            DatasetRecord(
                segment_id=f"query-{i:06d}",
                features=features[i],
                mask=mask_arr[i],
                caption="",
                app_type=0,
                caption_embedding=dummy,
                embedder_id="none",
            )
            for i in range(features.shape[0])
        ]

    def predict(self, X, mask=None) -> list[str]:
        """Greedy-decoded caption strings, one per input sequence."""
        self._require_fitted()
        captions, _ = predict_records(
            self.model_,
            self._inference_records(X, mask),
            self.vocab_,
            self.scaler_,
            batch_size=self.batch_size,
            max_len=self.max_caption_len,
        )
        return captions

    def predict_app_type(self, X, mask=None) -> np.ndarray:
        self._require_fitted()
        _, app = predict_records(
            self.model_,
            self._inference_records(X, mask),
            self.vocab_,
            self.scaler_,
            batch_size=self.batch_size,
            max_len=1,
        )
        return app

    def score(self, X, y, mask=None) -> float:
        """Corpus CIDEr of predictions against the reference captions in y."""
        self._require_fitted()
        targets = check_caption_targets(y, self.app_type_count)
        predicted = self.predict(X, mask)
        scores = score_predictions(predicted, [caption for caption, _ in targets])
        return scores.get("cider", scores["bleu4"])
