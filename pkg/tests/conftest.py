import numpy as np
import pytest
import torch

from trafficap.config import EncoderConfig


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)


@pytest.fixture
def small_config() -> EncoderConfig:
    """Tiny dims so forward/backward passes stay fast in unit tests."""
    return EncoderConfig(
        feature_dim=12,
        hidden_dim=16,
        pattern_dim=8,
        type_embed_dim=6,
        app_type_count=3,
        prototypes_per_type=4,
        max_flows=7,
        encoder_layers=1,
        attention_heads=2,
        dropout=0.0,
    )


@pytest.fixture
def random_sequence_batch():
    def make(config: EncoderConfig, batch: int = 3, seed: int = 0, min_real: int = 1):
        rng = np.random.default_rng(seed)
        features = rng.normal(size=(batch, config.max_flows, config.feature_dim))
        mask = np.zeros((batch, config.max_flows), dtype=bool)
        for row in range(batch):
            real = rng.integers(min_real, config.max_flows + 1)
            mask[row, :real] = True
        features[~mask] = 0.0
        return (
            torch.from_numpy(features.astype(np.float32)),
            torch.from_numpy(mask),
        )

    return make
