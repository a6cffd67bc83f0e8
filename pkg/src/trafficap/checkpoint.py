"""Checkpoint format: manifest.json + raw little-endian float32 tensor blobs.

Layout of a checkpoint directory:

    manifest.json        all metadata: config, blob index, vocab hash,
                         embedder id, epoch, metric history
    vocab.json           ordered token list
    weights/<name>.bin   one blob per state-dict entry and scaler array,
                         little-endian float32, row-major

Reloading reconstructs the model from the manifest config and must
reproduce eval-mode outputs bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .features import FeatureScaler
from .model import TrafficCaptionModel
from .vocab import Vocabulary

FORMAT_VERSION = 1


def _vocab_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256(vocab.to_json().encode("utf-8")).hexdigest()


def save_checkpoint(
    out_dir: str | Path,
    model: TrafficCaptionModel,
    run_config: RunConfig,
    vocab: Vocabulary,
    scaler: FeatureScaler,
    embedder_id: str,
    epoch: int,
    metric_history: list[dict],
) -> Path:
    out = Path(out_dir)
    weights_dir = out / "weights"
    weights_dir.mkdir(parents=True, exist_ok=True)

    arrays: dict[str, np.ndarray] = {
        name: tensor.detach().cpu().numpy()
        for name, tensor in model.state_dict().items()
    }
    mean, scale = scaler.to_arrays()
    arrays["scaler.mean"] = mean
    arrays["scaler.scale"] = scale

    blobs = []
    for name, array in arrays.items():
        raw = np.ascontiguousarray(array, dtype="<f4").tobytes()
        (weights_dir / f"{name}.bin").write_bytes(raw)
        blobs.append(
            {
                "name": name,
                "shape": list(array.shape),
                "dtype": "float32-le",
                "file": f"weights/{name}.bin",
                "byte_length": len(raw),
            }
        )

    vocab.save(out / "vocab.json")
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": run_config.to_flat_dict(),
        "vocab_size": len(vocab),
        "vocab_sha256": _vocab_hash(vocab),
        "caption_embed_dim": model.caption_embed_dim,
        "embedder_id": embedder_id,
        "epoch": epoch,
        "metric_history": metric_history,
        "blobs": blobs,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return out


def load_checkpoint(
    path: str | Path,
) -> tuple[TrafficCaptionModel, RunConfig, Vocabulary, FeatureScaler, dict]:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    run_config = RunConfig.from_flat_dict(manifest["config"])
    vocab = Vocabulary.load(root / "vocab.json")
    if _vocab_hash(vocab) != manifest["vocab_sha256"]:
        raise ValueError(f"{root}: vocab.json does not match the manifest hash")

    arrays: dict[str, np.ndarray] = {}
    for blob in manifest["blobs"]:
        raw = (root / blob["file"]).read_bytes()
        if len(raw) != blob["byte_length"]:
            raise ValueError(f"{blob['file']}: byte length mismatch")
        arrays[blob["name"]] = np.frombuffer(raw, dtype="<f4").reshape(blob["shape"]).copy()

    scaler = FeatureScaler.from_arrays(arrays.pop("scaler.mean"), arrays.pop("scaler.scale"))
    model = TrafficCaptionModel(
        run_config.encoder,
        vocab_size=manifest["vocab_size"],
        caption_embed_dim=manifest["caption_embed_dim"],
    )
    state = {name: torch.from_numpy(array) for name, array in arrays.items()}
    model.load_state_dict(state, strict=True)
    model.eval()
    return model, run_config, vocab, scaler, manifest
