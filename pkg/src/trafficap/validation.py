"""Input validation helpers shared by the estimator, model, and pipeline."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .features import FlowFeatureSequence, _as_batch


def validate_feature_sequence(
    seq: FlowFeatureSequence,
    feature_dim: int | None = None,
    max_flows: int | None = None,
) -> None:
    """Raise if the sequence violates its shape/mask/padding invariants."""
    features, mask = seq.features, seq.mask
    if features.ndim != 2:
        raise ShapeMismatch(f"features must be 2-D, got {features.ndim}-D")
    if mask.shape != (features.shape[0],):
        raise ShapeMismatch("mask length must equal the flow-row count")
    if feature_dim is not None and features.shape[1] != feature_dim:
        raise ShapeMismatch(
            f"expected {feature_dim} features per flow, got {features.shape[1]}"
        )
    if max_flows is not None and features.shape[0] != max_flows:
        raise ShapeMismatch(
            f"expected {max_flows} flow rows, got {features.shape[0]}"
        )
    if not np.isfinite(features).all():
        raise ValueError(f"{seq.segment_id}: non-finite feature values")
    if features[~mask].any():
        raise ValueError(f"{seq.segment_id}: padding rows must be all-zero")


def as_feature_batch(X, mask=None, feature_dim: int | None = None):
    """Coerce estimator input to (N, S, D) float and (N, S) bool arrays."""
    features, mask_arr = _as_batch(X, mask)
    if feature_dim is not None and features.shape[2] != feature_dim:
        raise ShapeMismatch(
            f"expected {feature_dim} features per flow, got {features.shape[2]}"
        )
    if mask_arr.shape != features.shape[:2]:
        raise ShapeMismatch("mask shape must match (n_samples, n_flows)")
    return features.astype(np.float32), mask_arr


def check_probability_vector(p: np.ndarray, tol: float = 1e-6) -> None:
    p = np.asarray(p, dtype=np.float64)
    if (p < -tol).any():
        raise ValueError("probability entries must be non-negative")
    if abs(float(p.sum()) - 1.0) > tol:
        raise ValueError(f"probabilities sum to {float(p.sum())}, not 1")


def check_caption_targets(y, n_types: int) -> list[tuple[str, int]]:
    """Normalize y into (caption, app_type) pairs and range-check labels."""
    pairs = []
    for item in y:
        if isinstance(item, dict):
            caption, app_type = item["caption"], int(item["app_type"])
        else:
            caption, app_type = item[0], int(item[1])
        if not isinstance(caption, str) or not caption.strip():
            raise ValueError("every target needs a non-empty caption string")
        if not 0 <= app_type < n_types:
            raise ValueError(f"app_type {app_type} outside 0..{n_types - 1}")
        pairs.append((caption, app_type))
    return pairs
