"""Per-flow feature vectors, segment windows, and feature normalization.

The 123-value schema is documented field-by-field in FEATURES.md; its
composition is versioned there and frozen by tests. Statistics over empty
directional sub-series are 0 by convention, as are ratios and rates with a
zero denominator, so every emitted value is finite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import EmptyFlowInWindow, InvalidConfig
from .flows import Flow, Protocol

FEATURE_DIM = 123
MAX_FLOWS = 50
SEGMENT_SECS = 15.0
BURST_GAP_SECS = 0.1
FEATURE_SCHEMA_VERSION = "1"

_DECILES = np.linspace(0.1, 1.0, 10)
_LENGTH_STAT_NAMES = (
    ["min", "max", "mean", "std", "var", "mad", "sum"]
    + [f"q{int(q * 100)}" for q in _DECILES]
)
_IAT_STAT_NAMES = ["min", "max", "mean", "std", "var", "median", "q25", "q75", "sum"]
_VOLUME_NAMES = ["pkts", "bytes", "pkt_rate", "byte_rate"]
_BURST_NAMES = ["count", "mean_size", "max_size", "mean_duration"]
_FLAG_NAMES = ["syn", "fin", "rst", "psh", "ack", "urg"]
_FLAG_BITS = {"fin": 0x01, "syn": 0x02, "rst": 0x04, "psh": 0x08, "ack": 0x10, "urg": 0x20}


def _build_feature_names() -> list[str]:
    names = ["proto_tcp", "proto_udp", "proto_other"]
    names += ["port_class_initiator", "port_class_responder"]
    names += ["duration", "start_offset"]
    for scope in ("up", "down", "both"):
        names += [f"len_{scope}_{s}" for s in _LENGTH_STAT_NAMES]
    for scope in ("up", "down", "both"):
        names += [f"iat_{scope}_{s}" for s in _IAT_STAT_NAMES]
    for scope in ("up", "down", "both"):
        names += [f"vol_{scope}_{s}" for s in _VOLUME_NAMES]
    names += ["ratio_pkts_up_down", "ratio_bytes_up_down"]
    for scope in ("up", "down"):
        names += [f"burst_{scope}_{s}" for s in _BURST_NAMES]
    names += [f"flags_{s}" for s in _FLAG_NAMES]
    names += [f"signed_size_{i}" for i in range(10)]
    return names


FEATURE_NAMES = _build_feature_names()
assert len(FEATURE_NAMES) == FEATURE_DIM


@dataclass
class FlowFeatureSequence:
    """Model input: up to S real flows as rows of a fixed S x D matrix.

    Rows with mask False are padding and stay all-zero; real rows are ordered
    by flow start time.
    """

    features: np.ndarray
    mask: np.ndarray
    segment_start: float
    segment_id: str

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def n_flows(self) -> int:
        return int(self.mask.sum())

    def to_json_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "segment_start": self.segment_start,
            "mask": self.mask.tolist(),
            "features": self.features.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "FlowFeatureSequence":
        return cls(
            features=np.asarray(obj["features"], dtype=np.float32),
            mask=np.asarray(obj["mask"], dtype=bool),
            segment_start=float(obj["segment_start"]),
            segment_id=str(obj["segment_id"]),
        )


def _port_class(port: int) -> float:
    if port < 1024:
        return 0.0
    if port < 49152:
        return 0.5
    return 1.0


def _length_stats(lengths: np.ndarray) -> list[float]:
    if lengths.size == 0:
        return [0.0] * len(_LENGTH_STAT_NAMES)
    median = float(np.median(lengths))
    return [
        float(lengths.min()),
        float(lengths.max()),
        float(lengths.mean()),
        float(lengths.std()),
        float(lengths.var()),
        float(np.median(np.abs(lengths - median))),
        float(lengths.sum()),
        *[float(v) for v in np.quantile(lengths, _DECILES)],
    ]


def _iat_stats(times: np.ndarray) -> list[float]:
    if times.size < 2:
        return [0.0] * len(_IAT_STAT_NAMES)
    gaps = np.diff(times)
    return [
        float(gaps.min()),
        float(gaps.max()),
        float(gaps.mean()),
        float(gaps.std()),
        float(gaps.var()),
        float(np.median(gaps)),
        float(np.quantile(gaps, 0.25)),
        float(np.quantile(gaps, 0.75)),
        float(gaps.sum()),
    ]


def _volume_stats(lengths: np.ndarray, duration: float) -> list[float]:
    pkts = float(lengths.size)
    total = float(lengths.sum()) if lengths.size else 0.0
    rate_p = pkts / duration if duration > 0 else 0.0
    rate_b = total / duration if duration > 0 else 0.0
    return [pkts, total, rate_p, rate_b]


def _burst_stats(packets: list[tuple[float, bool]], want_up: bool) -> list[float]:
    """Bursts: maximal runs of same-direction packets with gaps < 0.1 s."""
    runs: list[tuple[int, float]] = []
    run_len = 0
    run_start = 0.0
    prev_ts = 0.0
    prev_up: bool | None = None
    for ts, is_up in packets:
        if is_up == prev_up and ts - prev_ts < BURST_GAP_SECS:
            run_len += 1
        else:
            if prev_up is not None and prev_up == want_up:
                runs.append((run_len, prev_ts - run_start))
            run_len = 1
            run_start = ts
        prev_ts = ts
        prev_up = is_up
    if prev_up is not None and prev_up == want_up:
        runs.append((run_len, prev_ts - run_start))
    if not runs:
        return [0.0, 0.0, 0.0, 0.0]
    sizes = np.array([r[0] for r in runs], dtype=np.float64)
    durations = np.array([r[1] for r in runs], dtype=np.float64)
    return [
        float(len(runs)),
        float(sizes.mean()),
        float(sizes.max()),
        float(durations.mean()),
    ]


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def featurize_flow(flow: Flow, window: tuple[float, float]) -> np.ndarray:
    """123-value feature vector of the flow restricted to the window."""
    lo, hi = window
    up = [p for p in flow.packets_up if lo <= p.timestamp < hi]
    down = [p for p in flow.packets_down if lo <= p.timestamp < hi]
    merged = sorted(up + down, key=lambda p: p.timestamp)
    if not merged:
        raise EmptyFlowInWindow(
            f"flow {flow.key} has no packets in [{lo}, {hi})"
        )

    up_len = np.array([p.length for p in up], dtype=np.float64)
    down_len = np.array([p.length for p in down], dtype=np.float64)
    both_len = np.array([p.length for p in merged], dtype=np.float64)
    up_ts = np.array(sorted(p.timestamp for p in up), dtype=np.float64)
    down_ts = np.array(sorted(p.timestamp for p in down), dtype=np.float64)
    both_ts = np.array([p.timestamp for p in merged], dtype=np.float64)

    protocol = flow.key[2]
    duration = float(both_ts[-1] - both_ts[0])
    initiator_port = flow.initiator[1]
    responder = flow.key[0] if flow.key[0] != flow.initiator else flow.key[1]

    values: list[float] = [
        1.0 if protocol == Protocol.TCP else 0.0,
        1.0 if protocol == Protocol.UDP else 0.0,
        1.0 if protocol == Protocol.OTHER else 0.0,
        _port_class(initiator_port),
        _port_class(responder[1]),
        duration,
        float(both_ts[0] - lo),
    ]
    for lengths in (up_len, down_len, both_len):
        values += _length_stats(lengths)
    for times in (up_ts, down_ts, both_ts):
        values += _iat_stats(times)
    for lengths in (up_len, down_len, both_len):
        values += _volume_stats(lengths, duration)
    values += [
        _ratio(float(up_len.size), float(down_len.size)),
        _ratio(float(up_len.sum()) if up_len.size else 0.0,
               float(down_len.sum()) if down_len.size else 0.0),
    ]
    up_set = {id(p) for p in up}
    direction_seq = [(p.timestamp, id(p) in up_set) for p in merged]
    values += _burst_stats(direction_seq, want_up=True)
    values += _burst_stats(direction_seq, want_up=False)
    for name in _FLAG_NAMES:
        bit = _FLAG_BITS[name]
        values.append(float(sum(1 for p in merged if p.tcp_flags & bit)))
    signed = [
        float(p.length) if id(p) in up_set else -float(p.length)
        for p in merged[:10]
    ]
    values += signed + [0.0] * (10 - len(signed))

    vector = np.asarray(values, dtype=np.float64)
    assert vector.shape == (FEATURE_DIM,)
    return vector


def sequence_from_flows(
    flows: list[Flow],
    window: tuple[float, float],
    max_flows: int,
    segment_id: str,
) -> FlowFeatureSequence:
    """Sort flows by start time, keep the earliest max_flows, pad the rest."""
    ordered = sorted(flows, key=lambda f: f.start_time)[:max_flows]
    features = np.zeros((max_flows, FEATURE_DIM), dtype=np.float32)
    mask = np.zeros(max_flows, dtype=bool)
    for row, flow in enumerate(ordered):
        features[row] = featurize_flow(flow, window).astype(np.float32)
        mask[row] = True
    return FlowFeatureSequence(
        features=features,
        mask=mask,
        segment_start=window[0],
        segment_id=segment_id,
    )


def segment_flows(
    flows: list[Flow],
    segment_secs: float = SEGMENT_SECS,
    max_flows: int = MAX_FLOWS,
) -> list[FlowFeatureSequence]:
    """Cut the capture into consecutive windows and featurize each.

    Windows are aligned to the earliest flow start; each flow lands in the
    window containing its start time and its packets outside that window are
    ignored for feature purposes. Windows without flows are dropped.
    """
    if segment_secs <= 0:
        raise InvalidConfig("segment_secs must be positive")
    if max_flows <= 0:
        raise InvalidConfig("max_flows must be positive")
    if not flows:
        return []
    t0 = min(flow.start_time for flow in flows)
    by_window: dict[int, list[Flow]] = {}
    for flow in flows:
        idx = int((flow.start_time - t0) // segment_secs)
        by_window.setdefault(idx, []).append(flow)
    sequences = []
    for idx in sorted(by_window):
        lo = t0 + idx * segment_secs
        sequences.append(
            sequence_from_flows(
                by_window[idx],
                window=(lo, lo + segment_secs),
                max_flows=max_flows,
                segment_id=f"seg-{idx:06d}",
            )
        )
    return sequences


def write_segments_jsonl(sequences: list[FlowFeatureSequence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(json.dumps(seq.to_json_dict()) + "\n")


def read_segments_jsonl(path: str | Path) -> list[FlowFeatureSequence]:
    sequences = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                sequences.append(FlowFeatureSequence.from_json_dict(json.loads(line)))
    return sequences


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Per-feature z-score over real (unmasked) flow rows.

    Statistics come from the training set and travel with the checkpoint;
    transform re-zeroes padding rows so sequence invariants keep holding.
    """

    def __init__(self, eps: float = 1e-8):
        self.eps = eps

    def fit(self, X, y=None, mask=None):
        rows = _stack_real_rows(X, mask)
        if rows.size == 0:
            raise ValueError("cannot fit scaler on zero real rows")
        self.mean_ = rows.mean(axis=0).astype(np.float32)
        std = rows.std(axis=0)
        self.scale_ = np.maximum(std, self.eps).astype(np.float32)
        return self

    def transform(self, X, mask=None):
        features, mask_arr = _as_batch(X, mask)
        scaled = (features - self.mean_) / self.scale_
        scaled[~mask_arr] = 0.0
        return scaled.astype(np.float32)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mean_, self.scale_

    @classmethod
    def from_arrays(cls, mean: np.ndarray, scale: np.ndarray) -> "FeatureScaler":
        scaler = cls()
        scaler.mean_ = np.asarray(mean, dtype=np.float32)
        scaler.scale_ = np.asarray(scale, dtype=np.float32)
        return scaler


def _as_batch(X, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Accept list[FlowFeatureSequence] or (N,S,D) array with (N,S) mask."""
    if isinstance(X, FlowFeatureSequence):
        X = [X]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], FlowFeatureSequence):
        features = np.stack([seq.features for seq in X]).astype(np.float64)
        mask_arr = np.stack([seq.mask for seq in X])
        return features, mask_arr
    features = np.asarray(X, dtype=np.float64)
    if features.ndim == 2:
        features = features[None]
    if mask is None:
        mask_arr = np.abs(features).sum(axis=2) > 0
    else:
        mask_arr = np.asarray(mask, dtype=bool)
        if mask_arr.ndim == 1:
            mask_arr = mask_arr[None]
    return features, mask_arr


def _stack_real_rows(X, mask=None) -> np.ndarray:
    features, mask_arr = _as_batch(X, mask)
    return features[mask_arr]
