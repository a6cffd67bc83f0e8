"""Synthetic traffic-caption pairs with controllable type separability.

Each sample draws an intensity latent that scales the profile's flow and
packet statistics and simultaneously picks the caption template and its
verb/noun slots, so the caption stays predictable from the traffic. Raw
packets are synthesized per flow and run through the same featurizer as the
PCAP pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetRecord
from .embeddings import get_embedder
from .errors import InvalidProfile, TooFewTypes
from .features import (
    MAX_FLOWS,
    SEGMENT_SECS,
    FlowFeatureSequence,
    sequence_from_flows,
)
from .flows import Flow, PacketRecord, Protocol

_FLAG_SYN = 0x02
_FLAG_ACK = 0x10
_FLAG_PSH = 0x08


@dataclass
class AppProfile:
    app_type: int
    name: str
    flows_range: tuple[int, int]
    up_packets_range: tuple[int, int]
    down_packets_range: tuple[int, int]
    up_size_log_mean: float
    up_size_log_sigma: float
    down_size_log_mean: float
    down_size_log_sigma: float
    burstiness: float
    tcp_fraction: float
    caption_templates: tuple[str, ...]
    verbs: tuple[str, ...]
    nouns: tuple[str, ...]

    def validate(self) -> None:
        if len(self.caption_templates) < 3:
            raise InvalidProfile(f"{self.name}: need at least 3 caption templates")
        if len(self.verbs) < len(self.caption_templates) or len(self.nouns) < len(
            self.caption_templates
        ):
            raise InvalidProfile(f"{self.name}: need one verb/noun per template")
        if self.up_size_log_sigma <= 0 or self.down_size_log_sigma <= 0:
            raise InvalidProfile(f"{self.name}: size sigmas must be positive")
        if not 0.0 <= self.burstiness <= 1.0 or not 0.0 <= self.tcp_fraction <= 1.0:
            raise InvalidProfile(f"{self.name}: burstiness/tcp_fraction must be in [0,1]")
        for lo, hi in (self.flows_range, self.up_packets_range, self.down_packets_range):
            if lo < 0 or hi < lo:
                raise InvalidProfile(f"{self.name}: ranges must satisfy 0 <= lo <= hi")

    def vocabulary(self) -> set[str]:
        tokens: set[str] = set()
        for template in self.caption_templates:
            rendered = template.format(verb="", noun="")
            tokens.update(rendered.split())
        tokens.update(self.verbs)
        tokens.update(self.nouns)
        return tokens


@dataclass
class SynthSample:
    sequence: FlowFeatureSequence
    caption: str
    app_type: int
    root_seed: int
    sample_index: int


DEFAULT_PROFILES: tuple[AppProfile, ...] = (
    AppProfile(
        app_type=0,
        name="music",
        flows_range=(3, 8),
        up_packets_range=(2, 6),
        down_packets_range=(20, 60),
        up_size_log_mean=math.log(120.0),
        up_size_log_sigma=0.30,
        down_size_log_mean=math.log(900.0),
        down_size_log_sigma=0.35,
        burstiness=0.25,
        tcp_fraction=0.9,
        caption_templates=(
            "the user {verb} a {noun} inside the music player",
            "the user {verb} some {noun} as audio streams quietly",
            "the user {verb} every {noun} from a saved album",
            "the user {verb} the {noun} during loud playback",
            "the user {verb} a long {noun} of favorite tunes",
        ),
        verbs=("queues", "plays", "shuffles", "repeats", "downloads"),
        nouns=("melody", "playlist", "mixtape", "chorus", "discography"),
    ),
    AppProfile(
        app_type=1,
        name="video",
        flows_range=(6, 16),
        up_packets_range=(4, 10),
        down_packets_range=(80, 240),
        up_size_log_mean=math.log(130.0),
        up_size_log_sigma=0.30,
        down_size_log_mean=math.log(1250.0),
        down_size_log_sigma=0.20,
        burstiness=0.85,
        tcp_fraction=0.35,
        caption_templates=(
            "the user {verb} a {noun} in fullscreen mode",
            "the user {verb} the next {noun} while the video buffers",
            "the user {verb} one {noun} after another on the watch page",
            "the user {verb} a {noun} at higher resolution",
            "the user {verb} an entire {noun} without pausing",
        ),
        verbs=("previews", "watches", "binges", "streams", "replays"),
        nouns=("trailer", "episode", "documentary", "season", "broadcast"),
    ),
    AppProfile(
        app_type=2,
        name="shopping",
        flows_range=(12, 30),
        up_packets_range=(4, 12),
        down_packets_range=(6, 18),
        up_size_log_mean=math.log(350.0),
        up_size_log_sigma=0.45,
        down_size_log_mean=math.log(700.0),
        down_size_log_sigma=0.50,
        burstiness=0.5,
        tcp_fraction=0.95,
        caption_templates=(
            "the user {verb} a {noun} and checks its price",
            "the user {verb} several {noun} listings before checkout",
            "the user {verb} each {noun} into the shopping cart",
            "the user {verb} a discounted {noun} from the storefront",
            "the user {verb} many {noun} pages hunting for deals",
        ),
        verbs=("browses", "compares", "adds", "orders", "refreshes"),
        nouns=("product", "gadget", "bundle", "coupon", "catalog"),
    ),
    AppProfile(
        app_type=3,
        name="messaging",
        flows_range=(1, 4),
        up_packets_range=(1, 5),
        down_packets_range=(1, 5),
        up_size_log_mean=math.log(110.0),
        up_size_log_sigma=0.25,
        down_size_log_mean=math.log(160.0),
        down_size_log_sigma=0.30,
        burstiness=0.1,
        tcp_fraction=0.8,
        caption_templates=(
            "the user {verb} a {noun} to a close contact",
            "the user {verb} quick {noun} replies during a chat",
            "the user {verb} long {noun} threads with friends",
            "the user {verb} a group {noun} late at night",
            "the user {verb} voice {noun} clips back and forth",
        ),
        verbs=("sends", "types", "exchanges", "forwards", "dictates"),
        nouns=("message", "text", "emoji", "conversation", "memo"),
    ),
    AppProfile(
        app_type=4,
        name="social media",
        flows_range=(8, 20),
        up_packets_range=(3, 9),
        down_packets_range=(25, 80),
        up_size_log_mean=math.log(240.0),
        up_size_log_sigma=0.40,
        down_size_log_mean=math.log(1000.0),
        down_size_log_sigma=0.30,
        burstiness=0.7,
        tcp_fraction=0.6,
        caption_templates=(
            "the user {verb} a {noun} on the social feed",
            "the user {verb} trending {noun} posts while scrolling",
            "the user {verb} viral {noun} stories from creators",
            "the user {verb} a {noun} shared by followers",
            "the user {verb} every {noun} in the timeline",
        ),
        verbs=("likes", "shares", "reposts", "bookmarks", "upvotes"),
        nouns=("photo", "meme", "reel", "snapshot", "collage"),
    ),
)


def _lerp(bounds: tuple[int, int], u: float) -> float:
    return bounds[0] + (bounds[1] - bounds[0]) * u


def _synth_flow(
    profile: AppProfile, rng: np.random.Generator, intensity: float, flow_idx: int
) -> Flow:
    start = float(rng.uniform(0.0, SEGMENT_SECS * 0.9))
    n_up = max(1, int(round(_lerp(profile.up_packets_range, intensity) * rng.uniform(0.7, 1.3))))
    n_down = max(0, int(round(_lerp(profile.down_packets_range, intensity) * rng.uniform(0.7, 1.3))))
    protocol = Protocol.TCP if rng.uniform() < profile.tcp_fraction else Protocol.UDP

    src = ("10.0.0.2", int(49152 + rng.integers(0, 16000)))
    dst = (f"172.16.{profile.app_type}.{flow_idx % 250 + 1}", 443)

    def timestamps(count: int, offset: float) -> np.ndarray:
        bursty = rng.uniform(size=count) < profile.burstiness
        gaps = np.where(
            bursty, rng.exponential(0.004, size=count), rng.exponential(0.35, size=count)
        )
        ts = start + offset + np.cumsum(gaps)
        return np.minimum(ts, SEGMENT_SECS - 1e-4)

    def sizes(count: int, log_mean: float, log_sigma: float) -> np.ndarray:
        raw = rng.lognormal(log_mean, log_sigma, size=count)
        return np.clip(raw, 40, 1500).astype(int)

    up_ts = timestamps(n_up, 0.0)
    up_ts[0] = min(start, float(up_ts[0]))
    up_sizes = sizes(n_up, profile.up_size_log_mean, profile.up_size_log_sigma)
    packets_up = []
    for i in range(n_up):
        flags = 0
        if protocol == Protocol.TCP:
            flags = _FLAG_SYN if i == 0 else _FLAG_ACK
            if i > 0 and i % 3 == 0:
                flags |= _FLAG_PSH
        packets_up.append(
            PacketRecord(
                timestamp=float(up_ts[i]),
                src_addr=src[0], dst_addr=dst[0],
                src_port=src[1], dst_port=dst[1],
                protocol=protocol,
                length=int(up_sizes[i]),
                tcp_flags=flags,
            )
        )

    packets_down = []
    if n_down:
        down_ts = timestamps(n_down, float(rng.exponential(0.01)))
        down_sizes = sizes(n_down, profile.down_size_log_mean, profile.down_size_log_sigma)
        for i in range(n_down):
            flags = _FLAG_ACK if protocol == Protocol.TCP else 0
            packets_down.append(
                PacketRecord(
                    timestamp=float(down_ts[i]),
                    src_addr=dst[0], dst_addr=src[0],
                    src_port=dst[1], dst_port=src[1],
                    protocol=protocol,
                    length=int(down_sizes[i]),
                    tcp_flags=flags,
                )
            )

    key = ((src[0], src[1]), (dst[0], dst[1]), protocol)
    if (dst[0], dst[1]) < (src[0], src[1]):
        key = ((dst[0], dst[1]), (src[0], src[1]), protocol)
    all_ts = [p.timestamp for p in packets_up + packets_down]
    return Flow(
        key=key,
        start_time=min(all_ts),
        packets_up=packets_up,
        packets_down=packets_down,
        initiator=src,
    )


def generate(
    profiles: tuple[AppProfile, ...] = DEFAULT_PROFILES,
    n_per_type: int = 10,
    seed: int = 0,
) -> list[SynthSample]:
    """Balanced seeded samples: n_per_type per profile, featurized through
    the shared flow featurizer."""
    if n_per_type < 1:
        raise ValueError("n_per_type must be >= 1")
    for profile in profiles:
        profile.validate()
    samples: list[SynthSample] = []
    for profile in profiles:
        n_buckets = len(profile.caption_templates)
        for i in range(n_per_type):
            rng = np.random.default_rng([seed, profile.app_type, i])
            intensity = float(rng.uniform())
            bucket = min(n_buckets - 1, int(intensity * n_buckets))
            n_flows = max(1, int(round(_lerp(profile.flows_range, intensity))))
            flows = [
                _synth_flow(profile, rng, intensity, flow_idx)
                for flow_idx in range(n_flows)
            ]
            sequence = sequence_from_flows(
                flows,
                window=(0.0, SEGMENT_SECS),
                max_flows=MAX_FLOWS,
                segment_id=f"synth-{profile.name.replace(' ', '-')}-{seed}-{i:05d}",
            )
            caption = profile.caption_templates[bucket].format(
                verb=profile.verbs[bucket], noun=profile.nouns[bucket]
            )
            samples.append(
                SynthSample(
                    sequence=sequence,
                    caption=caption,
                    app_type=profile.app_type,
                    root_seed=seed,
                    sample_index=i,
                )
            )
    return samples


def to_records(samples: list[SynthSample], embedder=None) -> list[DatasetRecord]:
    embedder = embedder or get_embedder("hashed")
    return [
        DatasetRecord(
            segment_id=s.sequence.segment_id,
            features=s.sequence.features,
            mask=s.sequence.mask,
            caption=s.caption,
            app_type=s.app_type,
            caption_embedding=embedder.embed(s.caption),
            embedder_id=embedder.embedder_id,
        )
        for s in samples
    ]


def separability_report(samples: list[SynthSample], folds: int = 5, seed: int = 0) -> float:
    """Nearest-centroid accuracy on z-scored pooled features, k-fold mean.

    Used to calibrate profiles: the dataset should be learnable (>= 0.9)
    without being trivial.
    """
    labels = np.array([s.app_type for s in samples])
    if len(set(labels.tolist())) < 2:
        raise TooFewTypes("separability needs samples from at least 2 app types")
    pooled = np.stack(
        [
            s.sequence.features[s.sequence.mask].mean(axis=0)
            for s in samples
        ]
    )
    order = np.random.default_rng(seed).permutation(len(samples))
    fold_indices = np.array_split(order, folds)
    accuracies = []
    for held_out in fold_indices:
        if held_out.size == 0:
            continue
        train_idx = np.setdiff1d(order, held_out)
        mean = pooled[train_idx].mean(axis=0)
        std = np.maximum(pooled[train_idx].std(axis=0), 1e-8)
        z_train = (pooled[train_idx] - mean) / std
        z_test = (pooled[held_out] - mean) / std
        classes = np.unique(labels[train_idx])
        centroids = np.stack(
            [z_train[labels[train_idx] == c].mean(axis=0) for c in classes]
        )
        distances = np.linalg.norm(z_test[:, None, :] - centroids[None], axis=2)
        predicted = classes[distances.argmin(axis=1)]
        accuracies.append(float((predicted == labels[held_out]).mean()))
    return float(np.mean(accuracies))
