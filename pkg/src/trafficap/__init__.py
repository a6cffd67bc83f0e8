"""trafficap: caption smartphone activity from encrypted network traffic."""

from .annotate import CaptionRecord, align_by_timestamp, annotate_clips
from .config import APP_TYPE_LABELS, EncoderConfig, LossWeights, RunConfig, TrainConfig
from .dataset import DatasetRecord, build_dataset, read_records_jsonl, write_records_jsonl
from .decoder import CaptionDecoder, DecoderState, render_caption
from .embeddings import HashedNGramEmbedder, embed_sentence, get_embedder
from .encoder import EncodedTraffic, FlowFeatureEncoder
from .estimator import TrafficCaptioner
from .features import (
    FEATURE_DIM,
    FEATURE_NAMES,
    FeatureScaler,
    FlowFeatureSequence,
    featurize_flow,
    segment_flows,
)
from .flows import Flow, PacketRecord, Protocol, assemble_flows
from .metrics import EvalCorpus, ScoreReport, bleu4, cider, meteor, rouge_l, score_corpus
from .model import TrafficCaptionModel
from .pcap import parse_pcap, parse_pcap_with_stats
from .synth import DEFAULT_PROFILES, AppProfile, SynthSample, generate, separability_report
from .training import train
from .vocab import Vocabulary, tokenize

__version__ = "0.1.0"

__all__ = [
    "APP_TYPE_LABELS",
    "AppProfile",
    "CaptionDecoder",
    "CaptionRecord",
    "DatasetRecord",
    "DecoderState",
    "DEFAULT_PROFILES",
    "EncodedTraffic",
    "EncoderConfig",
    "EvalCorpus",
    "FEATURE_DIM",
    "FEATURE_NAMES",
    "FeatureScaler",
    "Flow",
    "FlowFeatureEncoder",
    "FlowFeatureSequence",
    "HashedNGramEmbedder",
    "LossWeights",
    "PacketRecord",
    "Protocol",
    "RunConfig",
    "ScoreReport",
    "SynthSample",
    "TrafficCaptionModel",
    "TrafficCaptioner",
    "TrainConfig",
    "Vocabulary",
    "align_by_timestamp",
    "annotate_clips",
    "assemble_flows",
    "bleu4",
    "build_dataset",
    "cider",
    "embed_sentence",
    "featurize_flow",
    "generate",
    "get_embedder",
    "meteor",
    "parse_pcap",
    "parse_pcap_with_stats",
    "read_records_jsonl",
    "render_caption",
    "rouge_l",
    "score_corpus",
    "segment_flows",
    "separability_report",
    "tokenize",
    "train",
    "write_records_jsonl",
]
