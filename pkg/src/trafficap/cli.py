"""Command-line entry point.

Commands: extract, annotate, dataset, synth, train, caption, evaluate.
Exit codes: 0 success, 1 missing/invalid artifact, 2 bad configuration,
3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import annotate as annotate_mod
from . import dataset as dataset_mod
from . import synth as synth_mod
from .checkpoint import load_checkpoint
from .config import RunConfig
from .errors import (
    InvalidConfig,
    InvalidSplit,
    MalformedPcap,
    NonFiniteLoss,
    ProviderAuthError,
    ShapeMismatch,
)
from .features import read_segments_jsonl, segment_flows, write_segments_jsonl
from .flows import assemble_flows
from .metrics import EvalCorpus, score_corpus
from .pcap import parse_pcap_with_stats
from .training import predict_records, train
from .vocab import tokenize

logger = logging.getLogger("trafficap")

EXIT_OK = 0
EXIT_ARTIFACT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_run_config(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    config = RunConfig.from_flat_dict(overrides)
    return config


def cmd_extract(args) -> int:
    records, stats = parse_pcap_with_stats(args.pcap)
    flows = assemble_flows(records)
    sequences = segment_flows(
        flows, segment_secs=args.segment_secs, max_flows=args.max_flows
    )
    write_segments_jsonl(sequences, args.out)
    print(
        f"packets={stats.packets} flows={len(flows)} "
        f"segments={len(sequences)} dropped={stats.skipped}"
    )
    return EXIT_OK


def cmd_annotate(args) -> int:
    prompt = annotate_mod.PROMPT_V1
    if args.prompt_file:
        prompt = Path(args.prompt_file).read_text(encoding="utf-8")
    provider = args.provider
    if provider == "vlm":
        if not os.environ.get(annotate_mod.API_KEY_ENV, ""):
            raise ProviderAuthError(
                f"set {annotate_mod.API_KEY_ENV} to use the vlm provider"
            )
        provider = annotate_mod.VlmProvider(
            endpoint=args.vlm_endpoint,
            model=args.vlm_model,
            timeout=args.vlm_timeout,
        )
    records = annotate_mod.annotate_clips(
        args.clips,
        provider=provider,
        prompt=prompt,
        n_captions=args.n_captions,
        cache_dir=args.cache_dir,
        max_in_flight=args.max_in_flight,
    )
    annotate_mod.write_caption_records_jsonl(records, args.out)
    print(f"clips={len(records)} captions={sum(len(r.captions) for r in records)}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    segments = read_segments_jsonl(args.segments)
    captions = annotate_mod.read_caption_records_jsonl(args.captions)
    pairs, dropped_segments, dropped_records = annotate_mod.align_by_timestamp(
        segments, captions, segment_secs=args.segment_secs
    )
    fractions = tuple(float(x) for x in args.split.split(","))
    if len(fractions) != 3:
        raise InvalidSplit(f"--split needs three comma-separated fractions, got {args.split}")
    splits = dataset_mod.build_dataset(pairs, split=fractions, seed=args.seed or 0)
    dataset_mod.assert_no_leakage(*splits)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, records in zip(("train", "val", "test"), splits):
        dataset_mod.write_records_jsonl(records, out_dir / f"{name}.jsonl")
    print(
        f"pairs={len(pairs)} dropped_segments={dropped_segments} "
        f"dropped_captions={dropped_records} "
        f"train={len(splits[0])} val={len(splits[1])} test={len(splits[2])}"
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    samples = synth_mod.generate(n_per_type=args.n_per_type, seed=args.seed or 0)
    records = synth_mod.to_records(samples)
    dataset_mod.write_records_jsonl(records, args.out)
    print(f"samples={len(records)} types={len(synth_mod.DEFAULT_PROFILES)}")
    return EXIT_OK


def cmd_train(args) -> int:
    run_config = _load_run_config(args)
    train_records = dataset_mod.read_records_jsonl(args.train)
    val_records = dataset_mod.read_records_jsonl(args.val) if args.val else []
    result = train(
        train_records, val_records, run_config, args.out_dir, log_path=args.log
    )
    print(
        f"epochs={len(result.history)} best_epoch={result.best_epoch} "
        f"checkpoint={result.checkpoint_dir}"
    )
    return EXIT_OK


def cmd_caption(args) -> int:
    model, run_config, vocab, scaler, _ = load_checkpoint(args.checkpoint)
    if args.pcap:
        records, _ = parse_pcap_with_stats(args.pcap)
        sequences = segment_flows(
            assemble_flows(records), segment_secs=run_config.segment_secs
        )
    else:
        sequences = read_segments_jsonl(args.segments)
    expected = run_config.encoder.feature_dim
    for seq in sequences:
        if seq.features.shape[1] != expected:
            raise ShapeMismatch(
                f"{seq.segment_id}: feature dimension {seq.features.shape[1]} "
                f"does not match the checkpoint's {expected}"
            )
    if args.beam:
        from .features import FlowFeatureSequence

        max_len = run_config.train.max_caption_len
        for seq in sequences:
            scaled = FlowFeatureSequence(
                features=scaler.transform(seq.features[None], mask=seq.mask[None])[0],
                mask=seq.mask,
                segment_start=seq.segment_start,
                segment_id=seq.segment_id,
            )
            enc = model.encoder.encode(scaled)
            tokens = model.decoder.decode_beam(
                enc, max_len=max_len, beam_width=args.beam_width
            )
            print(" ".join(vocab.decode(tokens)))
        return EXIT_OK
    inference = [
        dataset_mod.DatasetRecord(
            segment_id=seq.segment_id,
            features=seq.features,
            mask=seq.mask,
            caption="",
            app_type=0,
            caption_embedding=[0.0],
            embedder_id="none",
        )
        for seq in sequences
    ]
    captions, _ = predict_records(
        model, inference, vocab, scaler,
        max_len=run_config.train.max_caption_len,
    )
    for caption in captions:
        print(caption)
    return EXIT_OK


def _read_caption_file(path: str) -> list[list[str]]:
    """Each line/record becomes a list of reference captions."""
    entries: list[list[str]] = []
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".jsonl"):
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "captions" in obj:
                entries.append([str(c) for c in obj["captions"]])
            else:
                entries.append([str(obj["caption"])])
    else:
        entries = [[line] for line in text.splitlines()]
    return entries


def cmd_evaluate(args) -> int:
    candidates = _read_caption_file(args.candidates)
    references = _read_caption_file(args.references)
    if len(candidates) != len(references):
        raise ValueError(
            f"{len(candidates)} candidates vs {len(references)} references"
        )
    corpus = EvalCorpus(
        items=[
            (tokenize(cand[0]), [tokenize(r) for r in refs])
            for cand, refs in zip(candidates, references)
        ]
    )
    wanted = tuple(args.metrics.split(",")) if args.metrics else None
    report = score_corpus(corpus, metrics=wanted)
    payload = report.to_dict()
    if not args.per_item:
        payload.pop("per_item")
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficap",
        description="Caption smartphone activity from encrypted network traffic.",
    )
    parser.add_argument("--config", help="run configuration JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="PCAP -> segment feature JSONL")
    p.add_argument("--pcap", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segment-secs", type=float, default=15.0)
    p.add_argument("--max-flows", type=int, default=50)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("annotate", help="caption screen-recording clips")
    p.add_argument("--clips", required=True)
    p.add_argument("--provider", choices=("mock", "vlm"), default="mock")
    p.add_argument("--out", required=True)
    p.add_argument("--n-captions", type=int, default=20)
    p.add_argument("--prompt-file")
    p.add_argument("--cache-dir", default=".cache/annotations")
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--vlm-endpoint",
                   default="https://dashscope.aliyuncs.com/api/v1/services/vlm/caption")
    p.add_argument("--vlm-model", default="qwen-vl-max")
    p.add_argument("--vlm-timeout", type=float, default=60.0)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("dataset", help="join segments and captions into splits")
    p.add_argument("--segments", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="0.8,0.1,0.1")
    p.add_argument("--segment-secs", type=float, default=15.0)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n-per-type", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a captioning model")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("caption", help="caption a PCAP or segment JSONL")
    p.add_argument("--checkpoint", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--pcap")
    group.add_argument("--segments")
    p.add_argument("--beam", action="store_true", help="beam search instead of greedy")
    p.add_argument("--beam-width", type=int, default=3)
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("evaluate", help="score candidate captions")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--metrics", help="comma-separated subset of bleu4,meteor,rouge_l,cider")
    p.add_argument("--per-item", action="store_true")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (InvalidConfig, InvalidSplit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        FileNotFoundError,
        MalformedPcap,
        ProviderAuthError,
        ShapeMismatch,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT


if __name__ == "__main__":
    sys.exit(main())
