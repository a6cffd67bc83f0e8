"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
lines; each test also asserts, so a plain `pytest` run is authoritative.

The training-based criteria use a reduced model size (hidden 96, one
encoder layer): the thresholds pin dataset sizes, epoch caps, and scores,
while criterion 1 separately verifies the full-size default dimensions, and a
2-vCPU box cannot train the 512-wide model inside the stated budgets.
"""

import math
import tempfile

import numpy as np
import pytest
import torch

from helpers import finite_difference_grad, relative_errors, sample_indices
from test_metrics import bleu4_oracle, random_corpus, rouge_oracle
from trafficap.checkpoint import load_checkpoint
from trafficap.config import EncoderConfig, LossWeights, RunConfig, TrainConfig
from trafficap.dataset import split_records
from trafficap.decoder import CaptionDecoder
from trafficap.encoder import FlowFeatureEncoder
from trafficap.features import FlowFeatureSequence
from trafficap.flows import PacketRecord, Protocol, assemble_flows
from trafficap.losses import loss_app, loss_contrastive, loss_sentence
from trafficap.metrics import EvalCorpus, bleu4, cider, meteor, rouge_l
from trafficap.model import TrafficCaptionModel
from trafficap.synth import generate, separability_report, to_records
from trafficap.training import predict_records, score_predictions, train
from trafficap.validation import validate_feature_sequence

OVERFIT_SEED = 20250808
SMOKE_SEED = 777


def report(criterion: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\n[{status}] criterion-{criterion}: {detail}")
    assert passed, f"criterion-{criterion}: {detail}"


def harness_config(**train_overrides) -> RunConfig:
    """Reduced-size model used by the training criteria."""
    defaults = dict(
        epochs=40, batch_size=32, learning_rate=1e-3, seed=0,
        min_token_freq=1, max_caption_len=20, val_interval=10**6,
    )
    defaults.update(train_overrides)
    return RunConfig(
        encoder=EncoderConfig(
            hidden_dim=96, pattern_dim=48, type_embed_dim=32,
            encoder_layers=1, attention_heads=4, dropout=0.1,
        ),
        train=TrainConfig(**defaults),
    )


@pytest.fixture(scope="module")
def smoke_records():
    records = to_records(generate(n_per_type=100, seed=SMOKE_SEED))
    return split_records(records, (0.8, 0.1, 0.1), seed=SMOKE_SEED)


def _train_and_score(train_records, eval_records, run_config):
    with tempfile.TemporaryDirectory(prefix="trafficap-accept-") as tmp:
        result = train(train_records, [], run_config, tmp)
        model, _, vocab, scaler, _ = load_checkpoint(tmp)
        predictions, app = predict_records(
            model, eval_records, vocab, scaler,
            max_len=run_config.train.max_caption_len,
        )
    scores = score_predictions(predictions, [r.caption for r in eval_records])
    accuracy = float(
        (app == np.array([r.app_type for r in eval_records])).mean()
    )
    return scores, accuracy, result


def test_criterion_1_configuration_fidelity():
    config = RunConfig()
    config.validate()
    ec = config.encoder
    model = TrafficCaptionModel(ec, vocab_size=100, caption_embed_dim=384)
    checks = {
        "H=512": ec.hidden_dim == 512,
        "H'=256": ec.pattern_dim == 256,
        "L=64": ec.type_embed_dim == 64,
        "M=5": ec.prototypes_per_type == 5,
        "S=50": ec.max_flows == 50,
        "K=5": ec.app_type_count == 5,
        "D=123": ec.feature_dim == 123,
        "tau=0.1": config.loss.tau == 0.1,
        "segment=15s": config.segment_secs == 15.0,
        "prototype bank 5x5x512": tuple(model.encoder.prototypes.shape) == (5, 5, 512),
        "type matrix 5x64": tuple(model.encoder.type_embeddings.shape) == (5, 64),
        "film heads 64->512": tuple(model.encoder.film_gamma.weight.shape) == (512, 64),
        "lstm input 832": model.decoder.cell.weight_ih.shape[1] == 64 + 512 + 256,
        "pattern proj 512->256": tuple(model.encoder.pattern_proj.weight.shape) == (256, 512),
        "input proj 123->512": tuple(model.encoder.input_proj.weight.shape) == (512, 123),
    }
    failed = [name for name, ok in checks.items() if not ok]
    report(1, not failed, f"default configuration constants ({len(checks)} shape checks)"
           + (f"; failed: {failed}" if failed else ""))


def test_criterion_2_overfit_harness():
    records = to_records(generate(n_per_type=13, seed=OVERFIT_SEED))[:64]
    config = harness_config(epochs=300, learning_rate=2e-3)
    config.encoder.dropout = 0.0
    with tempfile.TemporaryDirectory(prefix="trafficap-overfit-") as tmp:
        result = train(records, [], config, tmp)
        model, _, vocab, scaler, _ = load_checkpoint(tmp)
        predictions, _ = predict_records(model, records, vocab, scaler, max_len=20)
    scores = score_predictions(predictions, [r.caption for r in records])
    final_cap = result.history[-1]["losses"]["cap"]
    descending = (
        result.history[49]["losses"]["total"] < result.history[0]["losses"]["total"]
    )
    ok = (
        scores["bleu4"] >= 0.90
        and scores["cider"] >= 8.0
        and final_cap < 0.1
        and descending
    )
    report(
        2, ok,
        f"64 samples, 300 epochs: BLEU-4={scores['bleu4']:.3f} (>=0.90), "
        f"CIDEr={scores['cider']:.2f} (>=8.0), final L_cap={final_cap:.3f} (<0.1), "
        f"loss@50<loss@1={descending}",
    )


def test_criterion_3_generalization_smoke(smoke_records):
    train_records, val_records, test_records = smoke_records
    separability = separability_report(
        generate(n_per_type=100, seed=SMOKE_SEED), seed=0
    )
    scores, accuracy, _ = _train_and_score(
        train_records, test_records, harness_config(epochs=40)
    )
    ok = scores["bleu4"] >= 0.5 and accuracy >= 0.9 and separability >= 0.9
    report(
        3, ok,
        f"500 samples 80/10/10: test BLEU-4={scores['bleu4']:.3f} (>=0.5), "
        f"app accuracy={accuracy:.3f} (>=0.9), separability={separability:.3f} (>=0.9)",
    )


def test_criterion_4_gradient_suite():
    worst = 0.0
    for seed in range(5):
        torch.manual_seed(seed)
        config = EncoderConfig(
            feature_dim=10, hidden_dim=16, pattern_dim=8, type_embed_dim=6,
            app_type_count=3, prototypes_per_type=4, max_flows=6,
            encoder_layers=1, attention_heads=2, dropout=0.0,
        )
        model = TrafficCaptionModel(config, vocab_size=9, caption_embed_dim=12).double()
        model.eval()
        rng = np.random.default_rng(seed)
        batch = 3
        features = rng.normal(size=(batch, 6, 10))
        mask = np.zeros((batch, 6), dtype=bool)
        for row in range(batch):
            mask[row, : rng.integers(2, 7)] = True
        features[~mask] = 0.0
        features_t = torch.from_numpy(features)
        mask_t = torch.from_numpy(mask)
        labels = torch.from_numpy(rng.integers(0, 3, size=batch))
        gold = torch.from_numpy(rng.integers(3, 9, size=(batch, 5)))
        gold[:, -1] = 2
        embeds = torch.from_numpy(rng.normal(size=(batch, 12)))
        weights = LossWeights()

        def loss_fn():
            return model.training_losses(
                features_t, mask_t, labels, gold, embeds, weights
            )["total"]

        model.zero_grad()
        loss_fn().backward()
        targets = {
            "film_gamma.weight": model.encoder.film_gamma.weight,
            "film_beta.weight": model.encoder.film_beta.weight,
            "prototypes": model.encoder.prototypes,
            "attn_r": model.decoder.attn_r,
            "attn_u": model.decoder.attn_u,
            "attn_v": model.decoder.attn_v,
            "attn_o": model.decoder.attn_o,
            "lstm weight_ih": model.decoder.cell.weight_ih,
        }
        for name, param in targets.items():
            indices = sample_indices(tuple(param.shape), count=4, seed=seed * 97 + 13)
            numeric = finite_difference_grad(loss_fn, param.data, indices, step=1e-4)
            errors = relative_errors(param.grad, numeric)
            worst = max(worst, max(errors))
            assert max(errors) < 1e-3, f"seed {seed} {name}: {errors}"
    report(4, worst < 1e-3, f"analytic vs central FD over 5 seeds, worst rel err {worst:.2e} (<1e-3)")


def test_criterion_5_metric_oracles():
    import random as pyrandom

    rng = pyrandom.Random(31337)
    worst_bleu = worst_rouge = 0.0
    for _ in range(50):
        items = random_corpus(rng, rng.randint(1, 8))
        corpus = EvalCorpus(items)
        worst_bleu = max(worst_bleu, abs(bleu4(corpus) - bleu4_oracle(items)))
        worst_rouge = max(worst_rouge, abs(rouge_l(corpus) - rouge_oracle(items)))
    identical = [
        (["red", "bird", "flies", "high", "today"],) * 2,
        (["green", "fish", "swims", "slow", "below"],) * 2,
        (["tall", "tree", "grows", "near", "water"],) * 2,
    ]
    cider_score, _ = cider(EvalCorpus([(c, [r]) for c, r in identical]))
    tokens = ["the", "user", "opens", "an", "app"]
    meteor_score = meteor(EvalCorpus([(tokens, [tokens])]))
    ok = (
        worst_bleu < 1e-9
        and worst_rouge < 1e-9
        and abs(cider_score - 10.0) < 1e-9
        and abs(meteor_score - 0.996) < 1e-3
    )
    report(
        5, ok,
        f"BLEU dev {worst_bleu:.1e}, ROUGE dev {worst_rouge:.1e} over 50 corpora; "
        f"identical-pair CIDEr {cider_score:.12f} (=10), METEOR n=5 {meteor_score:.4f} (=0.996)",
    )


def test_criterion_6_invariant_sweep():
    config = EncoderConfig(
        feature_dim=14, hidden_dim=24, pattern_dim=12, type_embed_dim=8,
        app_type_count=4, prototypes_per_type=3, max_flows=8,
        encoder_layers=1, attention_heads=2, dropout=0.0,
    )
    encoder = FlowFeatureEncoder(config).eval()
    decoder = CaptionDecoder(config, vocab_size=11).eval()
    cases = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        real = int(rng.integers(1, config.max_flows + 1))
        features = rng.normal(size=(config.max_flows, config.feature_dim)).astype(np.float32)
        mask = np.zeros(config.max_flows, dtype=bool)
        mask[:real] = True
        features[~mask] = 0.0
        seq = FlowFeatureSequence(features, mask, 0.0, f"inv-{seed}")

        enc_a = encoder.encode(seq)
        enc_b = encoder.encode(seq)
        assert (enc_a.p == enc_b.p).all() and (enc_a.b_tilde == enc_b.b_tilde).all()
        assert abs(float(enc_a.p.sum()) - 1.0) <= 1e-6 and (enc_a.p >= 0).all()
        assert abs(float(enc_a.alpha_weights.sum()) - 1.0) <= 1e-6

        garbled = features.copy()
        garbled[~mask] = rng.normal(size=(config.max_flows - real, config.feature_dim)) * 50
        enc_c = encoder.encode(FlowFeatureSequence(garbled, mask, 0.0, "g"))
        assert float((enc_a.p - enc_c.p).abs().max()) <= 1e-6
        assert float((enc_a.b_tilde - enc_c.b_tilde).abs().max()) <= 1e-6
        assert float((enc_a.F[torch.from_numpy(mask)] - enc_c.F[torch.from_numpy(mask)]).abs().max()) <= 1e-6

        with torch.no_grad():
            phi, _ = decoder.attend(
                torch.from_numpy(rng.normal(size=(1, config.hidden_dim)).astype(np.float32)),
                enc_a.F.unsqueeze(0),
                enc_a.mask.unsqueeze(0),
            )
        assert abs(float(phi.sum()) - 1.0) <= 1e-6
        assert not phi[0][~enc_a.mask].any()
        cases += 1

    # Flow-assembly equivalence against brute-force grouping, 100 cases.
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        packets = []
        t = 0.0
        hosts = ["h1", "h2", "h3", "h4"]
        for _ in range(int(rng.integers(0, 120))):
            t += float(rng.uniform(0, 0.3))
            src, dst = rng.choice(len(hosts), size=2, replace=False)
            packets.append(PacketRecord(
                timestamp=t, src_addr=hosts[src], dst_addr=hosts[dst],
                src_port=int(10 * (src + 1)), dst_port=int(10 * (dst + 1)),
                protocol=Protocol.TCP if rng.uniform() < 0.5 else Protocol.UDP,
                length=int(rng.integers(0, 1500)),
            ))
        flows = assemble_flows(packets)
        groups = {}
        for p in packets:
            ends = sorted([(p.src_addr, p.src_port), (p.dst_addr, p.dst_port)])
            groups.setdefault((tuple(ends[0]), tuple(ends[1]), p.protocol), 0)
            groups[(tuple(ends[0]), tuple(ends[1]), p.protocol)] += 1
        assert len(flows) == len(groups)
        assert sum(f.packet_count for f in flows) == len(packets)

    # Synth sequences satisfy every FlowFeatureSequence invariant (100 cases).
    samples = generate(n_per_type=20, seed=5)
    for sample in samples:
        validate_feature_sequence(sample.sequence, feature_dim=123, max_flows=50)

    # Checkpoint round-trip on a trained tiny model: bit-identical outputs.
    records = to_records(generate(n_per_type=2, seed=8))
    config_rt = harness_config(epochs=1)
    with tempfile.TemporaryDirectory() as tmp:
        train(records, [], config_rt, tmp)
        model_a, _, _, scaler_a, _ = load_checkpoint(tmp)
        model_b, _, _, scaler_b, _ = load_checkpoint(tmp)
        max_diff = 0.0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            features = rng.normal(size=(1, 50, 123)).astype(np.float32)
            mask = np.zeros((1, 50), dtype=bool)
            mask[0, : int(rng.integers(1, 51))] = True
            features[~mask] = 0.0
            scaled_a = torch.from_numpy(scaler_a.transform(features, mask=mask))
            scaled_b = torch.from_numpy(scaler_b.transform(features, mask=mask))
            with torch.no_grad():
                out_a = model_a.encoder(scaled_a, torch.from_numpy(mask))
                out_b = model_b.encoder(scaled_b, torch.from_numpy(mask))
            for key in ("F", "f_global", "p", "b_tilde"):
                max_diff = max(max_diff, float((out_a[key] - out_b[key]).abs().max()))
        assert max_diff == 0.0

    report(6, True, f"{cases} encoder/decoder cases + 100 flow equivalences + "
                    f"100 synth validations + 100 round-trip outputs (max diff {max_diff})")


def test_criterion_7_ablation_direction(smoke_records):
    train_records, _, test_records = smoke_records
    variants = {
        "full": (True, True),
        "no_fppl": (True, False),
        "baseline": (False, False),
    }
    means = {}
    for name, (use_dfm, use_fppl) in variants.items():
        ciders = []
        for seed in (0, 1, 2):
            config = harness_config(epochs=25, seed=seed)
            config.encoder.use_dfm = use_dfm
            config.encoder.use_fppl = use_fppl
            config.loss.lambda_app = 1.0 if use_dfm else 0.0
            config.loss.lambda_cont = 1.0 if use_fppl else 0.0
            scores, _, _ = _train_and_score(train_records, test_records, config)
            ciders.append(scores["cider"])
        means[name] = float(np.mean(ciders))
    ok = means["full"] > means["no_fppl"] >= means["baseline"]
    report(
        7, ok,
        f"mean CIDEr over 3 seeds: full={means['full']:.3f} > "
        f"w/o FPPL={means['no_fppl']:.3f} >= baseline={means['baseline']:.3f}",
    )


def test_criterion_8_analytic_loss_values():
    p = torch.full((6, 5), 0.2, dtype=torch.float64)
    labels = torch.tensor([0, 1, 2, 3, 4, 0])
    app = float(loss_app(p, labels))

    one = torch.randn(12, dtype=torch.float64)
    bank = one.expand(5, 4, 12).contiguous()
    f = torch.randn(6, 12, dtype=torch.float64)
    cont = float(loss_contrastive(f, labels % 5, bank, tau=0.1))

    s = torch.randn(6, 9, dtype=torch.float64)
    sent = float(loss_sentence(s, s.clone()))

    ln5 = math.log(5.0)
    ok = abs(app - ln5) < 1e-6 and abs(cont - ln5) < 1e-6 and abs(sent) < 1e-6
    report(
        8, ok,
        f"uniform L_app={app:.8f} (=ln5), identical-prototype L_cont={cont:.8f} (=ln5), "
        f"identical-embedding L_sent={sent:.2e} (=0), all within 1e-6",
    )
