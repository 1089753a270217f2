"""Command-line pipeline: synth, prepare, extract, train, eval, sweep, cluster.

Exit codes: 0 success, 2 bad config, 3 missing or malformed input,
4 numeric failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, audio, corpus, encoder as enc_mod, features, metrics, synth
from .config import RunConfig, TARGET_SAMPLE_RATE, load_config
from .errors import (
    ConfigError,
    FormatError,
    ManifestError,
    MissingInputError,
    NumericError,
)
from .formats import EmbeddingRecord, read_embeddings, write_embeddings
from .nets import (
    ClassifierConfig,
    PooledDataset,
    SequenceDataset,
    TrainConfig,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)

SEQUENCE_MODELS = ("lstm", "bilstm", "cnn_bilstm", "transformer")
POOLED_MODELS = ("dnn", "prior_only")
LABEL_TO_INT = {"english": 0, "mandarin": 1}


# ------------------------------------------------------------- helpers

def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"{path} not found; {hint}")
    return path


def _model_tag(model: str, layer: int | None) -> str:
    if model in POOLED_MODELS:
        return f"{model}_mfcc"
    return f"{model}_layer{layer}"


def _load_speech_manifest(cfg: RunConfig):
    path = _require(cfg.speech_manifest_path, "run `lidkit prepare` first")
    return corpus.load_manifest(path)


def _segments_by_clip(manifest):
    by_clip: dict[str, list] = {}
    for rec in manifest.records:
        by_clip.setdefault(rec.clip_id, []).append(rec)
    return by_clip


def _embedding_file(cfg: RunConfig, source: str) -> Path:
    return cfg.embeddings_dir / f"{source}.lide"


def _dataset_from_records(records, ids, pooled: bool, frame_hop: float):
    """Build a train/val/test dataset from embedding records for given ids."""
    chosen = [r for r in records if r.segment_id in ids]
    labels = np.array([r.label for r in chosen], dtype=np.int64)
    if pooled:
        rows = []
        for r in chosen:
            seq = features.FeatureSequence(r.segment_id, "mfcc",
                                           r.data.astype(np.float64), frame_hop)
            rows.append(features.pool_stats(seq))
        return PooledDataset([r.segment_id for r in chosen], np.stack(rows), labels)
    return SequenceDataset(
        [r.segment_id for r in chosen],
        [r.data.astype(np.float64) for r in chosen],
        labels,
    )


def _split_parts(cfg: RunConfig):
    split = corpus.load_split(_require(cfg.split_path, "run `lidkit prepare` first"))
    parts = {p: set(split.ids_for(p)) for p in corpus.PARTS}
    for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
        overlap = parts[a] & parts[b]
        if overlap:
            raise ManifestError(
                f"split leakage: {len(overlap)} segment(s) in both {a} and {b}, "
                f"e.g. {sorted(overlap)[0]!r}"
            )
    return parts


# ------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig) -> int:
    clips, manifest = synth.synth_corpus(cfg.synth)
    cfg.audio_dir.mkdir(parents=True, exist_ok=True)
    for clip in clips:
        audio.write_wav(cfg.audio_dir / f"{clip.clip_id}.wav", clip)
    corpus.save_manifest(manifest, cfg.manifest_path)
    counts = manifest.label_counts()
    print(f"wrote {len(clips)} clips, {len(manifest)} segments -> {cfg.manifest_path}")
    for label, count in counts.items():
        print(f"  {label:10s} {count}")
    return 0


def cmd_prepare(cfg: RunConfig) -> int:
    manifest = corpus.load_manifest(
        _require(cfg.manifest_path, "run `lidkit synth` or provide a manifest")
    )
    for clip_id in sorted({r.clip_id for r in manifest.records}):
        wav = cfg.audio_dir / f"{clip_id}.wav"
        if not wav.exists():
            raise MissingInputError(f"manifest references clip {clip_id!r} but {wav} is missing")
    speech = corpus.drop_nonspeech(manifest)
    if len(speech) == 0:
        raise ManifestError("no speech segments after filtering")
    corpus.save_manifest(speech, cfg.speech_manifest_path)
    split = corpus.split_dataset(speech, seed=cfg.seed)
    corpus.save_split(split, cfg.split_path)
    counts = split.counts()
    print(
        f"kept {len(speech)}/{len(manifest)} speech segments; split "
        f"train/val/test = {counts['train']}/{counts['val']}/{counts['test']}"
    )
    return 0


def _iter_speech_segments(cfg: RunConfig):
    """Yield (record, segment clip at 16 kHz) for every speech segment."""
    manifest = _load_speech_manifest(cfg)
    by_clip = _segments_by_clip(manifest)
    for clip_id in sorted(by_clip):
        wav_path = _require(cfg.audio_dir / f"{clip_id}.wav", "audio missing")
        clip = audio.read_wav(wav_path, clip_id)
        if clip.sample_rate != TARGET_SAMPLE_RATE:
            clip = audio.resample(clip, TARGET_SAMPLE_RATE)
        sub = corpus.Manifest(records=by_clip[clip_id])
        for rec, seg_clip in zip(
            by_clip[clip_id], (c for _, c in corpus.cut_segments(clip, sub))
        ):
            yield rec, seg_clip


def cmd_extract(cfg: RunConfig, kind: str) -> int:
    cfg.embeddings_dir.mkdir(parents=True, exist_ok=True)
    fs = cfg.features.frame_spec()

    if kind in ("mfcc", "logmel"):
        ms = cfg.features.mfcc_spec() if kind == "mfcc" else cfg.features.logmel_spec()
        records = []
        for rec, seg in _iter_speech_segments(cfg):
            if kind == "mfcc":
                feat = features.mfcc(seg, fs, ms, cfg.features.mfcc_coeffs)
            else:
                feat = features.log_mel(seg, fs, ms)
            records.append(
                EmbeddingRecord(rec.segment_id, LABEL_TO_INT[rec.label], 0,
                                feat.data.astype(np.float32))
            )
        records.sort(key=lambda r: r.segment_id)
        out = _embedding_file(cfg, kind)
        write_embeddings(out, records)
        print(f"wrote {len(records)} {kind} records -> {out}")
        return 0

    if kind != "layers":
        raise ConfigError(f"unknown extract kind {kind!r}")

    enc_cfg = enc_mod.EncoderConfig(
        blocks_per_stack=cfg.encoder.blocks_per_stack,
        n_heads=cfg.encoder.heads,
        ff_expansion=cfg.encoder.ff_expansion,
        seed=cfg.seed,
    )
    encoder = enc_mod.init_encoder(enc_cfg)
    enc_mod.save_weights(encoder, cfg.encoder_path)
    ms = cfg.features.logmel_spec()
    per_layer: list[list[EmbeddingRecord]] = [[] for _ in range(6)]
    n_segments = 0
    for rec, seg in _iter_speech_segments(cfg):
        feat = features.log_mel(seg, fs, ms)
        feat.segment_id = rec.segment_id
        embeddings = enc_mod.encode_layers(encoder, feat)
        n_segments += 1
        for emb in embeddings:
            per_layer[emb.layer - 1].append(
                EmbeddingRecord(rec.segment_id, LABEL_TO_INT[rec.label], emb.layer,
                                emb.sequence.astype(np.float32))
            )
    for layer_records in per_layer:
        layer_records.sort(key=lambda r: r.segment_id)
    for layer, layer_records in enumerate(per_layer, start=1):
        out = _embedding_file(cfg, f"layer{layer}")
        write_embeddings(out, layer_records)
        dims = {r.dim for r in layer_records}
        print(f"wrote {len(layer_records)} records (D={sorted(dims)}) -> {out}")
    print(f"encoded {n_segments} segments through 6 layers")
    return 0


def _train_one(cfg: RunConfig, model: str, layer: int | None):
    """Shared by cmd_train and cmd_sweep so a sweep row is exactly one run."""
    if model in SEQUENCE_MODELS:
        if layer is None:
            raise ConfigError(f"model {model!r} needs --layer 1..6")
        source = f"layer{layer}"
        pooled = False
    else:
        source = "mfcc"
        pooled = True
    records = read_embeddings(
        _require(_embedding_file(cfg, source), "run `lidkit extract` first")
    )
    parts = _split_parts(cfg)
    frame_hop = cfg.features.hop
    train_ds = _dataset_from_records(records, parts["train"], pooled, frame_hop)
    val_ds = _dataset_from_records(records, parts["val"], pooled, frame_hop)
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ManifestError("empty train or val split for this embedding file")

    cfg_c = ClassifierConfig(
        kind=model,
        input_dim=train_ds.dim,
        hidden=cfg.classifier.hidden,
        dropout=cfg.classifier.dropout,
        conv_channels=cfg.classifier.conv_channels,
        tf_layers=cfg.classifier.tf_layers,
        tf_heads=cfg.classifier.tf_heads,
        seed=cfg.seed,
    )
    t = cfg.train
    max_epochs, patience = t.max_epochs, t.patience
    if model == "lstm":
        # Layer-sweep preset: fixed 15 epochs, no early stopping.
        max_epochs, patience = 15, 15
    cfg_t = TrainConfig(
        batch_size=t.batch_size,
        max_epochs=max_epochs,
        lr=t.lr,
        beta1=t.beta1,
        beta2=t.beta2,
        adam_eps=t.adam_eps,
        patience=min(patience, max_epochs),
        metric=t.metric,
        seed=cfg.seed,
    )
    checkpoint, report = train(cfg_c, cfg_t, train_ds, val_ds)

    tag = _model_tag(model, layer)
    cfg.checkpoints_dir.mkdir(parents=True, exist_ok=True)
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    chk_path = cfg.checkpoints_dir / f"{tag}.lidt"
    save_checkpoint(checkpoint, chk_path)
    with open(cfg.reports_dir / f"train_{tag}.csv", "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    return checkpoint, report, records, parts, tag


def cmd_train(cfg: RunConfig, model: str, layer: int | None) -> int:
    checkpoint, report, _, _, tag = _train_one(cfg, model, layer)
    n_epochs = len(report.epochs)
    print(
        f"trained {tag}: {n_epochs} epoch(s), best epoch {report.best_epoch}, "
        f"metric {checkpoint.metric_value:.4f}"
        + (" (early stop)" if report.stopped_early else "")
    )
    return 0


def _eval_checkpoint(cfg: RunConfig, checkpoint, records, parts, layer):
    pooled = checkpoint.config.kind in POOLED_MODELS
    test_ds = _dataset_from_records(records, parts["test"], pooled, cfg.features.hop)
    if len(test_ds) == 0:
        raise ManifestError("empty test split")
    leaked = set(test_ds.ids) & parts["train"]
    if leaked:
        raise ManifestError(f"split leakage: test ids also in train, e.g. {sorted(leaked)[0]!r}")
    pred = predict(checkpoint, test_ds)
    return metrics.evaluate(pred)


def cmd_eval(cfg: RunConfig, model: str, layer: int | None) -> int:
    tag = _model_tag(model, layer)
    chk_path = _require(cfg.checkpoints_dir / f"{tag}.lidt", "run `lidkit train` first")
    checkpoint = load_checkpoint(chk_path)
    source = "mfcc" if model in POOLED_MODELS else f"layer{layer}"
    records = read_embeddings(
        _require(_embedding_file(cfg, source), "run `lidkit extract` first")
    )
    parts = _split_parts(cfg)
    report = _eval_checkpoint(cfg, checkpoint, records, parts, layer)

    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    layer_field = 0 if model in POOLED_MODELS else layer
    with open(cfg.reports_dir / f"eval_{tag}.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    with open(cfg.reports_dir / f"eval_{tag}.csv", "w", encoding="utf-8") as fh:
        fh.write(metrics.CSV_HEADER + "\n")
        fh.write(report.to_csv_row(layer_field, model) + "\n")
    print(f"{tag}: ACC/BAC/F1/EER = {report.headline} (n={report.n})")
    return 0


def cmd_sweep(cfg: RunConfig, model: str) -> int:
    if model not in SEQUENCE_MODELS:
        raise ConfigError(f"sweep needs a sequence model, got {model!r}")
    rows = []
    for layer in range(1, 7):
        checkpoint, _, records, parts, tag = _train_one(cfg, model, layer)
        report = _eval_checkpoint(cfg, checkpoint, records, parts, layer)
        rows.append(report.to_csv_row(layer, model))
        print(f"layer {layer}: {report.headline}")
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.reports_dir / f"sweep_{model}.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(metrics.CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {out}")
    return 0


def cmd_cluster(cfg: RunConfig, layer: int, k: int, project: str | None) -> int:
    records = read_embeddings(
        _require(_embedding_file(cfg, f"layer{layer}"), "run `lidkit extract` first")
    )
    ids = [r.segment_id for r in records]
    labels = np.array([r.label for r in records], dtype=np.int64)
    pooled = np.stack([r.data.astype(np.float64).mean(axis=0) for r in records])
    ps = analysis.PointSet(ids, pooled, labels)

    if project is not None:
        method, _, dims_s = project.partition(":")
        dims = int(dims_s or 2)
        if method == "pca":
            coords, _, _ = analysis.pca(ps, dims)
        elif method == "tsne":
            coords = analysis.tsne(
                ps, perplexity=cfg.cluster.perplexity,
                iters=cfg.cluster.tsne_iters, seed=cfg.seed,
            ).embedding
        else:
            raise ConfigError(f"unknown projection {project!r} (use pca:2 or tsne:2)")
        space = analysis.PointSet(ids, coords, labels)
    else:
        space = ps

    report = analysis.kmeans(space, k, seed=cfg.seed)
    agreement = (
        analysis.match_accuracy(report.assignment, labels) if k == 2 else None
    )

    if space.x.shape[1] >= 2:
        xy = space.x[:, :2] if space.x.shape[1] == 2 else analysis.pca(space, 2)[0]
    else:
        xy = np.column_stack([space.x[:, 0], np.zeros(len(ids))])

    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    suffix = f"_{project.replace(':', '')}" if project else ""
    csv_path = cfg.reports_dir / f"cluster_layer{layer}{suffix}.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("segment_id,x,y,cluster,true_label\n")
        for i, sid in enumerate(ids):
            fh.write(
                f"{sid},{xy[i, 0]:.6f},{xy[i, 1]:.6f},"
                f"{report.assignment[i]},{corpus.SPEECH_LABELS[labels[i]]}\n"
            )
    payload = json.loads(report.to_json())
    payload["label_agreement"] = agreement
    payload["layer"] = layer
    payload["projection"] = project
    json_path = cfg.reports_dir / f"cluster_layer{layer}{suffix}.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True) + "\n")
    sil = f"{report.silhouette:.3f}" if report.silhouette is not None else "n/a"
    agg = f", label agreement {agreement:.3f}" if agreement is not None else ""
    print(f"layer {layer}: k={k}, silhouette {sil}{agg} -> {csv_path}")
    return 0


# --------------------------------------------------------------- driver

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidkit",
        description="Language-identification pipeline on synthetic bilingual speech",
    )
    parser.add_argument("--config", type=Path, default=None, help="INI run config")
    parser.add_argument("--seed", type=int, default=None, help="global seed override")
    parser.add_argument("--workdir", type=Path, default=None, help="workdir override")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate the synthetic corpus")
    sub.add_parser("prepare", help="filter nonspeech and write the 70/15/15 split")

    p = sub.add_parser("extract", help="write feature/embedding files")
    p.add_argument("--kind", choices=("mfcc", "logmel", "layers"), default="layers")

    p = sub.add_parser("train", help="train one classifier")
    p.add_argument("--model", required=True,
                   choices=SEQUENCE_MODELS + POOLED_MODELS)
    p.add_argument("--layer", type=int, default=None, choices=range(1, 7))

    p = sub.add_parser("eval", help="evaluate a trained checkpoint on the test split")
    p.add_argument("--model", required=True,
                   choices=SEQUENCE_MODELS + POOLED_MODELS)
    p.add_argument("--layer", type=int, default=None, choices=range(1, 7))

    p = sub.add_parser("sweep", help="train + eval one model across layers 1..6")
    p.add_argument("--model", required=True, choices=SEQUENCE_MODELS)

    p = sub.add_parser("cluster", help="k-means + silhouette on pooled embeddings")
    p.add_argument("--layer", type=int, default=3, choices=range(1, 7))
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--project", default=None, help="pca:2 or tsne:2")
    return parser


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = load_config(args.config, seed=args.seed, workdir=args.workdir)
    if args.command == "synth":
        return cmd_synth(cfg)
    if args.command == "prepare":
        return cmd_prepare(cfg)
    if args.command == "extract":
        return cmd_extract(cfg, args.kind)
    if args.command == "train":
        return cmd_train(cfg, args.model, args.layer)
    if args.command == "eval":
        return cmd_eval(cfg, args.model, args.layer)
    if args.command == "sweep":
        return cmd_sweep(cfg, args.model)
    if args.command == "cluster":
        k = args.k if args.k is not None else cfg.cluster.k
        return cmd_cluster(cfg, args.layer, k, args.project)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (MissingInputError, FileNotFoundError, ManifestError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
