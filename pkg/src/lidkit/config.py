"""Run configuration: flat INI sections with typed defaults.

Every module draws its randomness from the one global seed; per-module
streams are separated by named sub-seed derivation, so a single (config,
seed) pair pins the whole pipeline.
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .features import FrameSpec, MelSpec
from .synth import LanguageParams, SynthSpec, ENGLISH_PARAMS, MANDARIN_PARAMS

TARGET_SAMPLE_RATE = 16000


@dataclass
class FeatureSettings:
    frame_len: float = 0.025
    hop: float = 0.010
    pre_emphasis: float = 0.97
    logmel_mels: int = 80
    mfcc_mels: int = 40
    mfcc_coeffs: int = 13
    f_min: float = 20.0

    def frame_spec(self) -> FrameSpec:
        return FrameSpec(frame_len=self.frame_len, hop=self.hop,
                         pre_emphasis=self.pre_emphasis)

    def logmel_spec(self) -> MelSpec:
        return MelSpec(n_mels=self.logmel_mels, f_min=self.f_min)

    def mfcc_spec(self) -> MelSpec:
        return MelSpec(n_mels=self.mfcc_mels, f_min=self.f_min)


@dataclass
class EncoderSettings:
    blocks_per_stack: int = 2
    heads: int = 4
    ff_expansion: int = 2


@dataclass
class ClassifierSettings:
    hidden: int = 128
    dropout: float = 0.2
    conv_channels: tuple[int, int, int] = (64, 64, 64)
    tf_layers: int = 2
    tf_heads: int = 4


@dataclass
class TrainSettings:
    batch_size: int = 32
    max_epochs: int = 20
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 3
    metric: str = "val_bac"


@dataclass
class ClusterSettings:
    k: int = 2
    perplexity: float = 30.0
    tsne_iters: int = 1000


@dataclass
class RunConfig:
    seed: int = 42
    workdir: Path = Path("work")
    synth: SynthSpec = field(default_factory=SynthSpec)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    cluster: ClusterSettings = field(default_factory=ClusterSettings)

    # Workdir layout.
    @property
    def audio_dir(self) -> Path:
        return self.workdir / "audio"

    @property
    def manifest_path(self) -> Path:
        return self.workdir / "manifest.jsonl"

    @property
    def speech_manifest_path(self) -> Path:
        return self.workdir / "manifest.speech.jsonl"

    @property
    def split_path(self) -> Path:
        return self.workdir / "split.jsonl"

    @property
    def embeddings_dir(self) -> Path:
        return self.workdir / "embeddings"

    @property
    def encoder_path(self) -> Path:
        return self.workdir / "encoder.lidt"

    @property
    def checkpoints_dir(self) -> Path:
        return self.workdir / "checkpoints"

    @property
    def reports_dir(self) -> Path:
        return self.workdir / "reports"


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return parser.getboolean(section, key)
        return cast(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {cast.__name__}")


def _pair(raw: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return float(parts[0]), float(parts[1])


def _int_triple(raw: str) -> tuple[int, int, int]:
    parts = [int(p.strip()) for p in raw.split(",")]
    if len(parts) != 3:
        raise ValueError("expected three comma-separated integers")
    return tuple(parts)


def _language(parser, section, prefix, default: LanguageParams) -> LanguageParams:
    pitch = _get(parser, section, f"{prefix}_pitch", _pair,
                 (default.pitch_lo, default.pitch_hi))
    bands = _get(parser, section, f"{prefix}_bands", _pair,
                 (default.band1, default.band2))
    rate = _get(parser, section, f"{prefix}_rate", float, default.syllable_rate)
    return LanguageParams(pitch[0], pitch[1], bands[0], bands[1], rate)


def load_config(path=None, seed: int | None = None, workdir=None) -> RunConfig:
    """Build a RunConfig from an optional INI file plus CLI overrides."""
    cfg = RunConfig()
    parser = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse config file {path}: {e}")

    cfg.seed = _get(parser, "run", "seed", int, cfg.seed)
    cfg.workdir = Path(_get(parser, "run", "workdir", str, str(cfg.workdir)))

    s = cfg.synth
    cfg.synth = SynthSpec(
        n_segments=_get(parser, "synth", "n_segments", int, s.n_segments),
        speech_prior=_get(parser, "synth", "speech_prior", float, s.speech_prior),
        mandarin_prior=_get(parser, "synth", "mandarin_prior", float, s.mandarin_prior),
        duration_lo=_get(parser, "synth", "duration_lo", float, s.duration_lo),
        duration_hi=_get(parser, "synth", "duration_hi", float, s.duration_hi),
        sample_rate=_get(parser, "synth", "sample_rate", int, s.sample_rate),
        seed=0,  # reassigned below from the global seed
        english=_language(parser, "synth", "english", ENGLISH_PARAMS),
        mandarin=_language(parser, "synth", "mandarin", MANDARIN_PARAMS),
    )

    f = cfg.features
    cfg.features = FeatureSettings(
        frame_len=_get(parser, "features", "frame_len", float, f.frame_len),
        hop=_get(parser, "features", "hop", float, f.hop),
        pre_emphasis=_get(parser, "features", "pre_emphasis", float, f.pre_emphasis),
        logmel_mels=_get(parser, "features", "logmel_mels", int, f.logmel_mels),
        mfcc_mels=_get(parser, "features", "mfcc_mels", int, f.mfcc_mels),
        mfcc_coeffs=_get(parser, "features", "mfcc_coeffs", int, f.mfcc_coeffs),
        f_min=_get(parser, "features", "f_min", float, f.f_min),
    )

    e = cfg.encoder
    cfg.encoder = EncoderSettings(
        blocks_per_stack=_get(parser, "encoder", "blocks_per_stack", int, e.blocks_per_stack),
        heads=_get(parser, "encoder", "heads", int, e.heads),
        ff_expansion=_get(parser, "encoder", "ff_expansion", int, e.ff_expansion),
    )

    c = cfg.classifier
    cfg.classifier = ClassifierSettings(
        hidden=_get(parser, "classifier", "hidden", int, c.hidden),
        dropout=_get(parser, "classifier", "dropout", float, c.dropout),
        conv_channels=_get(parser, "classifier", "conv_channels", _int_triple, c.conv_channels),
        tf_layers=_get(parser, "classifier", "tf_layers", int, c.tf_layers),
        tf_heads=_get(parser, "classifier", "tf_heads", int, c.tf_heads),
    )

    t = cfg.train
    cfg.train = TrainSettings(
        batch_size=_get(parser, "train", "batch_size", int, t.batch_size),
        max_epochs=_get(parser, "train", "max_epochs", int, t.max_epochs),
        lr=_get(parser, "train", "lr", float, t.lr),
        beta1=_get(parser, "train", "beta1", float, t.beta1),
        beta2=_get(parser, "train", "beta2", float, t.beta2),
        adam_eps=_get(parser, "train", "adam_eps", float, t.adam_eps),
        patience=_get(parser, "train", "patience", int, t.patience),
        metric=_get(parser, "train", "metric", str, t.metric),
    )

    k = cfg.cluster
    cfg.cluster = ClusterSettings(
        k=_get(parser, "cluster", "k", int, k.k),
        perplexity=_get(parser, "cluster", "perplexity", float, k.perplexity),
        tsne_iters=_get(parser, "cluster", "tsne_iters", int, k.tsne_iters),
    )

    if seed is not None:
        cfg.seed = seed
    if workdir is not None:
        cfg.workdir = Path(workdir)
    cfg.synth.seed = cfg.seed

    try:
        cfg.synth.validate()
        cfg.features.frame_spec()
        cfg.features.logmel_spec()
        cfg.features.mfcc_spec()
    except ValueError as e:
        raise ConfigError(str(e))
    if cfg.train.metric not in ("val_bac", "val_loss"):
        raise ConfigError(f"unknown selection metric {cfg.train.metric!r}")
    return cfg
