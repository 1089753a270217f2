"""Miniature hierarchical multi-rate encoder.

Six stacks at dims (192, 256, 384, 512, 384, 256). After a fixed front-end
average-pooling by 2, each stack projects its input to the stack dim,
average-pools time by the stack's rate factor, runs pre-norm self-attention
blocks at that rate, upsamples back by nearest-neighbor repetition, and adds
the projected input as a residual. Every stack therefore exports a sequence
on the shared T_base time axis.

The encoder is frozen: weights are drawn once from a counter-based generator
keyed on the seed (Glorot-style uniform bounds) and never trained. A weight
container round trip exists for importing trained weights later.
"""

from dataclasses import dataclass, field

import numpy as np

from . import formats
from .errors import FormatError
from .features import FeatureSequence
from .seeding import counter_rng_for

STACK_DIMS = (192, 256, 384, 512, 384, 256)
DS_FACTORS = (1, 2, 4, 8, 4, 2)
FRONT_POOL = 2
LN_EPS = 1e-5


@dataclass(frozen=True)
class EncoderConfig:
    stack_dims: tuple[int, ...] = STACK_DIMS
    ds_factors: tuple[int, ...] = DS_FACTORS
    blocks_per_stack: int = 2
    n_heads: int = 4
    ff_expansion: int = 2
    input_dim: int = 80
    seed: int = 0

    def __post_init__(self):
        if len(self.stack_dims) != 6 or len(self.ds_factors) != 6:
            raise ValueError("encoder uses exactly 6 stacks")
        if any(d <= 0 for d in self.stack_dims):
            raise ValueError("stack dims must be positive")
        for f in self.ds_factors:
            if f <= 0 or f & (f - 1):
                raise ValueError(f"ds factor {f} is not a power of two")
        for d in self.stack_dims:
            if d % self.n_heads:
                raise ValueError(f"stack dim {d} not divisible by {self.n_heads} heads")


@dataclass
class LayerEmbedding:
    """Per-layer encoder output for one segment."""

    segment_id: str
    layer: int  # 1..6
    sequence: np.ndarray | None = None  # T x D_layer
    pooled: np.ndarray | None = None  # D_layer

    def __post_init__(self):
        if self.sequence is None and self.pooled is None:
            raise ValueError("LayerEmbedding needs a sequence or a pooled vector")

    @property
    def dim(self) -> int:
        if self.sequence is not None:
            return self.sequence.shape[1]
        return self.pooled.shape[0]


@dataclass
class Encoder:
    config: EncoderConfig
    weights: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(cfg: EncoderConfig) -> Encoder:
    """Seeded-random frozen encoder; same seed gives bitwise-identical weights."""
    rng = counter_rng_for(cfg.seed, "encoder")
    w: dict[str, np.ndarray] = {}
    prev = cfg.input_dim
    for s, d in enumerate(cfg.stack_dims, start=1):
        w[f"stack{s}/in_w"] = _glorot(rng, prev, d)
        w[f"stack{s}/in_b"] = np.zeros(d)
        for b in range(1, cfg.blocks_per_stack + 1):
            pre = f"stack{s}/block{b}"
            w[f"{pre}/ln1_g"] = np.ones(d)
            w[f"{pre}/ln1_b"] = np.zeros(d)
            w[f"{pre}/qkv_w"] = _glorot(rng, d, 3 * d)
            w[f"{pre}/qkv_b"] = np.zeros(3 * d)
            w[f"{pre}/out_w"] = _glorot(rng, d, d)
            w[f"{pre}/out_b"] = np.zeros(d)
            w[f"{pre}/ln2_g"] = np.ones(d)
            w[f"{pre}/ln2_b"] = np.zeros(d)
            w[f"{pre}/ff1_w"] = _glorot(rng, d, cfg.ff_expansion * d)
            w[f"{pre}/ff1_b"] = np.zeros(cfg.ff_expansion * d)
            w[f"{pre}/ff2_w"] = _glorot(rng, cfg.ff_expansion * d, d)
            w[f"{pre}/ff2_b"] = np.zeros(d)
        prev = d
    return Encoder(config=cfg, weights=w)


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return gamma * (x - mu) / np.sqrt(var + LN_EPS) + beta


def _self_attention(x: np.ndarray, w: dict, pre: str, n_heads: int) -> np.ndarray:
    t, d = x.shape
    hd = d // n_heads
    qkv = x @ w[f"{pre}/qkv_w"] + w[f"{pre}/qkv_b"]
    q, k, v = np.split(qkv, 3, axis=1)
    q = q.reshape(t, n_heads, hd).transpose(1, 0, 2)
    k = k.reshape(t, n_heads, hd).transpose(1, 0, 2)
    v = v.reshape(t, n_heads, hd).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(hd)
    scores -= scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    ctx = (attn @ v).transpose(1, 0, 2).reshape(t, d)
    return ctx @ w[f"{pre}/out_w"] + w[f"{pre}/out_b"]


def _block(x: np.ndarray, w: dict, pre: str, n_heads: int) -> np.ndarray:
    h = x + _self_attention(
        _layer_norm(x, w[f"{pre}/ln1_g"], w[f"{pre}/ln1_b"]), w, pre, n_heads
    )
    z = _layer_norm(h, w[f"{pre}/ln2_g"], w[f"{pre}/ln2_b"])
    ff = np.maximum(0.0, z @ w[f"{pre}/ff1_w"] + w[f"{pre}/ff1_b"])
    return h + ff @ w[f"{pre}/ff2_w"] + w[f"{pre}/ff2_b"]


def _avg_pool(x: np.ndarray, factor: int) -> np.ndarray:
    """Average-pool time by `factor`; the final window may be partial."""
    if factor == 1:
        return x
    t = x.shape[0]
    n_out = (t + factor - 1) // factor
    out = np.empty((n_out, x.shape[1]))
    for i in range(n_out):
        out[i] = x[i * factor : min((i + 1) * factor, t)].mean(axis=0)
    return out


def _upsample(x: np.ndarray, factor: int, length: int) -> np.ndarray:
    if factor == 1:
        return x[:length]
    return np.repeat(x, factor, axis=0)[:length]


def encode_layers(enc: Encoder, f: FeatureSequence) -> list[LayerEmbedding]:
    """Run all six stacks; export each stack's output on the shared time axis."""
    cfg = enc.config
    if f.kind != "logmel":
        raise ValueError(f"encoder input must be logmel features, got {f.kind!r}")
    if f.dim != cfg.input_dim:
        raise ValueError(f"expected {cfg.input_dim}-dim input, got {f.dim}")
    max_factor = max(cfg.ds_factors)
    if f.n_frames < max_factor:
        raise ValueError(
            f"sequence of {f.n_frames} frames too short for rate factor {max_factor}"
        )

    t_base = f.n_frames // FRONT_POOL
    if t_base < 1:
        raise ValueError("sequence too short after front-end pooling")
    x = f.data[: t_base * FRONT_POOL].reshape(t_base, FRONT_POOL, -1).mean(axis=1)

    outputs: list[LayerEmbedding] = []
    for s, (d, factor) in enumerate(zip(cfg.stack_dims, cfg.ds_factors), start=1):
        proj = x @ enc.weights[f"stack{s}/in_w"] + enc.weights[f"stack{s}/in_b"]
        h = _avg_pool(proj, factor)
        for b in range(1, cfg.blocks_per_stack + 1):
            h = _block(h, enc.weights, f"stack{s}/block{b}", cfg.n_heads)
        x = _upsample(h, factor, t_base) + proj
        outputs.append(LayerEmbedding(f.segment_id, s, sequence=x.copy()))
    return outputs


def pool_embedding(e: LayerEmbedding, valid_len: int | None = None) -> LayerEmbedding:
    """Masked mean over the first valid_len frames of a sequence embedding."""
    if e.sequence is None:
        raise ValueError("pool_embedding needs a sequence embedding")
    t = e.sequence.shape[0]
    if valid_len is None:
        valid_len = t
    if not 1 <= valid_len <= t:
        raise ValueError(f"valid_len must be in [1, {t}], got {valid_len}")
    pooled = e.sequence[:valid_len].mean(axis=0)
    return LayerEmbedding(e.segment_id, e.layer, pooled=pooled)


def save_weights(enc: Encoder, path) -> None:
    cfg = enc.config
    tensors: dict[str, np.ndarray] = {
        "config/stack_dims": np.array(cfg.stack_dims, dtype=np.float64),
        "config/ds_factors": np.array(cfg.ds_factors, dtype=np.float64),
        "config/blocks_per_stack": np.array(float(cfg.blocks_per_stack)),
        "config/n_heads": np.array(float(cfg.n_heads)),
        "config/ff_expansion": np.array(float(cfg.ff_expansion)),
        "config/input_dim": np.array(float(cfg.input_dim)),
        "config/seed": np.array(float(cfg.seed)),
    }
    tensors.update(enc.weights)
    formats.write_tensors(path, tensors)


def load_weights(path) -> Encoder:
    tensors = formats.read_tensors(path)
    try:
        cfg = EncoderConfig(
            stack_dims=tuple(int(v) for v in tensors.pop("config/stack_dims")),
            ds_factors=tuple(int(v) for v in tensors.pop("config/ds_factors")),
            blocks_per_stack=int(tensors.pop("config/blocks_per_stack")),
            n_heads=int(tensors.pop("config/n_heads")),
            ff_expansion=int(tensors.pop("config/ff_expansion")),
            input_dim=int(tensors.pop("config/input_dim")),
            seed=int(tensors.pop("config/seed")),
        )
    except KeyError as e:
        raise FormatError(f"encoder file missing config tensor {e}")
    reference = init_encoder(cfg)
    for name, ref in reference.weights.items():
        if name not in tensors:
            raise FormatError(f"encoder file missing weight tensor {name!r}")
        if tensors[name].shape != ref.shape:
            raise FormatError(
                f"shape mismatch for tensor {name!r}: file has "
                f"{tensors[name].shape}, config implies {ref.shape}"
            )
    extra = set(tensors) - set(reference.weights)
    if extra:
        raise FormatError(f"unexpected tensors in encoder file: {sorted(extra)}")
    return Encoder(config=cfg, weights=tensors)
