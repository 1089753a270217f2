"""Classifier backends: LSTM, BiLSTM, CNN-BiLSTM, transformer, DNN, and a
degenerate prior-only baseline.

Each model keeps its parameters in a flat name->array dict, exposes
forward(...) -> (logits, cache) and backward(cache, dlogits) -> grads with
the same keys, and is padding-invariant: logits never depend on frames at
or beyond a sequence's valid length.
"""

from dataclasses import dataclass, field

import numpy as np

from ..seeding import rng_for
from . import layers as L

CLASSIFIER_KINDS = ("lstm", "bilstm", "cnn_bilstm", "transformer", "dnn", "prior_only")
N_CLASSES = 2
DNN_HIDDEN_LAYERS = 6
FF_MULT = 2


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str
    input_dim: int
    hidden: int = 128
    dropout: float = 0.2
    conv_channels: tuple[int, int, int] = (64, 64, 64)
    tf_layers: int = 2
    tf_heads: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.input_dim <= 0 or self.hidden <= 0:
            raise ValueError("dims must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.kind == "transformer" and self.hidden % self.tf_heads:
            raise ValueError("transformer hidden dim must divide by head count")


@dataclass
class SequenceBatch:
    """Padded batch: data (B, T_max, D), valid lengths, integer labels."""

    data: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if np.any(self.lengths < 1) or np.any(self.lengths > self.data.shape[1]):
            raise ValueError("lengths must be in [1, T_max]")
        if np.any((self.labels < 0) | (self.labels >= N_CLASSES)):
            raise ValueError("labels must be class indices in range")

    @property
    def size(self) -> int:
        return self.data.shape[0]


def _glorot(rng, fan_in, fan_out, scale=1.0):
    limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class LstmClassifier:
    kind = "lstm"
    consumes = "sequence"

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        rng = rng_for(cfg.seed, "init:lstm")
        d, h = cfg.input_dim, cfg.hidden
        self.params = {
            "w": _glorot(rng, d, 4 * h),
            "u": _glorot(rng, h, 4 * h),
            "b": np.zeros(4 * h),
            "head_w": _glorot(rng, h, N_CLASSES),
            "head_b": np.zeros(N_CLASSES),
        }
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, batch: SequenceBatch, train=False, rng=None):
        p = self.params
        hs, lstm_cache = L.lstm_forward(batch.data, p["w"], p["u"], p["b"])
        idx = np.arange(batch.size)
        rep = hs[idx, batch.lengths - 1]
        rep_d, drop = L.dropout_forward(rep, self.cfg.dropout, train, rng)
        logits, lin_cache = L.linear_forward(rep_d, p["head_w"], p["head_b"])
        return logits, (lstm_cache, batch.lengths, drop, lin_cache, hs.shape)

    def backward(self, cache, dlogits):
        lstm_cache, lengths, drop, lin_cache, hs_shape = cache
        drep, dhead_w, dhead_b = L.linear_backward(lin_cache, dlogits)
        drep = L.dropout_backward(drop, drep)
        dh_seq = np.zeros(hs_shape)
        dh_seq[np.arange(len(lengths)), lengths - 1] = drep
        _, dw, du, db = L.lstm_backward(lstm_cache, dh_seq)
        return {"w": dw, "u": du, "b": db, "head_w": dhead_w, "head_b": dhead_b}


class BiLstmClassifier:
    kind = "bilstm"
    consumes = "sequence"

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        rng = rng_for(cfg.seed, "init:bilstm")
        d, h = cfg.input_dim, cfg.hidden
        self.params = {
            "fw_w": _glorot(rng, d, 4 * h),
            "fw_u": _glorot(rng, h, 4 * h),
            "fw_b": np.zeros(4 * h),
            "bw_w": _glorot(rng, d, 4 * h),
            "bw_u": _glorot(rng, h, 4 * h),
            "bw_b": np.zeros(4 * h),
            "head_w": _glorot(rng, 2 * h, N_CLASSES),
            "head_b": np.zeros(N_CLASSES),
        }
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, batch: SequenceBatch, train=False, rng=None):
        p = self.params
        h = self.cfg.hidden
        hf, cache_f = L.lstm_forward(batch.data, p["fw_w"], p["fw_u"], p["fw_b"])
        x_rev = L.reverse_valid(batch.data, batch.lengths)
        hb, cache_b = L.lstm_forward(x_rev, p["bw_w"], p["bw_u"], p["bw_b"])
        idx = np.arange(batch.size)
        rep = np.concatenate(
            [hf[idx, batch.lengths - 1], hb[idx, batch.lengths - 1]], axis=1
        )
        rep_d, drop = L.dropout_forward(rep, self.cfg.dropout, train, rng)
        logits, lin_cache = L.linear_forward(rep_d, p["head_w"], p["head_b"])
        cache = (cache_f, cache_b, batch.lengths, drop, lin_cache, hf.shape, h)
        return logits, cache

    def backward(self, cache, dlogits):
        cache_f, cache_b, lengths, drop, lin_cache, hshape, h = cache
        drep, dhead_w, dhead_b = L.linear_backward(lin_cache, dlogits)
        drep = L.dropout_backward(drop, drep)
        idx = np.arange(len(lengths))
        dhf = np.zeros(hshape)
        dhb = np.zeros(hshape)
        dhf[idx, lengths - 1] = drep[:, :h]
        dhb[idx, lengths - 1] = drep[:, h:]
        _, dfw_w, dfw_u, dfw_b = L.lstm_backward(cache_f, dhf)
        _, dbw_w, dbw_u, dbw_b = L.lstm_backward(cache_b, dhb)
        return {
            "fw_w": dfw_w, "fw_u": dfw_u, "fw_b": dfw_b,
            "bw_w": dbw_w, "bw_u": dbw_u, "bw_b": dbw_b,
            "head_w": dhead_w, "head_b": dhead_b,
        }


def bilstm_layer_forward(x, lengths, params, prefix):
    """One bidirectional layer returning the full (B, T, 2H) sequence,
    backward states aligned to forward time; pad frames are zero."""
    hf, cache_f = L.lstm_forward(
        x, params[f"{prefix}_fw_w"], params[f"{prefix}_fw_u"], params[f"{prefix}_fw_b"]
    )
    x_rev = L.reverse_valid(x, lengths)
    hb_rev, cache_b = L.lstm_forward(
        x_rev, params[f"{prefix}_bw_w"], params[f"{prefix}_bw_u"], params[f"{prefix}_bw_b"]
    )
    hb = L.reverse_valid(hb_rev, lengths)
    hf_masked, _ = L.mask_frames(hf, lengths)
    y = np.concatenate([hf_masked, hb], axis=2)
    return y, (cache_f, cache_b, lengths, hf.shape)


def bilstm_layer_backward(cache, dy, prefix):
    cache_f, cache_b, lengths, hshape = cache
    h = hshape[2]
    dhf, _ = L.mask_frames(dy[..., :h], lengths)
    dhb_rev = L.reverse_valid_backward(dy[..., h:], lengths)
    dxf, dfw_w, dfw_u, dfw_b = L.lstm_backward(cache_f, dhf)
    dx_rev, dbw_w, dbw_u, dbw_b = L.lstm_backward(cache_b, dhb_rev)
    dx = dxf + L.reverse_valid_backward(dx_rev, lengths)
    grads = {
        f"{prefix}_fw_w": dfw_w, f"{prefix}_fw_u": dfw_u, f"{prefix}_fw_b": dfw_b,
        f"{prefix}_bw_w": dbw_w, f"{prefix}_bw_u": dbw_u, f"{prefix}_bw_b": dbw_b,
    }
    return dx, grads


class CnnBiLstmClassifier:
    """Three masked conv blocks (conv -> batch norm -> dropout), two stacked
    bidirectional layers, affine head on the final states."""

    kind = "cnn_bilstm"
    consumes = "sequence"

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        rng = rng_for(cfg.seed, "init:cnn_bilstm")
        h = cfg.hidden
        chans = (cfg.input_dim,) + tuple(cfg.conv_channels)
        self.params = {}
        self.buffers = {}
        for j in range(1, 4):
            cin, cout = chans[j - 1], chans[j]
            w = np.stack([_glorot(rng, cin, cout) / np.sqrt(3.0) for _ in range(3)])
            self.params[f"conv{j}_w"] = w
            self.params[f"conv{j}_b"] = np.zeros(cout)
            self.params[f"bn{j}_g"] = np.ones(cout)
            self.params[f"bn{j}_b"] = np.zeros(cout)
            self.buffers[f"bn{j}_rm"] = np.zeros(cout)
            self.buffers[f"bn{j}_rv"] = np.ones(cout)
        for prefix, din in (("l1", chans[3]), ("l2", 2 * h)):
            for direction in ("fw", "bw"):
                self.params[f"{prefix}_{direction}_w"] = _glorot(rng, din, 4 * h)
                self.params[f"{prefix}_{direction}_u"] = _glorot(rng, h, 4 * h)
                self.params[f"{prefix}_{direction}_b"] = np.zeros(4 * h)
        self.params["head_w"] = _glorot(rng, 2 * h, N_CLASSES)
        self.params["head_b"] = np.zeros(N_CLASSES)

    def forward(self, batch: SequenceBatch, train=False, rng=None):
        if train and batch.size == 1:
            raise ValueError("batch of size 1 is undefined in training mode (batch norm)")
        p = self.params
        h = self.cfg.hidden
        x, mask = L.mask_frames(batch.data, batch.lengths)
        conv_caches = []
        for j in range(1, 4):
            y, conv_c = L.conv1d_forward(x, p[f"conv{j}_w"], p[f"conv{j}_b"])
            y, (new_rm, new_rv), bn_c = L.batchnorm_forward(
                y, mask, p[f"bn{j}_g"], p[f"bn{j}_b"],
                self.buffers[f"bn{j}_rm"], self.buffers[f"bn{j}_rv"], train,
            )
            if train:
                self.buffers[f"bn{j}_rm"] = new_rm
                self.buffers[f"bn{j}_rv"] = new_rv
            y, drop = L.dropout_forward(y, self.cfg.dropout, train, rng)
            y = y * mask[..., None]
            conv_caches.append((conv_c, bn_c, drop))
            x = y

        s1, l1_cache = bilstm_layer_forward(x, batch.lengths, p, "l1")

        hf2, cache_f2 = L.lstm_forward(s1, p["l2_fw_w"], p["l2_fw_u"], p["l2_fw_b"])
        s1_rev = L.reverse_valid(s1, batch.lengths)
        hb2, cache_b2 = L.lstm_forward(s1_rev, p["l2_bw_w"], p["l2_bw_u"], p["l2_bw_b"])
        idx = np.arange(batch.size)
        rep = np.concatenate(
            [hf2[idx, batch.lengths - 1], hb2[idx, batch.lengths - 1]], axis=1
        )
        logits, lin_cache = L.linear_forward(rep, p["head_w"], p["head_b"])
        cache = (mask, conv_caches, l1_cache, cache_f2, cache_b2,
                 batch.lengths, lin_cache, hf2.shape, h)
        return logits, cache

    def backward(self, cache, dlogits):
        (mask, conv_caches, l1_cache, cache_f2, cache_b2,
         lengths, lin_cache, hshape, h) = cache
        grads = {}
        drep, grads["head_w"], grads["head_b"] = L.linear_backward(lin_cache, dlogits)
        idx = np.arange(len(lengths))
        dhf2 = np.zeros(hshape)
        dhb2 = np.zeros(hshape)
        dhf2[idx, lengths - 1] = drep[:, :h]
        dhb2[idx, lengths - 1] = drep[:, h:]
        ds1_f, dw, du, db = L.lstm_backward(cache_f2, dhf2)
        grads["l2_fw_w"], grads["l2_fw_u"], grads["l2_fw_b"] = dw, du, db
        ds1_rev, dw, du, db = L.lstm_backward(cache_b2, dhb2)
        grads["l2_bw_w"], grads["l2_bw_u"], grads["l2_bw_b"] = dw, du, db
        ds1 = ds1_f + L.reverse_valid_backward(ds1_rev, lengths)

        dx, l1_grads = bilstm_layer_backward(l1_cache, ds1, "l1")
        grads.update(l1_grads)

        for j in range(3, 0, -1):
            conv_c, bn_c, drop = conv_caches[j - 1]
            dx = dx * mask[..., None]
            dx = L.dropout_backward(drop, dx)
            dx, dg, dbeta = L.batchnorm_backward(bn_c, dx)
            grads[f"bn{j}_g"], grads[f"bn{j}_b"] = dg, dbeta
            dx, dwc, dbc = L.conv1d_backward(conv_c, dx)
            grads[f"conv{j}_w"], grads[f"conv{j}_b"] = dwc, dbc
        return grads


class TransformerClassifier:
    kind = "transformer"
    consumes = "sequence"

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        rng = rng_for(cfg.seed, "init:transformer")
        d, dm = cfg.input_dim, cfg.hidden
        self.params = {
            "in_w": _glorot(rng, d, dm),
            "in_b": np.zeros(dm),
        }
        for i in range(1, cfg.tf_layers + 1):
            self.params[f"l{i}_ln1_g"] = np.ones(dm)
            self.params[f"l{i}_ln1_b"] = np.zeros(dm)
            self.params[f"l{i}_qkv_w"] = _glorot(rng, dm, 3 * dm)
            self.params[f"l{i}_qkv_b"] = np.zeros(3 * dm)
            self.params[f"l{i}_att_w"] = _glorot(rng, dm, dm)
            self.params[f"l{i}_att_b"] = np.zeros(dm)
            self.params[f"l{i}_ln2_g"] = np.ones(dm)
            self.params[f"l{i}_ln2_b"] = np.zeros(dm)
            self.params[f"l{i}_ff1_w"] = _glorot(rng, dm, FF_MULT * dm)
            self.params[f"l{i}_ff1_b"] = np.zeros(FF_MULT * dm)
            self.params[f"l{i}_ff2_w"] = _glorot(rng, FF_MULT * dm, dm)
            self.params[f"l{i}_ff2_b"] = np.zeros(dm)
        self.params["head_w"] = _glorot(rng, dm, N_CLASSES)
        self.params["head_b"] = np.zeros(N_CLASSES)
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, batch: SequenceBatch, train=False, rng=None):
        p = self.params
        t_max = batch.data.shape[1]
        key_mask = (
            np.arange(t_max)[None, :] < batch.lengths[:, None]
        ).astype(np.float64)

        x, in_cache = L.linear_forward(batch.data, p["in_w"], p["in_b"])
        x = x + L.sinusoidal_positions(t_max, self.cfg.hidden)
        layer_caches = []
        for i in range(1, self.cfg.tf_layers + 1):
            a, ln1_c = L.layernorm_forward(x, p[f"l{i}_ln1_g"], p[f"l{i}_ln1_b"])
            s, att_c = L.mhsa_forward(
                a, key_mask, p[f"l{i}_qkv_w"], p[f"l{i}_qkv_b"],
                p[f"l{i}_att_w"], p[f"l{i}_att_b"], self.cfg.tf_heads,
            )
            s, drop1 = L.dropout_forward(s, self.cfg.dropout, train, rng)
            x = x + s
            z, ln2_c = L.layernorm_forward(x, p[f"l{i}_ln2_g"], p[f"l{i}_ln2_b"])
            f1, ff1_c = L.linear_forward(z, p[f"l{i}_ff1_w"], p[f"l{i}_ff1_b"])
            r, relu_c = L.relu_forward(f1)
            f2, ff2_c = L.linear_forward(r, p[f"l{i}_ff2_w"], p[f"l{i}_ff2_b"])
            f2, drop2 = L.dropout_forward(f2, self.cfg.dropout, train, rng)
            x = x + f2
            layer_caches.append((ln1_c, att_c, drop1, ln2_c, ff1_c, relu_c, ff2_c, drop2))

        pooled, pool_cache = L.masked_mean_forward(x, batch.lengths)
        logits, head_cache = L.linear_forward(pooled, p["head_w"], p["head_b"])
        return logits, (in_cache, layer_caches, pool_cache, head_cache)

    def backward(self, cache, dlogits):
        in_cache, layer_caches, pool_cache, head_cache = cache
        grads = {}
        dpooled, grads["head_w"], grads["head_b"] = L.linear_backward(head_cache, dlogits)
        dx = L.masked_mean_backward(pool_cache, dpooled)
        for i in range(self.cfg.tf_layers, 0, -1):
            ln1_c, att_c, drop1, ln2_c, ff1_c, relu_c, ff2_c, drop2 = layer_caches[i - 1]
            df2 = L.dropout_backward(drop2, dx)
            dr, grads[f"l{i}_ff2_w"], grads[f"l{i}_ff2_b"] = L.linear_backward(ff2_c, df2)
            df1 = L.relu_backward(relu_c, dr)
            dz, grads[f"l{i}_ff1_w"], grads[f"l{i}_ff1_b"] = L.linear_backward(ff1_c, df1)
            dx2, grads[f"l{i}_ln2_g"], grads[f"l{i}_ln2_b"] = L.layernorm_backward(ln2_c, dz)
            dx = dx + dx2
            ds = L.dropout_backward(drop1, dx)
            da, dqkv_w, dqkv_b, datt_w, datt_b = L.mhsa_backward(att_c, ds)
            grads[f"l{i}_qkv_w"], grads[f"l{i}_qkv_b"] = dqkv_w, dqkv_b
            grads[f"l{i}_att_w"], grads[f"l{i}_att_b"] = datt_w, datt_b
            dx1, grads[f"l{i}_ln1_g"], grads[f"l{i}_ln1_b"] = L.layernorm_backward(ln1_c, da)
            dx = dx + dx1
        _, grads["in_w"], grads["in_b"] = L.linear_backward(in_cache, dx)
        return grads


class DnnClassifier:
    """Pooled-vector baseline: six hidden ReLU layers and an affine head."""

    kind = "dnn"
    consumes = "pooled"

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        rng = rng_for(cfg.seed, "init:dnn")
        dims = [cfg.input_dim] + [cfg.hidden] * DNN_HIDDEN_LAYERS
        self.params = {}
        for i in range(1, DNN_HIDDEN_LAYERS + 1):
            self.params[f"h{i}_w"] = _glorot(rng, dims[i - 1], dims[i])
            self.params[f"h{i}_b"] = np.zeros(dims[i])
        self.params["out_w"] = _glorot(rng, cfg.hidden, N_CLASSES)
        self.params["out_b"] = np.zeros(N_CLASSES)
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train=False, rng=None):
        p = self.params
        caches = []
        a = np.asarray(x, dtype=np.float64)
        for i in range(1, DNN_HIDDEN_LAYERS + 1):
            z, lin_c = L.linear_forward(a, p[f"h{i}_w"], p[f"h{i}_b"])
            a, relu_c = L.relu_forward(z)
            a, drop = L.dropout_forward(a, self.cfg.dropout, train, rng)
            caches.append((lin_c, relu_c, drop))
        logits, out_c = L.linear_forward(a, p["out_w"], p["out_b"])
        return logits, (caches, out_c)

    def backward(self, cache, dlogits):
        caches, out_c = cache
        grads = {}
        da, grads["out_w"], grads["out_b"] = L.linear_backward(out_c, dlogits)
        for i in range(DNN_HIDDEN_LAYERS, 0, -1):
            lin_c, relu_c, drop = caches[i - 1]
            da = L.dropout_backward(drop, da)
            dz = L.relu_backward(relu_c, da)
            da, grads[f"h{i}_w"], grads[f"h{i}_b"] = L.linear_backward(lin_c, dz)
        return grads


class PriorOnlyClassifier:
    """Degenerate baseline: constant majority-class prediction with the
    training prior as its score."""

    kind = "prior_only"
    consumes = "labels"

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        self.params: dict[str, np.ndarray] = {}
        self.buffers = {
            "prior": np.array(0.5),  # P(mandarin) on the training set
            "majority": np.array(0.0),
        }

    def fit(self, labels: np.ndarray):
        labels = np.asarray(labels)
        prior = float(np.mean(labels == 1))
        self.buffers["prior"] = np.array(prior)
        self.buffers["majority"] = np.array(float(prior > 0.5))

    def predict_scores(self, n: int):
        score = float(self.buffers["prior"])
        pred = int(self.buffers["majority"])
        return np.full(n, score), np.full(n, pred, dtype=np.int64)


_MODEL_CLASSES = {
    c.kind: c
    for c in (
        LstmClassifier,
        BiLstmClassifier,
        CnnBiLstmClassifier,
        TransformerClassifier,
        DnnClassifier,
        PriorOnlyClassifier,
    )
}


def build_model(cfg: ClassifierConfig):
    return _MODEL_CLASSES[cfg.kind](cfg)
