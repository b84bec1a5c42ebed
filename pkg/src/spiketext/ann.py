"""TextCNN with hand-written forward/backward passes.

The tailored variant (ReLU, average pooling, no biases) is the one that can be
converted to a spiking network; the original variant keeps biases and max
pooling and serves as the conventional baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corpus import PAD_ID, Dataset
from .embedding import EmbeddingTable, clip01
from .optim import Adam

log = logging.getLogger(__name__)


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class CnnConfig:
    num_classes: int = 2
    embed_dim: int = 300
    filter_widths: tuple[int, ...] = (3, 4, 5)
    feature_maps: int = 100
    neurons_per_class: int = 10
    pooling: str = "avg"
    activation: str = "relu"
    use_bias: bool = False
    dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "filter_widths", tuple(int(w) for w in self.filter_widths))
        if self.neurons_per_class < 1:
            raise ValueError("neurons_per_class must be >= 1")
        if self.pooling not in ("avg", "max"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.activation not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(set(self.filter_widths)) != len(self.filter_widths):
            raise ValueError("filter widths must be distinct")

    @property
    def tailored(self) -> bool:
        return self.pooling == "avg" and self.activation == "relu" and not self.use_bias

    @property
    def pooled_dim(self) -> int:
        return self.feature_maps * len(self.filter_widths)

    @property
    def out_units(self) -> int:
        return self.neurons_per_class * self.num_classes

    @classmethod
    def tailored_textcnn(cls, **kw) -> "CnnConfig":
        return cls(pooling="avg", activation="relu", use_bias=False, **kw)

    @classmethod
    def original_textcnn(cls, **kw) -> "CnnConfig":
        return cls(pooling="max", activation="relu", use_bias=True, **kw)

    def to_record(self) -> dict:
        rec = {f.name: getattr(self, f.name) for f in fields(self)}
        rec["filter_widths"] = ",".join(map(str, self.filter_widths))
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "CnnConfig":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in rec.items() if k in names}
        widths = kw.get("filter_widths")
        if isinstance(widths, str):
            kw["filter_widths"] = tuple(int(w) for w in widths.split(","))
        elif isinstance(widths, int):
            kw["filter_widths"] = (widths,)
        return cls(**kw)


def conv_key(width: int) -> str:
    return f"conv{width}"


def conv_bias_key(width: int) -> str:
    return f"conv{width}_bias"


@dataclass
class CnnParams:
    """Named weight tensors; conv banks are (F, w, D), the readout is (h*K, F*|widths|)."""
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def conv(self, width: int) -> np.ndarray:
        return self.tensors[conv_key(width)]

    @property
    def fc(self) -> np.ndarray:
        return self.tensors["fc"]

    def bias(self, name: str):
        return self.tensors.get(name)

    @property
    def has_bias(self) -> bool:
        return any(k.endswith("bias") for k in self.tensors)

    def copy(self, dtype=None) -> "CnnParams":
        return CnnParams({k: np.array(v, dtype=dtype or v.dtype) for k, v in self.tensors.items()})

    @property
    def dtype(self):
        return self.fc.dtype


def init_params(config: CnnConfig, seed: int = 0, dtype=np.float32) -> CnnParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}

    def glorot(shape, fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    F, D = config.feature_maps, config.embed_dim
    for w in config.filter_widths:
        tensors[conv_key(w)] = glorot((F, w, D), w * D, F)
        if config.use_bias:
            tensors[conv_bias_key(w)] = np.zeros(F, dtype=dtype)
    tensors["fc"] = glorot((config.out_units, config.pooled_dim), config.pooled_dim, config.out_units)
    if config.use_bias:
        tensors["fc_bias"] = np.zeros(config.out_units, dtype=dtype)
    return CnnParams(tensors)


def windows(x: np.ndarray, width: int) -> np.ndarray:
    """(..., L, D) -> (..., L-w+1, w*D) sliding windows over time."""
    L, D = x.shape[-2:]
    v = sliding_window_view(x, width, axis=-2)  # (..., P, D, w)
    v = np.swapaxes(v, -1, -2)  # (..., P, w, D)
    return v.reshape(x.shape[:-2] + (L - width + 1, width * D))


def conv_currents(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid 1-D convolution over time: (..., L, D) x (F, w, D) -> (..., P, F)."""
    F, w, D = kernel.shape
    L = x.shape[-2]
    P = L - w + 1
    # one contiguous matmul against every tap, then shift-and-add over taps
    taps = (x @ kernel.transpose(2, 1, 0).reshape(D, w * F)).reshape(x.shape[:-1] + (w, F))
    out = taps[..., 0:P, 0, :].copy()
    for k in range(1, w):
        out += taps[..., k:k + P, k, :]
    return out


def conv_input_grad(d_out: np.ndarray, kernel: np.ndarray, length: int) -> np.ndarray:
    """Adjoint of `conv_currents` with respect to its input."""
    F, w, D = kernel.shape
    dwin = (d_out @ kernel.reshape(F, w * D)).reshape(d_out.shape[:-1] + (w, D))
    P = d_out.shape[-2]
    dx = np.zeros(d_out.shape[:-2] + (length, D), dtype=d_out.dtype)
    for k in range(w):
        dx[..., k:k + P, :] += dwin[..., :, k, :]
    return dx


def conv_kernel_grad(x: np.ndarray, d_out: np.ndarray, width: int) -> np.ndarray:
    """Adjoint of `conv_currents` with respect to the kernel, summed over leading axes."""
    L, D = x.shape[-2:]
    P = L - width + 1
    F = d_out.shape[-1]
    d2 = d_out.reshape(-1, F).T
    g = np.empty((F, width, D), dtype=np.result_type(x, d_out))
    for k in range(width):
        g[:, k, :] = d2 @ x[..., k:k + P, :].reshape(-1, D)
    return g


def group_sum(units: np.ndarray, num_classes: int) -> np.ndarray:
    """(..., h*K) -> (..., K), class c owns units [c*h, (c+1)*h)."""
    return units.reshape(units.shape[:-1] + (num_classes, -1)).sum(-1)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(scores: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. scores."""
    scores = np.atleast_2d(scores)
    targets = np.atleast_1d(targets)
    p = softmax(scores.astype(np.float64))
    n = len(targets)
    loss = -np.log(np.maximum(p[np.arange(n), targets], 1e-300)).mean()
    d = p.copy()
    d[np.arange(n), targets] -= 1.0
    return float(loss), (d / n).astype(scores.dtype)


def dropout_mask(rng, shape, rate: float, dtype=np.float32) -> np.ndarray:
    """Inverted dropout: kept units are scaled by 1/(1-rate)."""
    if rate <= 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


@dataclass
class ForwardCache:
    x: np.ndarray
    pre: dict
    act: dict
    pool_index: dict
    pooled: np.ndarray
    mask: np.ndarray | None
    dropped: np.ndarray
    logits: np.ndarray


def forward(params: CnnParams, config: CnnConfig, x: np.ndarray, train: bool = False, rng=None,
            mask: np.ndarray | None = None):
    """Class scores for a batch (B, L, D) or a single sequence (L, D)."""
    single = x.ndim == 2
    if single:
        x = x[None]
    L = x.shape[1]
    if L < max(config.filter_widths):
        raise ShapeError(f"sequence length {L} is shorter than the widest filter")
    if x.shape[2] != config.embed_dim:
        raise ShapeError(f"embedding dim {x.shape[2]} != {config.embed_dim}")
    pre, act, pool_index, pooled = {}, {}, {}, []
    for w in config.filter_widths:
        z = conv_currents(x, params.conv(w))
        b = params.bias(conv_bias_key(w))
        if b is not None:
            z = z + b
        a = np.maximum(z, 0) if config.activation == "relu" else 1.0 / (1.0 + np.exp(-z))
        pre[w], act[w] = z, a
        if config.pooling == "avg":
            pooled.append(a.mean(axis=1))
        else:
            idx = a.argmax(axis=1)  # first maximal index on ties
            pool_index[w] = idx
            pooled.append(np.take_along_axis(a, idx[:, None, :], axis=1)[:, 0])
    pooled = np.concatenate(pooled, axis=-1)
    if train and config.dropout > 0:
        if mask is None:
            mask = dropout_mask(rng, pooled.shape, config.dropout, pooled.dtype)
        dropped = pooled * mask
    else:
        mask = None
        dropped = pooled
    logits = dropped @ params.fc.T
    if params.bias("fc_bias") is not None:
        logits = logits + params.bias("fc_bias")
    scores = group_sum(logits, config.num_classes)
    cache = ForwardCache(x, pre, act, pool_index, pooled, mask, dropped, logits)
    return (scores[0] if single else scores), cache


def backward(cache: ForwardCache, params: CnnParams, config: CnnConfig, d_scores: np.ndarray):
    """Gradients of every tensor in `params` and of the input embeddings."""
    d_scores = np.atleast_2d(d_scores)
    B = cache.x.shape[0]
    if d_scores.shape != (B, config.num_classes):
        raise ShapeError(f"d_scores shape {d_scores.shape} != {(B, config.num_classes)}")
    grads = {}
    d_logits = np.repeat(d_scores, config.neurons_per_class, axis=-1)
    grads["fc"] = d_logits.T @ cache.dropped
    if "fc_bias" in params.tensors:
        grads["fc_bias"] = d_logits.sum(0)
    d_pooled = d_logits @ params.fc
    if cache.mask is not None:
        d_pooled = d_pooled * cache.mask
    F = config.feature_maps
    L = cache.x.shape[1]
    dx = np.zeros_like(cache.x)
    for i, w in enumerate(config.filter_widths):
        dp = d_pooled[:, i * F:(i + 1) * F]
        z, a = cache.pre[w], cache.act[w]
        P = z.shape[1]
        if config.pooling == "avg":
            da = np.broadcast_to(dp[:, None, :] / P, z.shape)
        else:
            da = np.zeros_like(z)
            np.put_along_axis(da, cache.pool_index[w][:, None, :], dp[:, None, :], axis=1)
        if config.activation == "relu":
            dz = da * (z > 0)
        else:
            dz = da * a * (1 - a)
        grads[conv_key(w)] = conv_kernel_grad(cache.x, dz, w)
        if conv_bias_key(w) in params.tensors:
            grads[conv_bias_key(w)] = dz.sum(axis=(0, 1))
        dx += conv_input_grad(dz, params.conv(w), L)
    return grads, dx


def predict(params: CnnParams, config: CnnConfig, x: np.ndarray):
    scores, _ = forward(params, config, x)
    return np.argmax(scores, axis=-1)  # argmax returns the lowest index on ties


def batch_scores(params, config, table: EmbeddingTable, tokens: np.ndarray, batch_size: int = 256):
    out = []
    for i in range(0, len(tokens), batch_size):
        s, _ = forward(params, config, table.lookup(tokens[i:i + batch_size]))
        out.append(s)
    return np.concatenate(out) if out else np.zeros((0, config.num_classes))


def accuracy(params, config, table, data: Dataset) -> float:
    if not len(data):
        return float("nan")
    pred = batch_scores(params, config, table, data.token_matrix()).argmax(-1)
    return float((pred == data.labels).mean())


@dataclass(frozen=True)
class AnnTrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    train_embeddings: bool = True


def train_ann(config: CnnConfig, params: CnnParams, train: Dataset, table: EmbeddingTable,
              opts: AnnTrainConfig, val: Dataset | None = None, report=None):
    """Mini-batch Adam on softmax cross-entropy; returns (params, table, history)."""
    if not len(train):
        raise TrainingError("empty training set")
    params = params.copy()
    table = EmbeddingTable(table.matrix.copy(), table.stats, table.trainable)
    tokens, labels = train.token_matrix(), train.labels
    opt = Adam(opts.lr)
    history = []
    for epoch in range(1, opts.epochs + 1):
        rng = np.random.default_rng([opts.seed, epoch])
        order = rng.permutation(len(tokens))
        losses = []
        for start in range(0, len(order), opts.batch_size):
            idx = order[start:start + opts.batch_size]
            tok = tokens[idx]
            x = table.lookup(tok)
            scores, cache = forward(params, config, x, train=True, rng=rng)
            loss, d_scores = cross_entropy(scores, labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {start // opts.batch_size}")
            grads, dx = backward(cache, params, config, d_scores)
            opt.step(params.tensors, grads)
            if opts.train_embeddings and table.trainable:
                rows = np.unique(tok)
                rows = rows[rows != PAD_ID]
                g_emb = np.zeros_like(table.matrix)
                np.add.at(g_emb, tok.ravel(), dx.reshape(-1, dx.shape[-1]))
                emb = {"embeddings": table.matrix}
                opt.step(emb, {"embeddings": g_emb}, rows={"embeddings": rows})
                table = clip01(table)
            losses.append(loss)
        rec = {"epoch": epoch, "loss": float(np.mean(losses)),
               "train_acc": accuracy(params, config, table, train)}
        if val is not None and len(val):
            rec["val_acc"] = accuracy(params, config, table, val)
        history.append(rec)
        if report:
            report(rec)
        log.info("ann epoch %d loss %.4f", epoch, rec["loss"])
    return params, table, history
