"""Surrogate-gradient backpropagation through time for the converted network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .ann import CnnConfig, conv_key, conv_kernel_grad, dropout_mask, init_params, softmax
from .corpus import Dataset
from .embedding import EmbeddingTable
from .encoder import EVAL_STREAM, TRAIN_STREAM, encode_batch, stream_rng
from .optim import Adam
from .snn import LifConfig, SnnModel, convert, forward_spiking, readout, relaxed_spike

log = logging.getLogger(__name__)

DROPOUT_STREAM = 4


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SurrogateConfig:
    slope: float = 25.0
    centering: str = "threshold"

    def __post_init__(self):
        if self.slope < 0:
            raise ValueError("surrogate slope must be >= 0")
        if self.centering not in ("threshold", "raw"):
            raise ValueError(f"unknown centering {self.centering!r}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 50
    epochs: int = 5
    seed: int = 0
    dropout: float = 0.5
    mode: str = "finetune"
    centering: str = "threshold"
    val_trials: int = 1

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.mode not in ("finetune", "direct", "relaxed-check"):
            raise ValueError(f"unknown mode {self.mode!r}")


def surrogate_grad(u, lif: LifConfig, s: SurrogateConfig | None = None):
    """Derivative of the fast sigmoid, 1 / (1 + k|u - c|)^2."""
    s = s or SurrogateConfig(lif.slope)
    centre = lif.threshold if s.centering == "threshold" else 0.0
    return 1.0 / (1.0 + s.slope * np.abs(np.asarray(u) - centre)) ** 2


def loss_rate_ce(class_counts: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Per-step softmax cross-entropy on class spike counts, averaged over steps and batch.

    `class_counts` is (T, B, K) or (T, K). Returns the loss and its gradient
    with respect to `class_counts`.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    single = counts.ndim == 2
    if single:
        counts = counts[:, None]
    targets = np.atleast_1d(targets)
    T, N, K = counts.shape
    p = softmax(counts)
    picked = p[:, np.arange(N), targets]
    loss = -np.log(np.maximum(picked, 1e-300)).mean()
    grad = p
    grad[:, np.arange(N), targets] -= 1.0
    grad /= T * N
    if single:
        grad = grad[:, 0]
    return float(loss), grad


def lif_backward(potentials: np.ndarray, d_spikes: np.ndarray, lif: LifConfig, s: SurrogateConfig,
                 reset_grad: bool = False, layer: str = "") -> np.ndarray:
    """Reverse sweep through U_t = I_t + beta U_{t-1} - U_thr S_{t-1}.

    Returns dL/dI_t for every step. The membrane adjoint is carried backwards
    with dU_t/dU_{t-1} = beta; with `reset_grad` the reset path through
    S_{t-1} is differentiated as well (needed when the forward spike is smooth).
    """
    grads = np.empty_like(d_spikes)
    carry = np.zeros_like(d_spikes[0])
    beta, thr = lif.beta, lif.threshold
    for t in range(d_spikes.shape[0] - 1, -1, -1):
        sg = surrogate_grad(potentials[t], lif, s)
        ds = d_spikes[t] - thr * carry if reset_grad else d_spikes[t]
        g = sg * ds + beta * carry
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in layer {layer} at step {t}")
        grads[t] = g
        carry = g
    return grads


def bptt(model: SnnModel, out, d_counts: np.ndarray, s: SurrogateConfig | None = None,
         relaxed: bool = False) -> dict:
    """Weight gradients from a recorded forward pass and dL/d(class counts).

    The input spike trains receive no gradient: embeddings are fixed here.
    """
    rec = out.record
    if "out" not in rec:
        raise TrainingError("forward pass was not recorded")
    cfg, lif, p = model.config, model.lif, model.params
    s = s or SurrogateConfig(lif.slope)
    d_counts = np.asarray(d_counts, dtype=p.dtype)
    if d_counts.ndim == 2:
        d_counts = d_counts[:, None]
    T, B, _ = d_counts.shape
    d_out_spikes = np.repeat(d_counts, cfg.neurons_per_class, axis=-1)
    out_u, _ = rec["out"]
    d_out_cur = lif_backward(out_u, d_out_spikes, lif, s, relaxed, "fc")
    pooled = rec["pooled"]
    grads = {"fc": d_out_cur.reshape(-1, cfg.out_units).T @ pooled.reshape(-1, cfg.pooled_dim)}
    d_pooled = d_out_cur @ p.fc
    if rec.get("mask") is not None:
        d_pooled = d_pooled * rec["mask"]
    F = cfg.feature_maps
    x = rec["input"]
    for i, w in enumerate(cfg.filter_widths):
        u, _ = rec[("conv", w)]
        P = u.shape[2]
        d_conv_spikes = np.broadcast_to(d_pooled[:, :, None, i * F:(i + 1) * F] / P, u.shape)
        d_cur = lif_backward(u, d_conv_spikes, lif, s, relaxed, f"conv{w}")
        grads[conv_key(w)] = conv_kernel_grad(x, d_cur, w)
    return grads


def relaxed_loss(model: SnnModel, spikes: np.ndarray, targets, s: SurrogateConfig) -> float:
    out = forward_spiking(model, spikes, spike_fn=relaxed_spike(s.centering))
    return loss_rate_ce(out.class_counts, targets)[0]


def grad_check_relaxed(model: SnnModel, spikes: np.ndarray, targets, s: SurrogateConfig | None = None,
                       step: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between `bptt` and central differences of the smooth-spike loss.

    Runs in float64; the Heaviside is replaced by the fast sigmoid in the forward
    pass as well, so analytic and numerical gradients describe the same function.
    """
    s = s or SurrogateConfig(model.lif.slope)
    model = replace(model, params=model.params.copy(np.float64))
    spikes = np.asarray(spikes, dtype=np.float64)
    out = forward_spiking(model, spikes, record=True, spike_fn=relaxed_spike(s.centering))
    _, d_counts = loss_rate_ce(out.class_counts, targets)
    analytic = bptt(model, out, d_counts, s, relaxed=True)
    worst = 0.0
    for name, tensor in model.params.tensors.items():
        flat = tensor.reshape(-1)
        ga = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp = relaxed_loss(model, spikes, targets, s)
            flat[j] = orig - step
            lm = relaxed_loss(model, spikes, targets, s)
            flat[j] = orig
            gn = (lp - lm) / (2 * step)
            err = abs(ga[j] - gn) / max(abs(ga[j]), abs(gn), floor)
            worst = max(worst, err)
    return worst


def evaluate(model: SnnModel, data: Dataset, table: EmbeddingTable, trials: int = 1, seed: int = 0,
             batch_size: int = 100) -> tuple[float, float, list]:
    """Accuracy mean and std over `trials` fresh Poisson encodings."""
    tokens, labels = data.token_matrix(), data.labels
    accs = []
    for trial in range(trials):
        correct = 0
        for i in range(0, len(tokens), batch_size):
            ids = np.arange(i, min(i + batch_size, len(tokens)))
            spikes = encode_batch(table.lookup(tokens[ids]), model.lif.steps, seed, EVAL_STREAM,
                                  trial, ids, model.params.dtype)
            correct += int((readout(forward_spiking(model, spikes)) == labels[ids]).sum())
        accs.append(correct / max(len(tokens), 1))
    return float(np.mean(accs)), float(np.std(accs)), accs


def example_masks(seed: int, epoch: int, ids, width: int, rate: float, dtype) -> np.ndarray:
    return np.stack([dropout_mask(stream_rng(seed, DROPOUT_STREAM, epoch, i), (width,), rate, dtype)
                     for i in ids])


def finetune(model: SnnModel, train: Dataset, table: EmbeddingTable, config: TrainConfig,
             val: Dataset | None = None, report=None):
    """BPTT fine-tuning with fresh spike trains per batch; keeps the best-validation epoch.

    Returns (model, history).
    """
    if not len(train):
        raise TrainingError("empty training set")
    s = SurrogateConfig(model.lif.slope, config.centering)
    spike_fn = relaxed_spike(config.centering) if config.mode == "relaxed-check" else None
    model = replace(model, params=model.params.copy())
    params = model.params.tensors
    dtype = model.params.dtype
    tokens, labels = train.token_matrix(), train.labels
    opt = Adam(config.lr)
    history = []
    best = (-1.0, None)
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(tokens))
        losses, correct = [], 0
        for start in range(0, len(order), config.batch_size):
            ids = order[start:start + config.batch_size]
            spikes = encode_batch(table.lookup(tokens[ids]), model.lif.steps, config.seed,
                                  TRAIN_STREAM, epoch, ids, dtype)
            mask = None
            if config.dropout > 0:
                mask = example_masks(config.seed, epoch, ids, model.config.pooled_dim,
                                     config.dropout, dtype)
            out = forward_spiking(model, spikes, mask=mask, record=True, spike_fn=spike_fn)
            loss, d_counts = loss_rate_ce(out.class_counts, labels[ids])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            grads = bptt(model, out, d_counts, s, relaxed=spike_fn is not None)
            opt.step(params, grads)
            losses.append(loss * len(ids))
            correct += int((readout(out) == labels[ids]).sum())
        rec = {"epoch": epoch, "loss": float(np.sum(losses) / len(order)),
               "train_acc": correct / len(order)}
        if val is not None and len(val):
            rec["val_acc"] = evaluate(model, val, table, config.val_trials, config.seed)[0]
            if rec["val_acc"] > best[0]:
                best = (rec["val_acc"], model.params.copy())
        history.append(rec)
        if report:
            report(rec)
        log.info("snn epoch %d loss %.4f", epoch, rec["loss"])
    if best[1] is not None:
        model = replace(model, params=best[1])
    return model, history


def train_direct(config: CnnConfig, lif: LifConfig, train: Dataset, table: EmbeddingTable,
                 opts: TrainConfig, val: Dataset | None = None, report=None):
    """Same loop as `finetune`, starting from random weights instead of converted ones."""
    params = init_params(config, opts.seed)
    model = convert(params, config, lif)
    return finetune(model, train, table, replace(opts, mode="direct"), val, report)
