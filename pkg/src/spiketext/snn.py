"""Leaky integrate-and-fire network converted from a tailored TextCNN.

Layer order per time step: spike input -> conv banks (LIF) -> average pool over
positions (real-valued currents) -> optional dropout mask -> FC readout (LIF).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .ann import CnnConfig, CnnParams, conv_currents, conv_key, forward as ann_forward, group_sum
from .corpus import Dataset
from .embedding import EmbeddingTable


class ConversionError(ValueError):
    pass


@dataclass(frozen=True)
class LifConfig:
    beta: float = 1.0
    threshold: float = 1.0
    steps: int = 50
    slope: float = 25.0

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.slope < 0:
            raise ValueError(f"slope must be >= 0, got {self.slope}")

    def to_record(self) -> dict:
        return {f"lif_{f.name}": getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_record(cls, rec: dict) -> "LifConfig":
        return cls(**{f.name: rec[f"lif_{f.name}"] for f in fields(cls) if f"lif_{f.name}" in rec})


@dataclass
class LifState:
    potential: np.ndarray
    spikes: np.ndarray

    @classmethod
    def zeros(cls, shape, dtype=np.float64) -> "LifState":
        return cls(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype))


@dataclass
class SnnModel:
    params: CnnParams
    config: CnnConfig
    lif: LifConfig
    scale_factors: tuple = ()

    def with_lif(self, **kw) -> "SnnModel":
        return replace(self, lif=replace(self.lif, **kw))


@dataclass
class StepOutput:
    out_spikes: np.ndarray  # (T, B, h*K)
    class_counts: np.ndarray  # (T, B, K) per-step pooled output spikes
    conv_spike_counts: dict  # width -> (B, P, F) total spikes over T
    input_rate: float
    record: dict = field(default_factory=dict)

    @property
    def totals(self) -> np.ndarray:
        return self.class_counts.sum(axis=0)


def heaviside(u: np.ndarray, threshold: float) -> np.ndarray:
    return (u >= threshold).astype(u.dtype)


def fast_sigmoid(x: np.ndarray, slope: float) -> np.ndarray:
    return x / (1.0 + slope * np.abs(x))


def relaxed_spike(centering: str = "threshold"):
    """Smooth stand-in for the Heaviside, used only by the gradient harness."""
    def fn(u, lif: LifConfig):
        centre = lif.threshold if centering == "threshold" else 0.0
        return fast_sigmoid(u - centre, lif.slope)
    return fn


def lif_step(state: LifState, current: np.ndarray, lif: LifConfig, spike_fn=None):
    """U_t = I_t + beta * U_{t-1} - S_{t-1} * U_thr; S_t = [U_t >= U_thr]."""
    current = np.asarray(current)
    if not np.all(np.isfinite(current)):
        raise ValueError("non-finite input current")
    if current.shape != state.potential.shape:
        raise ValueError(f"current shape {current.shape} != state shape {state.potential.shape}")
    u = current + lif.beta * state.potential - state.spikes * lif.threshold
    s = heaviside(u, lif.threshold) if spike_fn is None else spike_fn(u, lif)
    return s, LifState(u, s)


def run_lif(currents: np.ndarray, lif: LifConfig, spike_fn=None):
    """Simulate a layer over a (T, ...) current sequence from zero state.

    Returns (spikes, potentials), both shaped like `currents`.
    """
    spikes = np.empty_like(currents)
    pots = np.empty_like(currents)
    u = np.zeros(currents.shape[1:], dtype=currents.dtype)
    s = np.zeros_like(u)
    beta, thr = lif.beta, lif.threshold
    for t in range(currents.shape[0]):
        u = currents[t] + beta * u - s * thr
        s = (u >= thr).astype(u.dtype) if spike_fn is None else spike_fn(u, lif)
        pots[t] = u
        spikes[t] = s
    return spikes, pots


def convert(params: CnnParams, config: CnnConfig, lif: LifConfig | None = None) -> SnnModel:
    if params.has_bias or config.use_bias:
        raise ConversionError("not convertible: network has biases")
    if config.pooling != "avg":
        raise ConversionError("not convertible: max pooling has no spiking counterpart")
    if config.activation != "relu":
        raise ConversionError("not convertible: only ReLU units map to LIF neurons")
    return SnnModel(params.copy(), config, lif or LifConfig())


def forward_spiking(model: SnnModel, spikes: np.ndarray, mask: np.ndarray | None = None,
                    record: bool = False, spike_fn=None) -> StepOutput:
    """Simulate a spike-train batch (T, B, L, D) or a single train (T, L, D).

    `mask` (B, F*|widths|) multiplies the pooled currents at every step.
    `record` keeps potentials and spikes of every layer for backpropagation.
    """
    single = spikes.ndim == 3
    if single:
        spikes = spikes[:, None]
    cfg, lif, p = model.config, model.lif, model.params
    T, B, L, D = spikes.shape
    if D != cfg.embed_dim or L < max(cfg.filter_widths):
        raise ValueError(f"spike train shape {spikes.shape} does not fit the model")
    dtype = p.dtype
    spikes = spikes.astype(dtype, copy=False)
    rec = {}
    pooled, counts = [], {}
    for w in cfg.filter_widths:
        cur = conv_currents(spikes, p.conv(w))  # (T, B, P, F)
        s, u = run_lif(cur, lif, spike_fn)
        counts[w] = s.sum(axis=0)
        pooled.append(s.mean(axis=2))
        if record:
            rec[("conv", w)] = (u, s)
    pooled = np.concatenate(pooled, axis=-1)  # (T, B, F*|widths|)
    if mask is not None:
        pooled = pooled * mask
    out_cur = pooled @ p.fc.T
    out_s, out_u = run_lif(out_cur, lif, spike_fn)
    if record:
        rec["pooled"] = pooled
        rec["out"] = (out_u, out_s)
        rec["input"] = spikes
        rec["mask"] = mask
    class_counts = group_sum(out_s, cfg.num_classes)
    out = StepOutput(out_s, class_counts, counts, float(spikes.mean()) if spikes.size else 0.0, rec)
    if single:
        out.out_spikes = out.out_spikes[:, 0]
        out.class_counts = out.class_counts[:, 0]
        out.conv_spike_counts = {w: c[0] for w, c in counts.items()}
    return out


def readout(out: StepOutput) -> np.ndarray:
    """Class with the most output spikes over the run; lowest index wins ties."""
    return np.argmax(out.totals, axis=-1)


def positive_input_bound(weights: np.ndarray) -> float:
    """Largest pre-activation any unit can reach with every input at 1.

    `weights` has one row per unit (trailing axes are that unit's fan-in).
    """
    rows = weights.reshape(weights.shape[0], -1)
    return float(np.clip(rows, 0, None).sum(axis=1).max())


def normalize_model_based(model: SnnModel) -> SnnModel:
    p = model.params.copy()
    cfg = model.config
    conv_lambda = max(positive_input_bound(p.conv(w)) for w in cfg.filter_widths)
    fc_lambda = positive_input_bound(p.fc)
    factors = []
    for lam, keys in ((conv_lambda, [conv_key(w) for w in cfg.filter_widths]), (fc_lambda, ["fc"])):
        scale = max(lam, 1.0)
        for k in keys:
            p.tensors[k] = (p.tensors[k] / scale).astype(p.tensors[k].dtype)
        factors.append(lam)
    return replace(model, params=p, scale_factors=tuple(factors))


def max_activations(params: CnnParams, config: CnnConfig, table: EmbeddingTable, data: Dataset,
                    batch_size: int = 256) -> tuple[float, float]:
    """Largest conv (post-ReLU) and readout activation of the ANN over `data`."""
    if not len(data):
        raise ValueError("empty training set")
    tokens = data.token_matrix()
    conv_max, fc_max = 0.0, 0.0
    for i in range(0, len(tokens), batch_size):
        _, cache = ann_forward(params, config, table.lookup(tokens[i:i + batch_size]))
        conv_max = max(conv_max, max(float(a.max()) for a in cache.act.values()))
        fc_max = max(fc_max, float(cache.logits.max()))
    return conv_max, fc_max


def normalize_data_based(model: SnnModel, ann_params: CnnParams, train: Dataset,
                         table: EmbeddingTable) -> SnnModel:
    cfg = model.config
    lambdas = max_activations(ann_params, cfg, table, train)
    p = model.params.copy()
    prev = 1.0
    for lam, keys in zip(lambdas, ([conv_key(w) for w in cfg.filter_widths], ["fc"])):
        lam_eff = max(lam, 1.0)
        for k in keys:
            p.tensors[k] = (p.tensors[k] * (prev / lam_eff)).astype(p.tensors[k].dtype)
        prev = lam_eff
    return replace(model, params=p, scale_factors=tuple(lambdas))
