"""Theoretical energy accounting: FLOPs for the ANN, synaptic operations for the SNN."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ann import CnnConfig
from .corpus import Dataset
from .embedding import EmbeddingTable
from .encoder import STATS_STREAM, encode_batch
from .snn import SnnModel, forward_spiking

J_TO_MJ = 1e3


@dataclass(frozen=True)
class EnergyModel:
    joules_per_sop: float = 77e-15
    joules_per_flop: float = 12.5e-12


def count_flops(config: CnnConfig, length: int) -> dict:
    """Per-layer FLOPs of one forward pass; a multiply-accumulate counts as 2."""
    if length < max(config.filter_widths):
        raise ValueError(f"sequence length {length} is shorter than the widest filter")
    F, D = config.feature_maps, config.embed_dim
    flops = {}
    for w in config.filter_widths:
        flops[f"conv{w}"] = (length - w + 1) * F * 2 * w * D
    for w in config.filter_widths:
        flops[f"pool{w}"] = (length - w + 1) * F
    flops["fc"] = 2 * config.pooled_dim * config.out_units
    return flops


def synaptic_ops(flops: dict, gamma: dict, steps: int) -> dict:
    return {k: steps * gamma[k] * f for k, f in flops.items()}


@dataclass
class FiringStats:
    gamma: dict
    active_per_run: dict
    active_per_step: dict
    examples: int = 0

    @property
    def overall_active(self) -> float:
        return self.active_per_run["all"]


def measure_firing_rates(model: SnnModel, data: Dataset, table: EmbeddingTable, trials: int = 1,
                         seed: int = 0, batch_size: int = 100) -> FiringStats:
    """Input firing rate of every layer and the share of neurons that fire at all.

    A neuron counts as active in a run if it emits at least one spike over
    the T steps; the per-step variant is the mean fraction firing per step.
    """
    if not len(data):
        raise ValueError("empty dataset")
    cfg = model.config
    T = model.lif.steps
    tokens = data.token_matrix()
    sums = {}

    def add(key, value):
        sums[key] = sums.get(key, 0.0) + value

    n_runs = 0
    for trial in range(trials):
        for i in range(0, len(tokens), batch_size):
            ids = np.arange(i, min(i + batch_size, len(tokens)))
            spikes = encode_batch(table.lookup(tokens[ids]), T, seed, STATS_STREAM, trial, ids,
                                  model.params.dtype)
            out = forward_spiking(model, spikes)
            B = len(ids)
            n_runs += B
            in_rate = spikes.mean(axis=(0, 2, 3))  # per example
            conv_active, conv_rate, conv_units = 0.0, 0.0, 0
            for w in cfg.filter_widths:
                c = out.conv_spike_counts[w]  # (B, P, F)
                add(f"gamma:conv{w}", in_rate.sum())
                add(f"gamma:pool{w}", (c.reshape(B, -1).mean(axis=1) / T).sum())
                n = c[0].size
                conv_units += n
                conv_active += (c > 0).reshape(B, -1).sum()
                conv_rate += c.reshape(B, -1).sum() / T
            add("gamma:fc", conv_rate / conv_units)  # pooled input == mean conv spike rate
            out_counts = out.out_spikes.sum(axis=0)  # (B, h*K)
            add("run:conv", conv_active / conv_units)
            add("step:conv", conv_rate / conv_units)
            add("run:fc", (out_counts > 0).mean(axis=1).sum())
            add("step:fc", (out_counts / T).mean(axis=1).sum())
            total_units = conv_units + cfg.out_units
            add("run:all", (conv_active + (out_counts > 0).sum()) / total_units)
            add("step:all", (conv_rate + out_counts.sum() / T) / total_units)
    avg = {k: float(v / n_runs) for k, v in sums.items()}
    pick = lambda prefix: {k.split(":", 1)[1]: v for k, v in avg.items() if k.startswith(prefix)}
    return FiringStats(pick("gamma:"), pick("run:"), pick("step:"), n_runs)


@dataclass
class EnergyReport:
    rows: list = field(default_factory=list)
    ann_flops: float = 0.0
    snn_sops: float = 0.0
    ann_mj: float = 0.0
    snn_mj: float = 0.0

    @property
    def reduction(self) -> float:
        return self.ann_mj / self.snn_mj if self.snn_mj > 0 else float("inf")

    def to_table(self, sep: str = "\t") -> str:
        lines = [sep.join(["layer", "flops", "gamma", "sops", "ann_mj", "snn_mj"])]
        for r in self.rows:
            lines.append(sep.join([r["layer"], f"{r['flops']:.6g}", f"{r['gamma']:.6g}",
                                   f"{r['sops']:.6g}", f"{r['ann_mj']:.6g}", f"{r['snn_mj']:.6g}"]))
        lines.append(sep.join(["total", f"{self.ann_flops:.6g}", "", f"{self.snn_sops:.6g}",
                               f"{self.ann_mj:.6g}", f"{self.snn_mj:.6g}"]))
        lines.append(sep.join(["reduction", "", "", "", "", f"{self.reduction:.6g}"]))
        return "\n".join(lines) + "\n"


def estimate_energy(flops, sops, model: EnergyModel | None = None,
                    gamma: dict | None = None) -> EnergyReport:
    """Millijoules for the ANN (per FLOP) and SNN (per SOP).

    `flops` and `sops` are either scalars (totals) or per-layer dicts.
    """
    model = model or EnergyModel()
    if not isinstance(flops, dict):
        flops, sops = {"total": float(flops)}, {"total": float(sops)}
    if any(v < 0 for v in flops.values()) or any(v < 0 for v in sops.values()):
        raise ValueError("operation counts must be non-negative")
    report = EnergyReport()
    for layer, f in flops.items():
        s = sops.get(layer, 0.0)
        report.rows.append({
            "layer": layer, "flops": f, "gamma": (gamma or {}).get(layer, float("nan")), "sops": s,
            "ann_mj": f * model.joules_per_flop * J_TO_MJ, "snn_mj": s * model.joules_per_sop * J_TO_MJ,
        })
    report.ann_flops = float(sum(flops.values()))
    report.snn_sops = float(sum(sops.values()))
    report.ann_mj = report.ann_flops * model.joules_per_flop * J_TO_MJ
    report.snn_mj = report.snn_sops * model.joules_per_sop * J_TO_MJ
    return report
