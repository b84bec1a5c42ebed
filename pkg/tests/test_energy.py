import numpy as np
import pytest

from spiketext import ann, energy, snn
from spiketext.ann import CnnConfig, CnnParams
from spiketext.corpus import Dataset, Example
from spiketext.embedding import EmbeddingStats, EmbeddingTable
from spiketext.energy import EnergyModel


def test_conv_flops_hand_example():
    cfg = CnnConfig(embed_dim=3, filter_widths=(2,), feature_maps=1)
    assert energy.count_flops(cfg, 4)["conv2"] == 36


def test_flops_layout():
    cfg = CnnConfig(num_classes=2, embed_dim=3, filter_widths=(2, 3), feature_maps=4,
                    neurons_per_class=5)
    flops = energy.count_flops(cfg, 6)
    assert list(flops) == ["conv2", "conv3", "pool2", "pool3", "fc"]
    assert flops["pool2"] == 5 * 4
    assert flops["fc"] == 2 * 8 * 10


def test_flops_need_long_enough_input():
    with pytest.raises(ValueError):
        energy.count_flops(CnnConfig(embed_dim=3), 4)


def test_conv_flops_linear_in_feature_maps():
    a = energy.count_flops(CnnConfig(embed_dim=5, feature_maps=10), 20)
    b = energy.count_flops(CnnConfig(embed_dim=5, feature_maps=20), 20)
    for w in (3, 4, 5):
        assert b[f"conv{w}"] == 2 * a[f"conv{w}"]


def test_zero_sops_zero_energy():
    report = energy.estimate_energy(1e9, 0.0)
    assert report.snn_mj == 0.0 and report.reduction == float("inf")


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        energy.estimate_energy(-1.0, 1.0)


def test_energy_constants_row():
    report = energy.estimate_energy(0.33e9, 3.72e9)
    assert report.ann_mj == pytest.approx(4.125)
    assert report.snn_mj == pytest.approx(0.28644)


def test_custom_energy_model():
    report = energy.estimate_energy(1e9, 1e9, EnergyModel(1e-12, 2e-12))
    assert (report.ann_mj, report.snn_mj) == pytest.approx((2.0, 1.0))


def test_sops_linear_in_steps():
    flops = {"conv3": 100.0, "fc": 10.0}
    gamma = {"conv3": 0.2, "fc": 0.1}
    a = energy.synaptic_ops(flops, gamma, 10)
    b = energy.synaptic_ops(flops, gamma, 30)
    assert a == {"conv3": 200.0, "fc": 10.0}
    for k in flops:
        assert b[k] == pytest.approx(3 * a[k])


def _model():
    cfg = CnnConfig(num_classes=2, embed_dim=2, filter_widths=(1, 2), feature_maps=2,
                    neurons_per_class=2)
    params = ann.init_params(cfg, seed=0, dtype=np.float64)
    params.tensors = {k: np.abs(v) * 3 for k, v in params.tensors.items()}
    return snn.convert(params, cfg, snn.LifConfig(steps=10))


def _data(n=4, L=3):
    return Dataset(tuple(Example(i % 2, "", (1,) * L) for i in range(n)), 2)


def test_silent_inputs_give_zero_rates():
    table = EmbeddingTable(np.zeros((2, 2)), EmbeddingStats(0, 1))
    stats = energy.measure_firing_rates(_model(), _data(), table)
    assert all(v == 0.0 for v in stats.gamma.values())
    assert stats.overall_active == 0.0


def test_saturated_inputs_give_unit_input_rate():
    table = EmbeddingTable(np.array([[0.0, 0.0], [1.0, 1.0]]), EmbeddingStats(0, 1))
    stats = energy.measure_firing_rates(_model(), _data(), table, trials=2)
    assert stats.gamma["conv1"] == 1.0 and stats.gamma["conv2"] == 1.0
    assert 0 < stats.gamma["fc"] <= 1
    assert 0 < stats.overall_active <= 1
    assert stats.active_per_step["all"] <= stats.active_per_run["all"]
    assert stats.examples == 8


def test_report_table_has_totals():
    cfg = CnnConfig(embed_dim=2, filter_widths=(1,), feature_maps=1, neurons_per_class=1)
    flops = energy.count_flops(cfg, 3)
    gamma = {k: 0.5 for k in flops}
    report = energy.estimate_energy(flops, energy.synaptic_ops(flops, gamma, 4), gamma=gamma)
    text = report.to_table()
    assert text.splitlines()[0].split("\t")[0] == "layer"
    assert text.splitlines()[-2].startswith("total")
    assert report.snn_sops == pytest.approx(2 * report.ann_flops)
