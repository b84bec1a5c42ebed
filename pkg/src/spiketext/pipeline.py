"""End-to-end conversion + fine-tuning pipeline and hyper-parameter sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import ann, checkpoint, corpus, embedding, energy, snn, synthetic, training
from .config import PipelineConfig

log = logging.getLogger(__name__)

ARTIFACTS = {
    "prepare": "prepared.ckpt",
    "ann": "ann.ckpt",
    "convert": "snn.ckpt",
    "finetune": "snn_ft.ckpt",
    "eval": "eval.txt",
    "energy": "energy.tsv",
}
SPLITS = ("train", "val", "test")
SYNTHETIC = "@synthetic"


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage


@dataclass
class Prepared:
    splits: dict
    table: embedding.EmbeddingTable
    num_classes: int
    max_len: int
    vocab: corpus.Vocabulary | None = None


def format_record(rec: dict) -> str:
    def fmt(v):
        return f"{v:.6f}" if isinstance(v, float) else checkpoint.format_value(v)
    return " ".join(f"{k}={fmt(v)}" for k, v in rec.items())


class MetricsLog:
    """Line-oriented key=value records, mirrored to a file."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.lines = []

    def __call__(self, rec: dict, **extra):
        line = format_record({**extra, **rec})
        self.lines.append(line)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        log.info(line)

    def stage(self, name):
        return lambda rec: self(rec, stage=name)


# ---------------------------------------------------------------- prepare

def resolve_inputs(cfg: PipelineConfig) -> tuple[str, str]:
    """`@synthetic` stands for the bundled desk-scale corpus / vectors."""
    bundled = synthetic.bundled_paths()
    data = str(bundled[0]) if cfg.data == SYNTHETIC else cfg.data
    vectors = str(bundled[1]) if cfg.embeddings == SYNTHETIC else cfg.embeddings
    return data, vectors


def prepare(cfg: PipelineConfig) -> Prepared:
    data_path, vectors_path = resolve_inputs(cfg)
    mode = corpus.mode_for_lang(cfg.lang)
    full = corpus.load_dataset(data_path, mode)
    train, test = corpus.split(full, cfg.test_frac, cfg.seed)
    if cfg.val_frac > 0:
        train, val = corpus.split(train, cfg.val_frac, cfg.seed + 1)
    else:
        val = replace(train, examples=())
    vocab = corpus.build_vocab(train, cfg.min_freq)
    max_len = cfg.max_len or corpus.default_max_len(train)
    max_len = max(max_len, max(cfg.filter_widths))
    splits = {name: corpus.encode_dataset(d, vocab, max_len)
              for name, d in zip(SPLITS, (train, val, test))}
    if cfg.random_embeddings:
        raw = embedding.random_embeddings(len(vocab), cfg.dim, cfg.seed)
    else:
        raw = embedding.load_embeddings(vectors_path, vocab, cfg.dim, cfg.seed)
    table = embedding.normalize_shift(raw)
    return Prepared(splits, table, full.num_classes, max_len, vocab)


def save_prepared(path, prep: Prepared):
    tensors = {"embeddings": prep.table.matrix}
    for name, d in prep.splits.items():
        tensors[f"{name}_tokens"] = d.token_matrix().reshape(len(d), prep.max_len).astype(np.float32)
        tensors[f"{name}_labels"] = d.labels.astype(np.float32)
    header = {"kind": "prepared", "num_classes": prep.num_classes, "max_len": prep.max_len,
              "stats_mean": prep.table.stats.mean, "stats_std": prep.table.stats.std}
    checkpoint.save_container(path, header, tensors)
    if prep.vocab is not None:
        prep.vocab.save(Path(path).with_suffix(".vocab"))


def load_prepared(path) -> Prepared:
    header, t = checkpoint.load_container(path)
    if header.get("kind") != "prepared":
        raise checkpoint.CheckpointError(f"{path}: not a prepared-data container")
    k = int(header["num_classes"])
    splits = {}
    for name in SPLITS:
        toks = t[f"{name}_tokens"].astype(np.int64)
        labels = t[f"{name}_labels"].astype(np.int64)
        exs = tuple(corpus.Example(int(y), "", tuple(int(i) for i in row)) for row, y in zip(toks, labels))
        splits[name] = corpus.Dataset(exs, k)
    stats = embedding.EmbeddingStats(float(header["stats_mean"]), float(header["stats_std"]))
    table = embedding.EmbeddingTable(t["embeddings"], stats)
    return Prepared(splits, table, k, int(header["max_len"]))


# ---------------------------------------------------------------- stages

def train_ann_stage(cfg: PipelineConfig, prep: Prepared, report=None):
    config = cfg.cnn_config(prep.num_classes)
    if prep.table.dim != config.embed_dim:
        raise ValueError(f"embedding dim {prep.table.dim} != configured dim {config.embed_dim}")
    params = ann.init_params(config, cfg.seed)
    params, table, history = ann.train_ann(config, params, prep.splits["train"], prep.table,
                                           cfg.ann_train_config(), prep.splits["val"], report)
    return params, config, table, history


def convert_stage(cfg, params, config, table, train):
    model = snn.convert(params, config, cfg.lif_config())
    if cfg.normalize == "model":
        model = snn.normalize_model_based(model)
    elif cfg.normalize == "data":
        model = snn.normalize_data_based(model, params, train, table)
    return model


def energy_stage(params_cfg, model, data, table, trials, seed, max_len):
    flops = energy.count_flops(params_cfg, max_len)
    stats = energy.measure_firing_rates(model, data, table, trials, seed)
    sops = energy.synaptic_ops(flops, stats.gamma, model.lif.steps)
    return energy.estimate_energy(flops, sops, gamma=stats.gamma), stats


def load_snn_with_table(path):
    model, header = checkpoint.load_snn(path)
    table = embedding.EmbeddingTable(model.params.tensors.pop("embeddings"),
                                     embedding.EmbeddingStats(0.0, 1.0))
    return model, table, header


def load_ann_with_table(path):
    params, config, header = checkpoint.load_ann(path)
    table = embedding.EmbeddingTable(params.tensors.pop("embeddings"), embedding.EmbeddingStats(0.0, 1.0))
    return params, config, table, header


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict:
    """prepare -> ann-train -> convert -> finetune -> eval -> energy-report.

    Existing stage artifacts in `cfg.out` are reused unless `force`, so a
    partially deleted run directory is rebuilt from the first missing stage.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in ARTIFACTS.items()}
    if force:
        for p in list(paths.values()) + [out / "metrics.log", out / "summary.txt"]:
            p.unlink(missing_ok=True)
    (out / "config.txt").write_text(cfg.dump(), encoding="utf-8")
    metrics = MetricsLog(out / "metrics.log")
    stage = "prepare"
    try:
        if not paths["prepare"].exists():
            save_prepared(paths["prepare"], prepare(cfg))
        prep = load_prepared(paths["prepare"])
        train, val, test = (prep.splits[s] for s in SPLITS)

        stage = "ann-train"
        if not paths["ann"].exists():
            params, config, table, _ = train_ann_stage(cfg, prep, metrics.stage("ann-train"))
            checkpoint.save_ann(paths["ann"], params, config, extra_tensors={"embeddings": table.matrix})
        params, config, table, _ = load_ann_with_table(paths["ann"])

        stage = "convert"
        if not paths["convert"].exists():
            model = convert_stage(cfg, params, config, table, train)
            checkpoint.save_snn(paths["convert"], model, extra_tensors={"embeddings": table.matrix})
        converted, table, _ = load_snn_with_table(paths["convert"])

        stage = "finetune"
        if not paths["finetune"].exists():
            if cfg.skip_finetune:
                tuned = converted
            else:
                tuned, _ = training.finetune(converted, train, table, cfg.snn_train_config(), val,
                                             metrics.stage("finetune"))
            checkpoint.save_snn(paths["finetune"], tuned, extra_tensors={"embeddings": table.matrix})
        tuned, table, _ = load_snn_with_table(paths["finetune"])

        stage = "eval"
        summary = {"ann_acc": ann.accuracy(params, config, table, test)}
        for name, model in (("conv_snn", converted), ("ft_snn", tuned)):
            mean, std, _ = training.evaluate(model, test, table, cfg.trials, cfg.seed)
            summary[f"{name}_acc"], summary[f"{name}_std"] = mean, std
        summary["finetuned"] = not cfg.skip_finetune
        paths["eval"].write_text(format_record(summary) + "\n", encoding="utf-8")

        stage = "energy-report"
        report, stats = energy_stage(config, tuned, test, table, 1, cfg.seed, prep.max_len)
        paths["energy"].write_text(report.to_table(), encoding="utf-8")
        summary.update(ann_mj=report.ann_mj, snn_mj=report.snn_mj, reduction=report.reduction,
                       active_proportion=stats.overall_active)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        raise StageError(stage, exc) from exc
    (out / "summary.txt").write_text(format_record(summary) + "\n" + summary_table(summary),
                                     encoding="utf-8")
    return summary


def summary_table(summary: dict) -> str:
    rows = [("Tailored TextCNN", f"{100 * summary['ann_acc']:.2f}"),
            ("Conv SNN", f"{100 * summary['conv_snn_acc']:.2f} +/- {100 * summary['conv_snn_std']:.2f}"),
            ("Conv SNN + FT" if summary["finetuned"] else "Conv SNN (no FT)",
             f"{100 * summary['ft_snn_acc']:.2f} +/- {100 * summary['ft_snn_std']:.2f}")]
    width = max(len(r[0]) for r in rows)
    lines = [f"{'model':<{width}}  accuracy (%)"]
    lines += [f"{name:<{width}}  {acc}" for name, acc in rows]
    lines.append(f"{'energy (mJ)':<{width}}  ANN {summary['ann_mj']:.6g}  SNN {summary['snn_mj']:.6g}"
                 f"  ({summary['reduction']:.2f}x)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- sweeps

SWEEP_PARAMS = {"h": "neurons_per_class", "beta": "beta", "u_thr": "threshold", "T": "steps"}


def sweep(cfg: PipelineConfig, parameter: str, values, trials: int | None = None) -> list[dict]:
    """Accuracy and activity at each value of one hyper-parameter.

    `h` changes the architecture, so each value retrains from the prepared
    data; the other parameters re-evaluate the fine-tuned model of `cfg.out`.
    """
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"parameter must be one of {sorted(SWEEP_PARAMS)}")
    values = list(values)
    if not values:
        raise ValueError("empty sweep values")
    trials = trials or cfg.trials
    rows = []
    if parameter == "h":
        for v in values:
            sub = replace(cfg, neurons_per_class=int(v), out=str(Path(cfg.out) / f"sweep_h{int(v)}"))
            base = Path(cfg.out) / ARTIFACTS["prepare"]
            Path(sub.out).mkdir(parents=True, exist_ok=True)
            if base.exists() and not (Path(sub.out) / ARTIFACTS["prepare"]).exists():
                (Path(sub.out) / ARTIFACTS["prepare"]).write_bytes(base.read_bytes())
            summary = run_pipeline(sub)
            rows.append({"value": int(v), "accuracy": summary["ft_snn_acc"],
                         "std": summary["ft_snn_std"], "active_run": summary["active_proportion"],
                         "active_step": float("nan")})
        return rows
    run_pipeline(cfg)
    prep = load_prepared(Path(cfg.out) / ARTIFACTS["prepare"])
    tuned, table, _ = load_snn_with_table(Path(cfg.out) / ARTIFACTS["finetune"])
    test = prep.splits["test"]
    for v in values:
        kw = {"beta": float, "threshold": float, "steps": int}
        name = SWEEP_PARAMS[parameter]
        model = tuned.with_lif(**{name: kw[name](v)})
        mean, std, _ = training.evaluate(model, test, table, trials, cfg.seed)
        stats = energy.measure_firing_rates(model, test, table, 1, cfg.seed)
        rows.append({"value": v, "accuracy": mean, "std": std,
                     "active_run": stats.active_per_run["all"], "active_step": stats.active_per_step["all"]})
    return rows


def sweep_table(parameter: str, rows, sep: str = "\t") -> str:
    lines = [sep.join([parameter, "accuracy", "std", "active_run", "active_step"])]
    for r in rows:
        lines.append(sep.join([str(r["value"]), f"{r['accuracy']:.6f}", f"{r['std']:.6f}",
                               f"{r['active_run']:.6f}", f"{r['active_step']:.6f}"]))
    return "\n".join(lines) + "\n"
