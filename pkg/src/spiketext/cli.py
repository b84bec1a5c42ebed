"""Command-line entry point: `spiketext <subcommand> ...`."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import ann, checkpoint, encoder, energy, pipeline, snn, synthetic, training
from .config import PipelineConfig, load_config
from .encoder import EVAL_STREAM

log = logging.getLogger("spiketext")


def add_pipeline_flags(p: argparse.ArgumentParser, skip=()):
    p.add_argument("--config", help="key=value config file; flags override its values")
    for f in fields(PipelineConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            p.add_argument(flag, action="store_true", default=None)
        elif isinstance(f.default, tuple):
            p.add_argument(flag, help="comma-separated list")
        else:
            kw = {}
            if f.name == "normalize":
                kw["choices"] = ["none", "model", "data"]
            elif f.name == "lang":
                kw["choices"] = ["en", "zh"]
            elif f.name == "surrogate_centering":
                kw["choices"] = ["threshold", "raw"]
            p.add_argument(flag, type=type(f.default), **kw)


def config_from(args, skip=()) -> PipelineConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(PipelineConfig) if f.name not in skip}
    return load_config(args.config, overrides)


def emit(rec: dict):
    print(pipeline.format_record(rec), flush=True)


def cmd_prepare(args):
    cfg = config_from(args)
    prep = pipeline.prepare(cfg)
    out = Path(args.out_file or Path(cfg.out) / pipeline.ARTIFACTS["prepare"])
    out.parent.mkdir(parents=True, exist_ok=True)
    pipeline.save_prepared(out, prep)
    emit({"stage": "prepare", "train": len(prep.splits["train"]), "val": len(prep.splits["val"]),
          "test": len(prep.splits["test"]), "vocab": len(prep.vocab), "max_len": prep.max_len,
          "classes": prep.num_classes, "out": str(out)})


def prepared_for(cfg, path):
    return pipeline.load_prepared(path) if path else pipeline.prepare(cfg)


def cmd_ann_train(args):
    cfg = config_from(args)
    prep = prepared_for(cfg, args.prepared)
    if args.baseline:
        config = replace(cfg.cnn_config(prep.num_classes), pooling="max", use_bias=True)
        params = ann.init_params(config, cfg.seed)
        params, table, _ = ann.train_ann(config, params, prep.splits["train"], prep.table,
                                         cfg.ann_train_config(), prep.splits["val"], emit)
    else:
        params, config, table, _ = pipeline.train_ann_stage(cfg, prep, emit)
    checkpoint.save_ann(args.out_file, params, config, extra_tensors={"embeddings": table.matrix})
    emit({"stage": "ann-train", "test_acc": ann.accuracy(params, config, table, prep.splits["test"])})


def cmd_convert(args):
    params, config, table, _ = pipeline.load_ann_with_table(args.in_file)
    lif = snn.LifConfig(args.beta, args.threshold, args.steps, args.slope)
    model = snn.convert(params, config, lif)
    if args.normalize == "model":
        model = snn.normalize_model_based(model)
    elif args.normalize == "data":
        if not args.data:
            raise SystemExit("--normalize data needs --data <prepared>")
        train = pipeline.load_prepared(args.data).splits["train"]
        model = snn.normalize_data_based(model, params, train, table)
    checkpoint.save_snn(args.out_file, model, extra_tensors={"embeddings": table.matrix})
    emit({"stage": "convert", "normalize": args.normalize,
          "scale_factors": ",".join(f"{f:.6g}" for f in model.scale_factors) or "none"})


def train_config_from(args) -> training.TrainConfig:
    return training.TrainConfig(args.lr, args.batch, args.epochs, args.seed, args.dropout,
                                centering=args.surrogate_centering)


def cmd_finetune(args):
    model, table, _ = pipeline.load_snn_with_table(args.in_file)
    prep = pipeline.load_prepared(args.data)
    tuned, _ = training.finetune(model, prep.splits["train"], table, train_config_from(args),
                                 prep.splits["val"], lambda r: emit({"stage": "finetune", **r}))
    checkpoint.save_snn(args.out_file, tuned, extra_tensors={"embeddings": table.matrix})


def cmd_train_direct(args):
    cfg = config_from(args)
    prep = prepared_for(cfg, args.prepared)
    opts = replace(cfg.snn_train_config(), mode="direct")
    model, _ = training.train_direct(cfg.cnn_config(prep.num_classes), cfg.lif_config(),
                                     prep.splits["train"], prep.table, opts, prep.splits["val"],
                                     lambda r: emit({"stage": "train-direct", **r}))
    checkpoint.save_snn(args.out_file, model, extra_tensors={"embeddings": prep.table.matrix})
    mean, std, _ = training.evaluate(model, prep.splits["test"], prep.table, cfg.trials, cfg.seed)
    emit({"stage": "train-direct", "test_acc": mean, "test_std": std})


def cmd_eval(args):
    prep = pipeline.load_prepared(args.data)
    data = prep.splits[args.split]
    if args.ann:
        params, config, table, _ = pipeline.load_ann_with_table(args.ann)
        emit({"model": "ann", "split": args.split, "acc": ann.accuracy(params, config, table, data)})
    if args.snn:
        model, table, _ = pipeline.load_snn_with_table(args.snn)
        lif_kw = {k: v for k, v in (("steps", args.steps), ("threshold", args.threshold),
                                    ("beta", args.beta)) if v is not None}
        model = model.with_lif(**lif_kw)
        mean, std, accs = training.evaluate(model, data, table, args.trials, args.seed)
        emit({"model": "snn", "split": args.split, "acc": mean, "std": std, "trials": args.trials})
        if args.record_spikes:
            tokens = data.token_matrix()[:1]
            bits = encoder.encode_batch(table.lookup(tokens), model.lif.steps, args.seed, EVAL_STREAM,
                                        0, [0])[:, 0]
            encoder.write_bitpacked(args.record_spikes, bits)
            emit({"recorded": args.record_spikes, "shape": "x".join(map(str, bits.shape))})


def cmd_energy(args):
    prep = pipeline.load_prepared(args.data)
    _, config, _, _ = pipeline.load_ann_with_table(args.ann)
    model, table, _ = pipeline.load_snn_with_table(args.snn)
    report, stats = pipeline.energy_stage(config, model, prep.splits[args.split], table, args.trials,
                                          args.seed, prep.max_len)
    text = report.to_table()
    if args.out_file:
        Path(args.out_file).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    emit({"ann_mj": report.ann_mj, "snn_mj": report.snn_mj, "reduction": report.reduction,
          "active_run": stats.active_per_run["all"], "active_step": stats.active_per_step["all"]})


def cmd_gradcheck(args):
    D, L, F, T = (int(v) for v in args.dims.split(","))
    widths = tuple(int(w) for w in args.widths.split(","))
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for case in range(args.cases):
        cfg = ann.CnnConfig.tailored_textcnn(num_classes=args.classes, embed_dim=D, filter_widths=widths,
                                             feature_maps=F, neurons_per_class=args.h)
        params = ann.init_params(cfg, seed=args.seed + case, dtype=np.float64)
        for v in params.tensors.values():
            v *= args.weight_scale
        model = snn.convert(params, cfg, snn.LifConfig(args.beta, args.threshold, T, args.slope))
        spikes = (rng.random((T, L, D)) < rng.random((L, D))).astype(np.float64)
        target = int(rng.integers(args.classes))
        err = training.grad_check_relaxed(model, spikes, target,
                                          training.SurrogateConfig(args.slope, args.surrogate_centering))
        worst = max(worst, err)
        emit({"case": case, "max_rel_error": err})
    print(f"max_rel_error={worst:.3e}")
    return 0 if worst < args.tol else 1


def cmd_sweep(args):
    cfg = config_from(args)
    values = [float(v) if args.param in ("beta", "u_thr") else int(v) for v in args.values.split(",")]
    rows = pipeline.sweep(cfg, args.param, values)
    text = pipeline.sweep_table(args.param, rows)
    if args.out_file:
        Path(args.out_file).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_run(args):
    cfg = config_from(args)
    summary = pipeline.run_pipeline(cfg, force=args.force)
    emit(summary)
    sys.stdout.write(pipeline.summary_table(summary))


def cmd_synth(args):
    corpus_path, vec_path = synthetic.write_bundle(args.out_dir, args.n, args.dim, args.seed)
    emit({"data": str(corpus_path), "embeddings": str(vec_path)})


def add_lif_flags(p, steps=50, threshold=1.0, beta=1.0):
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--threshold", type=float, default=threshold)
    p.add_argument("--beta", type=float, default=beta)
    p.add_argument("--slope", type=float, default=25.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiketext", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="tokenize, split, build vocab, shift embeddings")
    add_pipeline_flags(p)
    p.add_argument("--out-file", help="prepared container path (default <out>/prepared.ckpt)")
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("ann-train", help="train the tailored TextCNN")
    add_pipeline_flags(p, skip=("out",))
    p.add_argument("--prepared")
    p.add_argument("--baseline", action="store_true", help="original TextCNN: max pooling and biases")
    p.add_argument("--out", dest="out_file", required=True)
    p.set_defaults(fn=cmd_ann_train)

    p = sub.add_parser("convert", help="ANN checkpoint -> SNN checkpoint")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--out", dest="out_file", required=True)
    p.add_argument("--normalize", choices=["none", "model", "data"], default="none")
    p.add_argument("--data", help="prepared container (needed for data-based normalization)")
    add_lif_flags(p)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("finetune", help="surrogate-gradient BPTT fine-tuning")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--data", required=True, help="prepared container")
    p.add_argument("--out", dest="out_file", required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--surrogate-centering", choices=["threshold", "raw"], default="threshold")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("train-direct", help="train an SNN from random weights")
    add_pipeline_flags(p, skip=("out",))
    p.add_argument("--prepared")
    p.add_argument("--out", dest="out_file", required=True)
    p.set_defaults(fn=cmd_train_direct)

    p = sub.add_parser("eval", help="accuracy of ANN and/or SNN checkpoints")
    p.add_argument("--data", required=True, help="prepared container")
    p.add_argument("--ann")
    p.add_argument("--snn")
    p.add_argument("--split", choices=pipeline.SPLITS, default="test")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--record-spikes", help="dump the first example's spike train, bit-packed")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("energy-report", help="FLOPs/SOPs/mJ table")
    p.add_argument("--ann", required=True)
    p.add_argument("--snn", required=True)
    p.add_argument("--data", required=True, help="prepared container")
    p.add_argument("--split", choices=pipeline.SPLITS, default="test")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="out_file")
    p.set_defaults(fn=cmd_energy)

    p = sub.add_parser("gradcheck", help="BPTT vs finite differences on tiny relaxed networks")
    p.add_argument("--dims", default="3,4,2,5", help="D,L,F,T")
    p.add_argument("--widths", default="1,2")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--h", type=int, default=2)
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weight-scale", type=float, default=2.0)
    p.add_argument("--surrogate-centering", choices=["threshold", "raw"], default="threshold")
    p.add_argument("--tol", type=float, default=1e-4)
    add_lif_flags(p, steps=5)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("sweep", help="accuracy/activity over one hyper-parameter")
    add_pipeline_flags(p)
    p.add_argument("--param", required=True, choices=sorted(pipeline.SWEEP_PARAMS))
    p.add_argument("--values", required=True, help="comma-separated")
    p.add_argument("--out-file")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("run", help="full pipeline")
    add_pipeline_flags(p)
    p.add_argument("--force", action="store_true", help="recompute every stage")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("synth", help="write the synthetic desk-scale corpus and vectors")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args) or 0
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
