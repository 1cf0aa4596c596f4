"""Command-line surface: gen-data, pretrain-dm, train, report, sample.

Every command is deterministic in (config, inputs); re-running writes
byte-identical outputs. Exit codes: 0 ok, 1 usage/config error, 2 numeric
failure.
"""

import argparse
import os
import sys

import numpy as np

from . import data as datamod
from .classify import SoftmaxClassifier
from .config import RunConfig
from .data import (LabeledDataset, MixtureSpec, load_dataset,
                   make_imbalanced_mixture, save_dataset, split_dataset)
from .diffusion import GaussianDiffusion, GuidanceConfig
from .errors import (ConfigError, DiffBalanceError, DivergenceError,
                     NumericError, ParseError, SpecError)
from .pipeline import (run_training, write_allocations_csv, write_report_csv,
                       write_test_metrics_csv, write_timing_log)

SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
_SPLIT_SEED_OFFSET = 1000  # split stream kept apart from the run seed


def _build_config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.update_from_file(args.config)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key] = val
    # dedicated flags beat generic --set overrides
    for key, val in (("data", getattr(args, "data", None)),
                     ("dm_checkpoint", getattr(args, "dm", None)),
                     ("out_dir", getattr(args, "out_dir", None)),
                     ("mode", getattr(args, "mode", None)),
                     ("epochs", getattr(args, "epochs", None)),
                     ("k_total", getattr(args, "k", None)),
                     ("guidance_scale", getattr(args, "scale", None)),
                     ("seed", getattr(args, "seed", None)),
                     ("workers", getattr(args, "workers", None)),
                     ("dump_synthetic", getattr(args, "dump_synthetic", None))):
        if val is not None:
            overrides[key] = val
    cfg.apply(overrides)
    return cfg


def cmd_gen_data(args):
    cov = [float(v) for v in args.cov_scale.split(",")] if args.cov_scale else []
    spec = MixtureSpec(n_classes=args.classes, dim=args.dim, n_max=args.n_max,
                       imbalance_ratio=args.imbalance_ratio,
                       spread=args.spread, cov_scale=cov)
    ds = make_imbalanced_mixture(spec, args.seed)
    save_dataset(ds, args.out)
    counts = ",".join(str(v) for v in ds.class_counts())
    print(f"wrote {ds.n} samples ({counts}) to {args.out}")
    return 0


def cmd_pretrain_dm(args):
    cfg = _build_config(args)
    if not cfg.data:
        raise ConfigError("pretrain-dm needs a dataset (--data or config)")
    ds = load_dataset(cfg.data)
    train, _, _ = split_dataset(ds, SPLIT_FRACTIONS,
                                cfg.seed + _SPLIT_SEED_OFFSET)
    b0, b1 = cfg.beta_bounds()
    dm = GaussianDiffusion(
        n_steps=cfg.diffusion_steps, beta_start=b0, beta_end=b1,
        hidden_dims=cfg.denoiser_hidden_dims(),
        time_embed_dim=cfg.denoiser_time_dim, epochs=cfg.denoiser_epochs,
        learning_rate=cfg.denoiser_lr, batch_size=cfg.denoiser_batch,
        seed=cfg.seed)
    dm.fit(train.features)
    dm.save(args.out)
    with open(args.out + ".loss_trace.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(dm.loss_trace_, start=1):
            fh.write(f"{i},{loss:.6f}\n")
    final = f"{dm.loss_trace_[-1]:.4f}" if dm.loss_trace_ else "n/a"
    print(f"wrote denoiser checkpoint to {args.out} (final loss {final})")
    return 0


def cmd_train(args):
    cfg = _build_config(args)
    if not cfg.data:
        raise ConfigError("train needs a dataset (--data or config)")
    ds = load_dataset(cfg.data)
    train, val, test = split_dataset(ds, SPLIT_FRACTIONS,
                                     cfg.seed + _SPLIT_SEED_OFFSET)
    dm = None
    if cfg.mode != "ce_baseline":
        if not cfg.dm_checkpoint:
            raise ConfigError(f"mode {cfg.mode!r} needs --dm")
        dm = GaussianDiffusion.load(cfg.dm_checkpoint, expect_dim=ds.dim)

    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.write(os.path.join(cfg.out_dir, "config_used.cfg"))
    result = run_training(cfg, train, val, test, dm=dm)

    c = ds.n_classes
    write_report_csv(os.path.join(cfg.out_dir, "report.csv"), result.reports, c)
    write_allocations_csv(os.path.join(cfg.out_dir, "allocations.csv"),
                          result.reports, c)
    write_test_metrics_csv(os.path.join(cfg.out_dir, "test_metrics.csv"),
                           cfg.mode, cfg.seed, result)
    write_timing_log(os.path.join(cfg.out_dir, "timing.log"), result.reports)
    result.classifier.restore(result.best_net)
    result.classifier.save(os.path.join(cfg.out_dir, "best_classifier.ckpt"))
    result.classifier.restore(result.final_net)
    result.classifier.save(os.path.join(cfg.out_dir, "last_classifier.ckpt"))
    for epoch, synth in result.synthetic_batches.items():
        save_dataset(synth, os.path.join(cfg.out_dir,
                                         f"synthetic_epoch{epoch}.csv"))
    print(f"mode={cfg.mode} seed={cfg.seed} best_epoch={result.best_epoch} "
          f"test: macro_f1={result.test_macro_f1:.4f} "
          f"b_acc={result.test_balanced_accuracy:.4f} "
          f"mcc={result.test_mcc:.4f}")
    return 0


def cmd_report(args):
    rows = []
    for run_dir in args.run_dirs:
        path = os.path.join(run_dir, "test_metrics.csv")
        if not os.path.exists(path):
            print(f"warning: {path} missing, skipped", file=sys.stderr)
            continue
        with open(path) as fh:
            lines = fh.read().splitlines()
        if len(lines) < 2:
            print(f"warning: {path} malformed, skipped", file=sys.stderr)
            continue
        mode, seed, _, f1, bacc, mcc_val = lines[1].split(",")
        rows.append((mode, seed, float(f1), float(bacc), float(mcc_val)))
    if not rows:
        raise ConfigError("no completed runs found")
    lines = ["mode,seed,macro_f1,balanced_accuracy,mcc"]
    for mode, seed, f1, bacc, mcc_val in rows:
        lines.append(f"{mode},{seed},{f1:.6f},{bacc:.6f},{mcc_val:.6f}")
    for mode in dict.fromkeys(r[0] for r in rows):  # first-seen order
        sel = [r for r in rows if r[0] == mode]
        means = [sum(r[i] for r in sel) / len(sel) for i in (2, 3, 4)]
        lines.append(f"{mode},mean,{means[0]:.6f},{means[1]:.6f},{means[2]:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sample(args):
    dm = GaussianDiffusion.load(args.dm)
    classifier = None
    guidance = None
    if args.class_id is not None:
        if not args.classifier:
            raise ConfigError("--class-id needs --classifier")
        classifier = SoftmaxClassifier.load(args.classifier,
                                            expect_dim=dm.model_.data_dim)
        guidance = GuidanceConfig(scale=args.scale,
                                  scale_by_noise_level=args.noise_scaled)
    x = dm.sample(args.n, y=args.class_id, classifier=classifier,
                  guidance=guidance, seed=args.seed, workers=args.workers)
    label = args.class_id if args.class_id is not None else 0
    n_classes = classifier.n_classes if classifier else 1
    ds = LabeledDataset(x, np.full(args.n, label, dtype=np.int64), n_classes)
    ds.provenance[:] = datamod.PROVENANCE_SYNTHETIC
    save_dataset(ds, args.out)
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diffbalance",
        description="Diffusion-based online synthetic balancing for "
                    "imbalanced classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate an imbalanced mixture dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--n-max", type=int, default=2000)
    p.add_argument("--imbalance-ratio", type=float, default=20.0)
    p.add_argument("--spread", type=float, default=1.3)
    p.add_argument("--cov-scale", default="",
                   help="comma-separated per-class stddev (default 1.0)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--data", help="dataset path")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key")

    p = sub.add_parser("pretrain-dm", parents=[common],
                       help="pretrain and freeze the diffusion model")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_pretrain_dm)

    p = sub.add_parser("train", parents=[common],
                       help="run one training experiment")
    p.add_argument("--dm", help="denoiser checkpoint")
    p.add_argument("--mode", choices=("ce_baseline", "offline",
                                      "ois_uniform", "ois_aas"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--k", type=int, help="synthetic budget per epoch")
    p.add_argument("--scale", type=float, help="guidance gradient scale")
    p.add_argument("--dump-synthetic", action="store_const", const=True,
                   dest="dump_synthetic")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", help="aggregate runs into a comparison table")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sample", help="dump (optionally guided) samples")
    p.add_argument("--dm", required=True)
    p.add_argument("--classifier")
    p.add_argument("--class-id", type=int)
    p.add_argument("--scale", type=float, default=0.0)
    p.add_argument("--noise-scaled", action="store_true")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (NumericError, DivergenceError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ParseError, SpecError, FileNotFoundError,
            DiffBalanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
