"""Per-epoch training loop: update the classifier, read back its per-class
accuracy, split the synthetic budget, synthesize guided samples, and merge
them with the real training set for the next epoch.

Four run modes:
  ce_baseline  - plain cross-entropy training, no synthesis
  offline      - one uniform synthetic batch made up front with the initial
                 classifier, reused every epoch
  ois_uniform  - fresh synthetic batch every epoch, equal class shares
  ois_aas      - fresh synthetic batch every epoch, accuracy-adaptive shares
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationPlan, allocate, uniform_plan
from .classify import SoftmaxClassifier
from .data import PROVENANCE_SYNTHETIC, LabeledDataset
from .errors import ConfigError
from .metrics import evaluate

RUN_MODES = ("ce_baseline", "offline", "ois_uniform", "ois_aas")

_STREAM_SYNTH = 41


@dataclass
class EpochReport:
    epoch: int                      # 1-based
    train_loss: float
    per_class_acc: np.ndarray
    allocation: AllocationPlan | None
    val_macro_f1: float
    val_balanced_accuracy: float
    val_mcc: float
    seconds: float


@dataclass
class RunResult:
    reports: list
    best_epoch: int
    best_net: object
    classifier: SoftmaxClassifier
    test_macro_f1: float
    test_balanced_accuracy: float
    test_mcc: float
    synthetic_batches: dict = field(default_factory=dict)  # epoch -> dataset


def synthesize_batch(plan, dm, classifier, guidance, epoch, seed, workers=1):
    """Guided samples per the plan; labels are the guidance classes and every
    row is flagged synthetic. Deterministic in (seed, epoch, plan)."""
    c = len(plan.counts)
    feats, labels = [], []
    for cls in range(c):
        k = int(plan.counts[cls])
        if k == 0:
            continue
        x = dm.sample(k, y=cls, classifier=classifier, guidance=guidance,
                      seed=seed, stream_keys=(_STREAM_SYNTH, epoch, cls),
                      workers=workers)
        feats.append(x)
        labels.append(np.full(k, cls, dtype=np.int64))
    if not feats:
        dim = dm.model_.data_dim if hasattr(dm, "model_") else 0
        return LabeledDataset(np.zeros((0, dim)), np.zeros(0, dtype=np.int64),
                              classifier.n_classes)
    ds = LabeledDataset(np.concatenate(feats), np.concatenate(labels),
                        classifier.n_classes)
    ds.provenance[:] = PROVENANCE_SYNTHETIC
    return ds


def select_best_model(reports):
    """1-based epoch with maximal validation macro-F1; ties go earliest."""
    best = reports[0]
    for rep in reports[1:]:
        if rep.val_macro_f1 > best.val_macro_f1:
            best = rep
    return best.epoch


def resolve_budget(k_total, n_real_train):
    """k_total < 0 means the default budget, 20% of the real training size."""
    return int(round(0.2 * n_real_train)) if k_total < 0 else int(k_total)


def run_training(config, real_train, val, test, dm=None):
    """Run one experiment; see RunConfig for the knob set."""
    if config.mode not in RUN_MODES:
        raise ConfigError(f"unknown mode {config.mode!r}; choose from {RUN_MODES}")
    needs_dm = config.mode != "ce_baseline"
    if needs_dm:
        if dm is None:
            raise ConfigError(f"mode {config.mode!r} requires a diffusion checkpoint")
        if dm.model_.data_dim != real_train.dim:
            raise ConfigError(
                f"diffusion checkpoint dim {dm.model_.data_dim} != data dim {real_train.dim}")

    c = real_train.n_classes
    budget = resolve_budget(config.k_total, real_train.n)
    guidance = config.guidance()
    clf = SoftmaxClassifier(
        n_classes=c, hidden_dims=config.classifier_hidden_dims(),
        learning_rate=config.classifier_lr, momentum=config.classifier_momentum,
        batch_size=config.classifier_batch, epochs=config.epochs,
        noise_std=config.classifier_noise_std, seed=config.seed)
    clf.init_net(real_train.dim)

    result = RunResult(reports=[], best_epoch=0, best_net=None, classifier=clf,
                       test_macro_f1=0.0, test_balanced_accuracy=0.0, test_mcc=0.0)
    trainset = real_train

    if config.mode == "offline" and budget > 0:
        # one-shot batch guided by the freshly initialized classifier
        plan = uniform_plan(c, budget)
        synth = synthesize_batch(plan, dm, clf, guidance, epoch=0,
                                 seed=config.seed, workers=config.workers)
        acc0 = clf.per_class_accuracy(real_train.features, real_train.labels)
        result.reports.append(EpochReport(0, float("nan"), acc0, plan,
                                          float("nan"), float("nan"),
                                          float("nan"), 0.0))
        if config.dump_synthetic:
            result.synthetic_batches[0] = synth
        trainset = real_train.merge(synth)

    best_f1 = -1.0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        loss = clf.train_epoch(trainset.features, trainset.labels, epoch - 1)
        acc = clf.per_class_accuracy(real_train.features, real_train.labels)
        f1, bacc, mcc_val = evaluate(val.labels, clf.predict(val.features), c)

        plan = None
        if config.mode in ("ois_uniform", "ois_aas") and budget > 0:
            plan = (uniform_plan(c, budget) if config.mode == "ois_uniform"
                    else allocate(acc, budget))
            synth = synthesize_batch(plan, dm, clf, guidance, epoch=epoch,
                                     seed=config.seed, workers=config.workers)
            if config.dump_synthetic:
                result.synthetic_batches[epoch] = synth
            trainset = real_train.merge(synth)  # previous batch is dropped

        result.reports.append(EpochReport(
            epoch, loss, acc, plan, f1, bacc, mcc_val,
            time.perf_counter() - t0))
        if f1 > best_f1:
            best_f1 = f1
            result.best_epoch = epoch
            result.best_net = clf.snapshot()

    final_net = clf.net_
    clf.restore(result.best_net)
    tf1, tbacc, tmcc = evaluate(test.labels, clf.predict(test.features), c)
    result.test_macro_f1, result.test_balanced_accuracy, result.test_mcc = \
        tf1, tbacc, tmcc
    result.final_net = final_net
    return result


# -- CSV emission ----------------------------------------------------------

def _fmt(x):
    return "nan" if x != x else f"{x:.6f}"


def write_report_csv(path, reports, n_classes):
    with open(path, "w") as fh:
        accs = ",".join(f"acc_{i}" for i in range(n_classes))
        fh.write(f"epoch,train_loss,{accs},"
                 "val_macro_f1,val_balanced_accuracy,val_mcc\n")
        for rep in reports:
            if rep.epoch == 0:
                continue  # offline warmup row lives in allocations.csv only
            cells = [str(rep.epoch), _fmt(rep.train_loss)]
            cells += [_fmt(a) for a in rep.per_class_acc]
            cells += [_fmt(rep.val_macro_f1), _fmt(rep.val_balanced_accuracy),
                      _fmt(rep.val_mcc)]
            fh.write(",".join(cells) + "\n")


def write_allocations_csv(path, reports, n_classes):
    with open(path, "w") as fh:
        accs = ",".join(f"acc_{i}" for i in range(n_classes))
        ks = ",".join(f"k_{i}" for i in range(n_classes))
        fh.write(f"epoch,{accs},{ks}\n")
        for rep in reports:
            if rep.allocation is None:
                continue
            cells = [str(rep.epoch)]
            cells += [_fmt(a) for a in rep.per_class_acc]
            cells += [str(int(k)) for k in rep.allocation.counts]
            fh.write(",".join(cells) + "\n")


def write_test_metrics_csv(path, mode, seed, result):
    with open(path, "w") as fh:
        fh.write("mode,seed,best_epoch,macro_f1,balanced_accuracy,mcc\n")
        fh.write(f"{mode},{seed},{result.best_epoch},"
                 f"{result.test_macro_f1:.6f},"
                 f"{result.test_balanced_accuracy:.6f},"
                 f"{result.test_mcc:.6f}\n")


def write_timing_log(path, reports):
    # wall-clock lives outside the CSVs so re-runs stay byte-identical
    with open(path, "w") as fh:
        for rep in reports:
            fh.write(f"epoch {rep.epoch}: {rep.seconds:.3f}s\n")
