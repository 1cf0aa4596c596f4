"""Diffusion-based online synthetic balancing for imbalanced classification.

A small diffusion model learns the feature distribution once; during
classifier training, every epoch re-synthesizes a batch of classifier-guided
samples whose per-class budget follows softmax(1 - per-class accuracy), so
struggling classes get more synthetic support.
"""

from .allocation import AllocationPlan, allocate, largest_remainder_round, uniform_plan
from .classify import SoftmaxClassifier
from .config import RunConfig
from .data import (LabeledDataset, MixtureSpec, load_dataset,
                   make_imbalanced_mixture, save_dataset, split_dataset)
from .diffusion import (GaussianDiffusion, GuidanceConfig, NoiseSchedule,
                        build_schedule, forward_corrupt, guided_reverse_step,
                        reverse_step)
from .metrics import balanced_accuracy, confusion, evaluate, macro_f1, mcc
from .nn import FeedForwardNet, MomentumSGD, forward_eval, scalar_gradient
from .pipeline import (EpochReport, RunResult, run_training, select_best_model,
                       synthesize_batch)

__version__ = "0.1.0"

__all__ = [
    "AllocationPlan", "allocate", "largest_remainder_round", "uniform_plan",
    "SoftmaxClassifier", "RunConfig",
    "LabeledDataset", "MixtureSpec", "load_dataset", "make_imbalanced_mixture",
    "save_dataset", "split_dataset",
    "GaussianDiffusion", "GuidanceConfig", "NoiseSchedule", "build_schedule",
    "forward_corrupt", "guided_reverse_step", "reverse_step",
    "balanced_accuracy", "confusion", "evaluate", "macro_f1", "mcc",
    "FeedForwardNet", "MomentumSGD", "forward_eval", "scalar_gradient",
    "EpochReport", "RunResult", "run_training", "select_best_model",
    "synthesize_batch",
]
