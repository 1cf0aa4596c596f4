"""Accuracy-adaptive split of the synthetic-sample budget.

Shares are softmax(1 - acc) so weaker classes get more of the budget; the
real-valued shares are turned into integers with largest-remainder rounding,
which preserves the total exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SpecError


@dataclass(frozen=True)
class AllocationPlan:
    counts: np.ndarray    # integer samples per class, sums to total
    total: int
    fractions: np.ndarray  # pre-rounding shares, sum to 1

    def __post_init__(self):
        if int(self.counts.sum()) != self.total:
            raise SpecError("allocation counts do not sum to the budget")


def largest_remainder_round(fractions, total):
    """Floor each share*total, then hand leftover units to the largest
    fractional remainders; ties go to the lower index."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if (fractions < 0).any() or abs(fractions.sum() - 1.0) > 1e-9:
        raise SpecError("fractions must be non-negative and sum to 1")
    raw = fractions * total
    counts = np.floor(raw).astype(np.int64)
    leftover = int(total - counts.sum())
    if leftover > 0:
        # stable sort on negated remainder -> ties resolve to lower index
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:leftover]] += 1
    return counts


def allocate(per_class_accuracy, total):
    """Softmax(1 - acc) shares, largest-remainder rounded to integers."""
    acc = np.asarray(per_class_accuracy, dtype=np.float64)
    if (acc < 0).any() or (acc > 1).any():
        raise SpecError("accuracies must lie in [0, 1]")
    if total < 0:
        raise SpecError("budget must be >= 0")
    z = 1.0 - acc
    z = z - z.max()  # shift-invariant
    e = np.exp(z)
    fractions = e / e.sum()
    counts = largest_remainder_round(fractions, total)
    return AllocationPlan(counts=counts, total=int(total), fractions=fractions)


def uniform_plan(n_classes, total):
    """Equal shares; used by the non-adaptive synthesis modes."""
    fractions = np.full(n_classes, 1.0 / n_classes)
    return AllocationPlan(counts=largest_remainder_round(fractions, total),
                          total=int(total), fractions=fractions)
