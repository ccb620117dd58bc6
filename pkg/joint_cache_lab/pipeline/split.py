"""
Chronological train/validation/test split.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple, TypeVar

from joint_cache_lab.errors import ConfigError, SplitError

T = TypeVar("T")

MIN_SPLIT_SIZE = 5


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous fractions; test takes whatever the floors leave."""

    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2

    def __post_init__(self):
        parts = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(p < 0 for p in parts) or not math.isclose(sum(parts), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split fractions must be >= 0 and sum to 1, got {parts}")

    def boundaries(self, n: int) -> Tuple[int, int]:
        """(end of train, end of val) as sample indices."""
        # Exact rationals so 0.6 * 10 floors to 6, not 5.
        train = math.floor(Fraction(str(self.train_fraction)) * n)
        val = math.floor(Fraction(str(self.val_fraction)) * n)
        return train, train + val


def split_dataset(
    samples: Sequence[T], spec: SplitSpec = SplitSpec()
) -> Tuple[List[T], List[T], List[T]]:
    """
    Split samples already in event order without shuffling.

    Raises:
        SplitError: Fewer than 5 samples
    """
    n = len(samples)
    if n < MIN_SPLIT_SIZE:
        raise SplitError(f"need at least {MIN_SPLIT_SIZE} samples for a split, got {n}")
    train_end, val_end = spec.boundaries(n)
    return list(samples[:train_end]), list(samples[train_end:val_end]), list(samples[val_end:])
