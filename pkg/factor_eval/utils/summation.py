"""Compensated summation helpers.

The test statistics are differences of long sums of squared forecast errors,
so every sum over a forecast-error stream goes through these helpers instead of
``numpy.sum``.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray


class KahanSummation:
    """Incremental compensated summation (Neumaier's variant of Kahan).

    Maintains a more accurate running sum of a series of values than we would
    get by just repeatedly doing += on a counter, also when an added value is
    larger in magnitude than the running sum.
    """

    def __init__(self, value: float = 0.0):
        self.sum = float(value)
        self.carry = 0.0

    def add(self, value: float) -> KahanSummation:
        value = float(value)
        total = self.sum + value
        if abs(self.sum) >= abs(value):
            self.carry += (self.sum - total) + value
        else:
            self.carry += (value - total) + self.sum
        self.sum = total
        return self

    def extend(self, values: Iterable[float]) -> KahanSummation:
        for value in values:
            self.add(value)
        return self

    @property
    def value(self) -> float:
        return self.sum + self.carry


def compensated_sum(values: ArrayLike) -> float:
    return KahanSummation().extend(np.ravel(np.asarray(values, dtype=float))).value


def compensated_prefix_sums(values: ArrayLike) -> NDArray[np.float64]:
    """Return ``P`` with ``P[0] = 0`` and ``P[k] = values[0] + ... + values[k-1]``.

    Partial sums over leading windows (``sum(values[:l]) == P[l]``) are then
    O(1) lookups, which keeps the averaged statistics linear in ``n``.
    """
    flat = np.ravel(np.asarray(values, dtype=float))
    prefix = np.zeros(flat.size + 1)
    acc = KahanSummation()
    for k, value in enumerate(flat, start=1):
        prefix[k] = acc.add(value).value
    return prefix
