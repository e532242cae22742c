import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from factor_eval.utils.summation import (
    KahanSummation,
    compensated_prefix_sums,
    compensated_sum,
)


class TestKahanSummation(unittest.TestCase):
    def test_recovers_small_term_between_large_ones(self):
        # naive left-to-right summation returns 0.0 here
        self.assertEqual(compensated_sum([1e16, 1.0, -1e16]), 1.0)

    def test_running_value(self):
        acc = KahanSummation()
        acc.add(0.1).add(0.2).extend([0.3] * 10)
        self.assertAlmostEqual(acc.value, math.fsum([0.1, 0.2] + [0.3] * 10), places=15)

    def test_prefix_sums(self):
        prefix = compensated_prefix_sums([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(prefix, [0.0, 1.0, 3.0, 6.0])

    def test_prefix_sums_of_empty_input(self):
        np.testing.assert_array_equal(compensated_prefix_sums([]), [0.0])

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=200
        )
    )
    def test_matches_exact_sum(self, values):
        exact = math.fsum(values)
        scale = max(1.0, math.fsum(abs(v) for v in values))
        self.assertLessEqual(abs(compensated_sum(values) - exact), 1e-12 * scale)
        self.assertLessEqual(abs(compensated_prefix_sums(values)[-1] - exact), 1e-12 * scale)


if __name__ == "__main__":
    unittest.main()
