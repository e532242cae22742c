import math
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from pydantic import ValidationError

from factor_eval.core import DegenerateTuning, IllConditioned
from factor_eval.mc import (
    ExperimentSpec,
    RejectionCell,
    RejectionTable,
    beta_label,
    run_experiment,
    run_replication,
    tuning_label,
)


def small_spec(**overrides):
    base = {
        "dgp": {"N": 20, "T": 40, "seed": 3},
        "beta_grid": [0.0, 0.6],
        "tests": ["g1", "g2adj", "g3adj"],
        "replications": 8,
    }
    base.update(overrides)
    return ExperimentSpec(**base)


class TestExperimentSpec(unittest.TestCase):
    def test_replications_must_be_positive(self):
        with self.assertRaises(ValidationError):
            small_spec(replications=0)

    def test_nominal_level_range(self):
        with self.assertRaises(ValidationError):
            small_spec(nominal_level=0.6)

    def test_unknown_test_label(self):
        with self.assertRaises(ValidationError):
            small_spec(tests=["g1adj"])

    def test_beta_vector_length(self):
        with self.assertRaises(ValidationError):
            small_spec(beta_grid=[[0.1, 0.2]])

    def test_tuning_points(self):
        spec = small_spec(tuning_grid=[{"g2.lambda2": 0.6}, {"g2.lambda2": 0.7}])
        labels = [label for label, _ in spec.tuning_points()]
        self.assertEqual(labels, ["g2.lambda2=0.6", "g2.lambda2=0.7"])
        self.assertEqual(spec.tuning_points()[1][1].g2.lambda2, 0.7)

    def test_partial_tunings_section(self):
        spec = small_spec(tunings={"g4": {"tau0": 0.85}})
        self.assertEqual(spec.tunings.g4.lambda1, 0.6)
        self.assertEqual(spec.tuning_points()[0][1].g4.tau0, 0.85)

    def test_labels(self):
        self.assertEqual(tuning_label({}), "default")
        self.assertEqual(beta_label([0.2, 0.2, 0.2]), "0.2")
        self.assertEqual(beta_label([0.1, 0.2, 0.3]), "(0.1,0.2,0.3)")


class TestRejectionCell(unittest.TestCase):
    def test_frequency_and_stderr(self):
        cell = RejectionCell("0", "default", "g1", rejections=25, completed=500, failures=0)
        self.assertAlmostEqual(cell.rejection_frequency, 0.05)
        self.assertAlmostEqual(cell.mc_stderr, math.sqrt(0.05 * 0.95 / 500))
        self.assertFalse(cell.adjusted)

    def test_failure_share(self):
        self.assertFalse(RejectionCell("0", "default", "g2adj", 5, 99, 1).invalid)
        self.assertTrue(RejectionCell("0", "default", "g2adj", 5, 98, 2).invalid)


class TestRunExperiment(unittest.TestCase):
    def test_replication_decisions(self):
        decisions = run_replication(small_spec(), 1, 0)
        self.assertEqual(
            set(decisions), {("default", "g1"), ("default", "g2adj"), ("default", "g3adj")}
        )

    def test_worker_count_does_not_change_table(self):
        spec = small_spec()
        serial = run_experiment(spec, max_workers=1, progress=False)
        threaded = run_experiment(spec, max_workers=3, progress=False)
        self.assertTrue(serial.to_frame().equals(threaded.to_frame()))
        self.assertEqual(len(serial.cells), 2 * 3)
        for cell in serial.cells:
            self.assertEqual(cell.completed, 8)
            self.assertTrue(0.0 <= cell.rejection_frequency <= 1.0)

    def test_failed_replications_are_excluded_and_reported(self):
        spec = small_spec(beta_grid=[0.0], replications=4)
        real = run_replication

        def flaky(spec_, beta_idx, rep_idx):
            if rep_idx == 0:
                error = IllConditioned("collinear regressors")
                error.t = 21
                raise error
            return real(spec_, beta_idx, rep_idx)

        with patch("factor_eval.mc.run_replication", side_effect=flaky):
            table = run_experiment(spec, progress=False)
        for cell in table.cells:
            self.assertEqual((cell.completed, cell.failures), (3, 1))
            self.assertTrue(cell.invalid)
        self.assertEqual(len(table.invalid_cells()), 3)

    def test_degenerate_tuning_fails_before_running(self):
        spec = small_spec(tuning_grid=[{"g2.lambda1": 0.65}])
        with patch("factor_eval.mc.run_replication") as replication:
            with self.assertRaises(DegenerateTuning):
                run_experiment(spec, progress=False)
        replication.assert_not_called()

    def test_outputs(self):
        table = run_experiment(small_spec(replications=3), progress=False)
        text = table.render_text()
        self.assertIn("Size/Power (nom 5%)", text)
        self.assertIn("g3adj", text)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "table.csv"
            table.to_csv(path)
            header = path.read_text().splitlines()[0]
        self.assertEqual(
            header, "test,adjusted,beta,tuning,rejection,stderr,failures,replications"
        )

    def test_cell_lookup(self):
        table = RejectionTable(
            cells=[RejectionCell("0", "default", "g1", 1, 10, 0)],
            nominal_level=0.05,
            replications=10,
        )
        self.assertEqual(table.cell("0", "default", "g1").rejections, 1)
        with self.assertRaises(KeyError):
            table.cell("0.2", "default", "g1")


if __name__ == "__main__":
    unittest.main()
