"""Out-of-sample forecast-evaluation tests for factor-augmented regressions."""
