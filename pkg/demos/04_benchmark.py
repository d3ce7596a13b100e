# # Simulation benchmark
#
# Each repetition simulates 400 paths for 20 snapshots, trains on the first
# 14 and scores one-step rolling forecasts on the rest by mean squared W2.
# This script runs a handful of repetitions; the command
# `dpdd simulate --scale desk` runs 50 per scenario.

import warnings

from dpdd import BenchmarkConfig, default_specs, run_benchmark

config = BenchmarkConfig(n_exp=5)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    table = run_benchmark(config, default_specs(config), threads=0)

for scenario, methods in table.summary().items():
    cells = "  ".join(f"{m}={v['mean']:.5f}" for m, v in sorted(methods.items()))
    print(f"{scenario:12s} {cells}")
