# # Relative house prices
#
# A metro price panel is read from wide CSV (one row per metro, one column
# per month), each month is divided by its cross-sectional mean, and the
# resulting distributions are forecast one month ahead.  Without the real
# data a stationary synthetic panel stands in.

import tempfile
from pathlib import Path

from dpdd.housing import TOY_PANEL_CSV, load_panel, run_housing_experiment, synthetic_panel

# The documented three-metro fixture.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "toy.csv"
    path.write_text(TOY_PANEL_CSV)
    toy = load_panel(path)
print("toy panel:", toy.n_metros, "metros,", toy.n_months, "months from", toy.dates[0])

panel = synthetic_panel(seed=0)
report = run_housing_experiment(panel, "2014-01")
for method, entry in report.summary["methods"].items():
    print(f"{method:12s} mean W2^2 {entry['mean']:.5f}   worst month {entry['max']:.5f}")
