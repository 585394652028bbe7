"""
Running a benchmark sweep
=========================

The harness runs every (algorithm, seed, budget) cell from an INI config
and writes deterministic results and summary CSVs. The same config works
from the command line: ``tabular-ail run sweep.ini --out results``.
"""

import configparser
import tempfile
from pathlib import Path

from tabular_ail.harness import config_from_parser, plot_data, results_csv, run_experiment, summarize, summary_csv

CONFIG = """
[experiment]
env = reset-cliff
states = 8
actions = 3
horizon = 8
m = 20
seeds = 0-4
budgets = 200, 1000
algorithms = bc, oal, mbtail

[oal]
iterations = 100

[mbtail]
iterations = 200
bonus_scale = 0.1
"""

parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
parser.read_string(CONFIG)
cfg = config_from_parser(parser)
rows, timings = run_experiment(cfg, jobs=1)
print(summary_csv(summarize(rows)))

# %%
# plot-data turns results into a whitespace table for gnuplot.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "results.csv"
    path.write_text(results_csv(rows))
    print(plot_data(path.read_text()))
