"""
Sweeps from a configuration file
================================

The command line runs the same sweeps as the library.  A configuration
selects delays, the ``D`` grid as multiples of each floor, solver orders
and simulation settings; outputs are ``sweep.csv``, ``sweep.json`` and a
gnuplot-ready ``plot.dat``.
"""

# %%
import json
import tempfile
from pathlib import Path

from ncsrate import cli

config = {
    "delays": [0, 4],
    "D_grid": {"min_multiplier": 1.2, "max_multiplier": 30.0, "count": 4},
    "solver": {"n_q": 32},
    "simulation": {"enabled": True, "steps": 100_000, "seed": 7},
}
out = Path(tempfile.mkdtemp())
(out / "config.json").write_text(json.dumps(config))

# %%
# Equivalent shell call: ``ncsrate sweep --config config.json --out out --jobs 2``
code = cli.main(["sweep", "--config", str(out / "config.json"), "--out", str(out), "--jobs", "2"])
print("exit code", code)
print((out / "sweep.csv").read_text())
print((out / "plot.dat").read_text())
