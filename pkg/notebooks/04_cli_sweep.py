"""
Plateau sweep through the command line
======================================

Writes a config, sweeps the field across the gap of the spin-flux lattice
and prints the spin Chern column.  Pass a directory as first argument to
keep the output.
"""

# %%
import csv
import sys
import tempfile
from pathlib import Path

from stredalab.cli import main

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
cfg = out / "sweep.ini"
cfg.write_text("""[model]
backend = tightbinding
half_width_L = 10
tb_spin_flux_offset = 1/3
tb_orbital_coupling = 1

[run]
fermi_energy = -1.5
output_dir = .
precision_digits = 8

[sweep]
B_start = -0.05
B_end = 0.05
steps = 5
""")
print("exit code", main(["sweep", str(cfg)]))

# %%
for row in csv.DictReader(open(out / "sweep.csv")):
    print(row["B"], row["sch"], row["fd_derivative"], row["sigma_contour"], row["gapped_flag"])
