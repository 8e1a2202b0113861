"""
Spin Chern marker and spin Streda slope on a spin-flux lattice
==============================================================

Spin up sees flux +1/3 per plaquette, spin down -1/3.  With the Fermi
level in the lowest gap each spin fills one Hofstadter band, so the
spin Chern number is 1 and the slope of the spin density with the field
equals SCh / 2 pi.
"""

# %%
import numpy as np

from stredalab import BulkWindow, HamiltonianSpec, build_hamiltonian, detect_gap, eigensolve, \
    fermi_projection
from stredalab.markers import chern_pair, marker_report
from stredalab.oracle import BlochGrid, fukui_hatsugai_chern
from stredalab.response import analyze

spec = HamiltonianSpec(backend="tightbinding", half_width_L=15, tb_spin_flux_offset=1 / 3)
H = build_hamiltonian(spec)
S = eigensolve(H)
gap = detect_gap(S, -1.5)
print("gap", gap.gap_lower, gap.gap_upper, "states below per spin", gap.rank_per_block)

# %%
# markers on the default bulk window
Pi = fermi_projection(S, gap)
W = BulkWindow.default(H.geometry)
print(marker_report(Pi, W).to_json(indent=1))

# %%
# the lattice Chern number of the lowest band, computed in k-space
print("k-space Chern number", fukui_hatsugai_chern(BlochGrid.hofstadter(1 / 3), 1))

# %%
# window shifts by one lattice site barely move the marker
for shift in [(0, 0), (1, 0), (0, 1), (1, 1)]:
    print(shift, chern_pair(Pi, W.shifted(shift))[0])

# %%
# three routes to the same number: field derivative, marker, contour formula
st = analyze(spec, 0.0, -1.5).streda
print("dIsDOS/dB %.6f  SCh/2pi %.6f  contour %.6f" % (st.fd_derivative, st.sch_over_2pi,
                                                      st.sigma_contour))
