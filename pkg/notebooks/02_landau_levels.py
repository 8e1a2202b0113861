"""
Lowest Landau level in the continuum
====================================

A weak periodic potential, field B = 4 and a Zeeman term that pushes the
spin-down levels up by B.  At E_F = B / 2 only the spin-up lowest Landau
level is filled, so IsDOS = B / 4 pi, SCh = 1/2 and the spin Streda slope
is 1 / 4 pi.
"""

# %%
import numpy as np

from stredalab import HamiltonianSpec
from stredalab.oracle import landau_reference
from stredalab.response import analyze

B = 4.0
spec = HamiltonianSpec(backend="continuum", half_width_L=3, points_per_cell=6, B1=B, B2=B,
                       zeeman_coupling=-0.5, potential_amplitudes=(0.1, 0.1))

# %%
an = analyze(spec, B, E_F=B / 2)
print("ranks per spin", an.gap.rank_per_block)
print("IsDOS %.5f  reference %.5f" % (an.markers.isdos, landau_reference(B, 1, 0)[0]))
print("Ch_up %.4f  Ch_down %.4f  SCh %.4f" % (an.markers.ch_up, an.markers.ch_down, an.markers.sch))

# %%
st = an.streda
print("dIsDOS/dB %.5f  SCh/2pi %.5f  contour %.5f  1/4pi %.5f"
      % (st.fd_derivative, st.sch_over_2pi, st.sigma_contour, 1 / (4 * np.pi)))
print("stage timings", {k: round(v, 2) for k, v in an.timings.items()})
