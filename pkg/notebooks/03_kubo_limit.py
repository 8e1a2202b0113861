"""
Finite temperature and frequency Kubo sum
=========================================

On a flux-quantized torus the full trace divided by the area is the
trace per unit volume, so the Kubo sum can be compared directly with the
zero-temperature contour value of the open sample.  omega approaches 0
along t (1 - i), keeping Im omega < 0.
"""

# %%
from stredalab import BulkWindow, HamiltonianSpec, build_hamiltonian, eigensolve
from stredalab.response import KuboParams, kubo_evaluate, sigma_contour

open_spec = HamiltonianSpec(backend="tightbinding", half_width_L=15, tb_spin_flux_offset=1 / 3)
sigma0 = sigma_contour(open_spec, -1.5).value
print("contour value", sigma0)

# %%
torus = HamiltonianSpec(backend="tightbinding", half_width_L=15, tb_spin_flux_offset=1 / 3,
                        boundary="torus")
H = build_hamiltonian(torus)
S = eigensolve(H, mode="dense")
for t in (1e-1, 1e-2, 1e-3):
    k = kubo_evaluate(H, S, KuboParams(T=t, mu=-1.5, omega=t * (1 - 1j))).box
    print("T = omega = %.0e  Kubo %.7f%+.1ej  |diff| %.2e" % (t, k.real, k.imag, abs(k - sigma0)))

# %%
# the displayed prefactor gives the opposite sign
lit = kubo_evaluate(H, S, KuboParams(1e-2, -1.5, 1e-2 * (1 - 1j)), convention="literal").box
print("literal convention", lit)
