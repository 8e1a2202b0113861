"""Spin Streda formula toolkit: finite-sample Bloch-Landau-Pauli models, spectral
projections, real-space markers and spin Hall response."""

from .markers import (BulkWindow, MarkerError, MarkerReport, chern_marker, chern_pair, isdos,
                      kernel_decay_profile, marker_report, spin_chern_marker, spin_decompose,
                      time_reversal_check, trace_per_unit_volume)
from .model import (Geometry, HamiltonianSpec, ModelError, OperatorMatrix, build_hamiltonian,
                    covariance_check, momentum_operators, position_operators, spin_operator,
                    velocity_operators)
from .oracle import (BlochGrid, brute_force_identities, diophantine_t, fukui_hatsugai_chern,
                     landau_reference)
from .response import (KuboParams, StredaReport, analyze, kubo_sigma, sigma_zero_limit,
                       streda_derivative, verify_spin_streda)
from .spectral import (Contour, EigenCache, GapError, GapInfo, Projection, SpectralError,
                       Spectrum, build_contour, detect_gap, eigensolve, fermi_projection,
                       liouvillian_solve, resolvent_apply, riesz_projection)

__version__ = "0.1.0"
