"""Independent references: lattice Chern numbers, Landau levels, random-matrix identities.

Nothing in here touches the real-space marker code; the Bloch Hamiltonians
are assembled from scratch in the Landau gauge A = (0, b x1), which has the
same orientation (curl A = b) as the symmetric gauge of the sample model.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.stats import unitary_group

from .spectral import (build_contour, detect_gap, double_commutator_T, eigensolve,
                       liouvillian_solve, liouvillian_spectral, offdiagonal_part)


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------- Fukui-Hatsugai

@dataclass
class BlochGrid:
    """Magnetic Bloch Hamiltonians H(k) of size q x q on an N1 x N2 grid.

    k1 runs over [0, 2 pi / q) and k2 over [0, 2 pi); ``factory`` must be
    periodic on that torus.
    """

    q: int
    shape: tuple[int, int]
    factory: Callable[[float, float], np.ndarray]
    flux: Fraction | None = None

    def __post_init__(self):
        if min(self.shape) < 6:
            raise OracleError("k-grid needs at least 6 points per direction")

    @classmethod
    def hofstadter(cls, flux, shape=(12, 12)) -> "BlochGrid":
        """Square lattice, hopping -1, flux 2 pi p/q per plaquette."""
        flux = Fraction(flux).limit_denominator(1000)
        p, q = flux.numerator, flux.denominator
        b = 2 * np.pi * p / q
        x = np.arange(q)

        def H(k1, k2):
            M = np.diag(-2 * np.cos(k2 - b * x)).astype(complex)
            for j in range(q):
                # hop x -> x + 1; the last one wraps with the Bloch factor exp(i k1 q)
                phase = np.exp(1j * k1 * q) if j == q - 1 else 1.0
                M[j, (j + 1) % q] += -phase
                M[(j + 1) % q, j] += -np.conj(phase)
            return M

        return cls(q, tuple(shape), H, flux)

    def kpoints(self):
        n1, n2 = self.shape
        return (2 * np.pi / self.q) * np.arange(n1) / n1, 2 * np.pi * np.arange(n2) / n2


def fukui_hatsugai(bloch: BlochGrid, bands_filled: int, det_tol: float = 1e-8):
    """(chern, rounding residual, smallest direct gap) of the lowest ``bands_filled`` bands.

    Lattice field strength from U(1) link variables of the filled-band
    frame, F = arg(U1(k) U2(k + e1) / (U1(k + e2) U2(k))).  With this
    orientation the result is the gap label t of r = q s + p t, i.e. the
    Streda count d n / d(flux quanta) of the filled bands.
    """
    if not 0 <= bands_filled <= bloch.q:
        raise OracleError("bands_filled outside 0..q")
    k1s, k2s = bloch.kpoints()
    n1, n2 = len(k1s), len(k2s)
    frames = np.empty((n1, n2, bloch.q, bands_filled), dtype=complex)
    gap = np.inf
    for a, k1 in enumerate(k1s):
        for c, k2 in enumerate(k2s):
            w, U = np.linalg.eigh(bloch.factory(k1, k2))
            if 0 < bands_filled < bloch.q:
                gap = min(gap, w[bands_filled] - w[bands_filled - 1])
            frames[a, c] = U[:, :bands_filled]
    if bands_filled == 0:
        return 0, 0.0, gap

    def link(A, B):
        d = np.linalg.det(A.conj().T @ B)
        if abs(d) < det_tol:
            raise OracleError("gap closes on the k-grid (vanishing link determinant)")
        return d / abs(d)

    U1 = np.empty((n1, n2), dtype=complex)
    U2 = np.empty((n1, n2), dtype=complex)
    for a in range(n1):
        for c in range(n2):
            U1[a, c] = link(frames[a, c], frames[(a + 1) % n1, c])
            U2[a, c] = link(frames[a, c], frames[a, (c + 1) % n2])
    F = np.angle(U1 * np.roll(U2, -1, axis=0) / (np.roll(U1, -1, axis=1) * U2))
    total = F.sum() / (2 * np.pi)
    ch = int(round(total))
    return ch, abs(total - ch), gap


def fukui_hatsugai_chern(bloch: BlochGrid, bands_filled: int) -> int:
    ch, res, gap = fukui_hatsugai(bloch, bands_filled)
    if res > 1e-6:
        raise OracleError(f"plaquette sum not integral (residual {res:.3g})")
    if gap < 1e-8:
        raise OracleError("gap closes on the k-grid")
    return ch


def diophantine_t(p: int, q: int, r: int) -> int:
    """t in r = q s + p t with |t| <= q / 2 (unique away from the central gap of even q)."""
    sols = [t for t in range(-(q // 2), q // 2 + 1) if (r - p * t) % q == 0]
    if len(sols) != 1:
        raise OracleError(f"no unique gap label for r={r}, p/q={p}/{q}")
    return sols[0]


def hofstadter_band_edges(flux, shape=(24, 24)) -> np.ndarray:
    """(q, 2) array of band minima and maxima sampled on the magnetic zone."""
    g = BlochGrid.hofstadter(flux, shape)
    k1s, k2s = g.kpoints()
    w = np.array([np.linalg.eigvalsh(g.factory(a, c)) for a in k1s for c in k2s])
    return np.column_stack([w.min(axis=0), w.max(axis=0)])


# ---------------------------------------------------------------- Landau

def landau_reference(B: float, nu_up: int, nu_down: int) -> tuple[float, float]:
    """(IsDOS, SCh) for nu_up / nu_down filled Landau levels; degeneracy B / 2 pi per unit area."""
    if B <= 0:
        raise OracleError("landau_reference needs B > 0")
    dnu = nu_up - nu_down
    return 0.5 * dnu * B / (2 * np.pi), 0.5 * dnu


# ---------------------------------------------------------------- random identities

@dataclass
class IdentityReport:
    dim: int
    seed: int
    liouvillian: float
    uniqueness: float
    double_commutator: float
    trace: float
    nodes: int

    def worst(self) -> float:
        return max(self.liouvillian, self.uniqueness, self.double_commutator, self.trace / self.dim)


def random_gapped(dim: int, rng: np.random.Generator, gap: float = 1.0, span: float = 3.0):
    """Random Hermitian matrix with spectrum split around 0 by ``gap``, plus two commuting observables.

    The observables are diagonal in a random basis, like two position
    operators; the global trace identity needs [A1, A2] = 0.
    """
    n_occ = int(rng.integers(1, dim)) if dim > 1 else 1
    lo = rng.uniform(-span, -gap / 2, n_occ)
    hi = rng.uniform(gap / 2, span, dim - n_occ)
    U = unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
    H = (U * np.concatenate([lo, hi])) @ U.conj().T
    H = 0.5 * (H + H.conj().T)
    W = unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
    a1, a2 = rng.uniform(-1, 1, (2, dim))
    A1 = (W * a1) @ W.conj().T
    A2 = (W * a2) @ W.conj().T
    return H, 0.5 * (A1 + A1.conj().T), 0.5 * (A2 + A2.conj().T)


def brute_force_identities(dim: int, seed: int, nodes: int = 128, retries: int = 5,
                           same: bool = False) -> IdentityReport:
    """Check the resolvent identities on a random gapped instance.

    (a) [H, C] = [A1, Pi] for C = (i/2pi) oint R A1_OD R;
    (b) C agrees with the spectral-basis off-diagonal solution;
    (c) -i [[Pi, A1], [Pi, A2]] = (Pi T Pi - Pi_perp T Pi_perp) / 2 pi for off-diagonal A_j;
    (d) Tr Pi [[Pi, A1], [Pi, A2]] Pi = 0.
    ``same=True`` uses A2 = A1.
    """
    if dim > 200:
        raise OracleError("brute_force_identities is meant for dim <= 200")
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        H, A1, A2 = random_gapped(dim, rng)
        if same:
            A2 = A1
        spec = eigensolve(H)
        ev = spec.eigenvalues
        if np.min(np.abs(ev)) > 0.25:
            break
    else:
        raise OracleError("could not draw a gapped instance")
    gap = detect_gap(spec, 0.0)
    contour = build_contour(gap, spec, nodes=nodes)
    V = spec.blocks[0].eigenvectors
    occ = spec.blocks[0].eigenvalues < 0
    Pi = V[:, occ] @ V[:, occ].conj().T
    Q = np.eye(dim) - Pi

    C = liouvillian_solve(H, contour, A1, Pi)
    res_a = np.abs(H @ C - C @ H - (A1 @ Pi - Pi @ A1)).max()
    C_spec = liouvillian_spectral(spec, A1, 0.0)
    res_b = np.abs(C - C_spec).max()

    O1, O2 = offdiagonal_part(A1, Pi), offdiagonal_part(A2, Pi)
    K1, K2 = Pi @ O1 - O1 @ Pi, Pi @ O2 - O2 @ Pi
    lhs = -1j * (K1 @ K2 - K2 @ K1)
    T = double_commutator_T(H, contour, O1, O2)
    rhs = (Pi @ T @ Pi - Q @ T @ Q) / (2 * np.pi)
    res_c = np.abs(lhs - rhs).max()

    K1, K2 = Pi @ A1 - A1 @ Pi, Pi @ A2 - A2 @ Pi
    res_d = abs(np.trace(Pi @ (K1 @ K2 - K2 @ K1) @ Pi))
    return IdentityReport(dim, seed, float(res_a), float(res_b), float(res_c), float(res_d),
                          len(contour))
